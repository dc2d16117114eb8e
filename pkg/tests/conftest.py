import numpy as np
import pytest

from tgedmd import ProductBasis, TensorTrain, gaussian_mode, monomial_mode, ou_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_tt(rng, mode_sizes, ranks):
    """Random train with the given rank chain (len(mode_sizes) + 1 ranks)."""
    cores = tuple(
        rng.standard_normal((ranks[k], mode_sizes[k], ranks[k + 1]))
        for k in range(len(mode_sizes))
    )
    return TensorTrain(cores)


def random_gaussian_basis(rng, p, max_modes=3, coordinate_map=None):
    modes = tuple(
        gaussian_mode(-1.0, 1.0, int(rng.integers(2, max_modes + 1)), float(rng.uniform(0.3, 0.8)))
        for _ in range(p)
    )
    return ProductBasis(modes, coordinate_map=coordinate_map)


def small_ou_instance(rng, p=None, max_m=60):
    """Random (basis, model, samples, weights) tuple for equivalence tests."""
    p = int(rng.integers(2, 4)) if p is None else p
    basis = random_gaussian_basis(rng, p)
    model = ou_model(p, rng.uniform(0.5, 2.0, p))
    m = int(rng.integers(20, max_m + 1))
    X = rng.standard_normal((m, p))
    return basis, model, X


def quadratic_coordinate_map():
    """xi(x) = (x1^2, x2) on R^2; analytic Jacobian and Hessian contraction."""
    from tgedmd import CoordinateMap

    def xi(X):
        return np.stack([X[:, 0] ** 2, X[:, 1]], axis=1)

    def jac(X):
        m = len(X)
        J = np.zeros((m, 2, 2))
        J[:, 0, 0] = 2 * X[:, 0]
        J[:, 1, 1] = 1.0
        return J

    def hess_contract(X, a_vals):
        out = np.zeros((len(X), 2))
        out[:, 0] = 2.0 * a_vals[:, 0, 0]
        return out

    return CoordinateMap(2, 2, xi, jac, hess_contract, name="square-first")
