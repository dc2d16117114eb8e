"""Data tensors and per-sample generator trains.

Three tensor families are produced here, all in exact TT form:

* the order-(p+1) data tensor of all product-basis evaluations at all
  samples, stored in compressed diagonal form (its interior cores are
  diagonal in the rank indices, so memory stays O(m n_k));
* per-sample gradient trains ("gradient" structure, ranks d+1 with a
  trailing coupling dimension), used by the reversible estimator;
* per-sample generator-application trains ("generator" structure, ranks
  d+2), used by the non-reversible estimator.

Per-sample trains are never stored for all samples at once; the packed
representation below holds only the per-mode coefficient arrays (basis
values, generator applications, sigma-projected derivatives), from which
single trains are materialized on demand and blocks are contracted in a
vectorized sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError
from .tt import DENSE_CAP, TensorTrain


# -- data tensor ----------------------------------------------------------------


@dataclass(frozen=True)
class DataTensorTT:
    """Compressed TT of the (n_1, ..., n_p, m) tensor of basis products.

    mode_values[k] has shape (n_k, m); the implied cores are: first core
    (1, n_1, m) stacking the mode-1 value columns, interior cores
    (m, n_k, m) diagonal in the rank indices, and a final (m, m, 1)
    selector whose row l is sqrt(w_l) e_l.
    """

    mode_values: tuple
    weights: np.ndarray | None = None

    def __post_init__(self):
        vals = tuple(np.ascontiguousarray(v, dtype=np.float64) for v in self.mode_values)
        m = vals[0].shape[1]
        if any(v.ndim != 2 or v.shape[1] != m for v in vals):
            raise ValueError("mode value matrices must share the sample count")
        for v in vals:
            v.flags.writeable = False
        object.__setattr__(self, "mode_values", vals)
        if self.weights is not None:
            w = np.ascontiguousarray(self.weights, dtype=np.float64)
            # Zero weights are allowed: they remove a sample's contribution
            # exactly (importance ratios can underflow at extreme potential
            # values).  Negative or all-zero weights are not.
            if w.shape != (m,) or np.any(w < 0) or not np.any(w > 0):
                raise ValueError("weights must be nonnegative with at least one positive entry")
            w.flags.writeable = False
            object.__setattr__(self, "weights", w)

    @property
    def order(self):
        return len(self.mode_values) + 1

    @property
    def m(self):
        return self.mode_values[0].shape[1]

    @property
    def mode_sizes(self):
        return tuple(v.shape[0] for v in self.mode_values) + (self.m,)


def data_tensor(basis, X, weights=None):
    """Evaluate the data tensor for samples X (m, d) in compressed form."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = basis.coordinate_map.xi(X) if basis.coordinate_map is not None else X
    from .basis import eval_mode

    vals = tuple(eval_mode(basis, k, Y[:, k]) for k in range(basis.order))
    return DataTensorTT(vals, weights)


def data_tensor_train(dt, cap=DENSE_CAP):
    """Materialize the explicit Eq.-style cores (test use; capacity capped)."""
    m = dt.m
    p = len(dt.mode_values)
    sizes = [dt.mode_values[0].shape[0] * m]
    sizes += [m * v.shape[0] * m for v in dt.mode_values[1:]]
    sizes += [m * m]
    if max(sizes) > cap:
        raise CapacityError("materializing a diagonal core would exceed the cap")
    cores = [dt.mode_values[0][None, :, :]]
    for v in dt.mode_values[1:]:
        n = v.shape[0]
        core = np.zeros((m, n, m))
        core[np.arange(m), :, np.arange(m)] = v.T
        cores.append(core)
    w = np.ones(m) if dt.weights is None else dt.weights
    last = np.zeros((m, m, 1))
    last[np.arange(m), np.arange(m), 0] = np.sqrt(w)
    cores.append(last)
    return TensorTrain(tuple(cores))


def dense_data_tensor(dt, cap=DENSE_CAP):
    """Direct product evaluation into an (n_1, ..., n_p, m) array."""
    shape = dt.mode_sizes
    if int(np.prod([float(s) for s in shape])) > cap:
        raise CapacityError("dense data tensor exceeds the cap")
    m = dt.m
    out = np.ones((1, m))
    for v in dt.mode_values:
        out = (out[:, None, :] * v[None, :, :]).reshape(-1, m)
    if dt.weights is not None:
        out = out * np.sqrt(dt.weights)
    full = np.zeros(shape)
    idx = np.arange(m)
    full.reshape(-1, m)[:, idx] = out
    return full


# -- per-mode generator ingredients ---------------------------------------------


@dataclass(frozen=True)
class GeneratorIngredients:
    """Everything mode-local that the generator trains need, for all samples.

    val[k], d1[k], d2[k], lterm[k] : (m, n_k)
    grad_sigma[k] : (m, n_k, s) rows d/dy_k psi . (sigma row k), chain-ruled
    a_eff : (m, D, D) diffusion matrix in the (reduced) variables
    """

    val: tuple
    d1: tuple
    d2: tuple
    lterm: tuple
    grad_sigma: tuple
    a_eff: np.ndarray
    coupling_dim: int
    reduced_dim: int


def generator_ingredients(basis, X, model):
    """Evaluate all per-mode ingredient arrays, applying the coordinate-map
    chain rule when the basis lives on reduced variables."""
    from .basis import eval_mode, eval_mode_d1, eval_mode_d2

    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    m = len(X)
    b = model.drift(X)
    sig = model.diffusion(X)
    a = model.a(X)
    cm = basis.coordinate_map
    if cm is None:
        Y = X
        sig_eff = sig
        b_eff = b
        a_eff = a
        hess_term = np.zeros_like(Y)
    else:
        Y = cm.xi(X)
        jac = cm.jacobian(X)
        sig_eff = np.einsum("mki,mis->mks", jac, sig)
        b_eff = np.einsum("mki,mi->mk", jac, b)
        a_eff = np.einsum("mki,mij,mlj->mkl", jac, a, jac)
        hess_term = cm.hessian_contract(X, a)
    val, d1, d2, lterm, gsig = [], [], [], [], []
    for k in range(basis.order):
        y = Y[:, k]
        v = eval_mode(basis, k, y).T
        g1 = eval_mode_d1(basis, k, y).T
        g2 = eval_mode_d2(basis, k, y).T
        val.append(v)
        d1.append(g1)
        d2.append(g2)
        lterm.append(
            b_eff[:, k, None] * g1
            + 0.5 * a_eff[:, k, k, None] * g2
            + 0.5 * hess_term[:, k, None] * g1
        )
        gsig.append(g1[:, :, None] * sig_eff[:, k, None, :])
    return GeneratorIngredients(
        val=tuple(val),
        d1=tuple(d1),
        d2=tuple(d2),
        lterm=tuple(lterm),
        grad_sigma=tuple(gsig),
        a_eff=a_eff,
        coupling_dim=sig.shape[2],
        reduced_dim=Y.shape[1],
    )


# -- packed per-sample trains ----------------------------------------------------


@dataclass(frozen=True)
class CoreFibers:
    """One TT core position for all samples at once.

    Each fiber is (row, col, coeff) with coeff of shape (m, n_k): the core
    of sample l has coeff[l] at rank position (row, col) and structural
    zeros elsewhere.  Fibers whose coefficients vanish identically are
    omitted.
    """

    shape: tuple
    n: int
    fibers: tuple


@dataclass(frozen=True)
class PackedTrains:
    """All m per-sample trains of one structure, stored by coefficients."""

    structure: str  # "gradient" | "generator"
    cores: tuple  # p CoreFibers
    m: int
    trailing_rank: int


def _fibers(shape, n, entries):
    kept = tuple(
        (r, c, np.ascontiguousarray(coef)) for r, c, coef in entries if np.any(coef)
    )
    return CoreFibers(shape=shape, n=n, fibers=kept)


def pack_generator_trains(ing):
    """Per-sample trains of generator applications, ranks all d + 2.

    Interior core pattern (rank indices): (0,0) basis value, (0,1)
    generator application, (0,2+i) sigma-projected derivative, (1,1)
    value, (2+i,1) sigma-projected derivative, (2+i,2+i) value.
    """
    p = len(ing.val)
    d = ing.coupling_dim
    r = d + 2
    m = ing.val[0].shape[0]
    cores = []
    if p == 1:
        cores.append(_fibers((1, 1), ing.val[0].shape[1], [(0, 0, ing.lterm[0])]))
        return PackedTrains("generator", tuple(cores), m, 1)
    for k in range(p):
        n = ing.val[k].shape[1]
        v, lt, gs = ing.val[k], ing.lterm[k], ing.grad_sigma[k]
        if k == 0:
            entries = [(0, 0, v), (0, 1, lt)]
            entries += [(0, 2 + i, gs[:, :, i]) for i in range(d)]
            cores.append(_fibers((1, r), n, entries))
        elif k == p - 1:
            entries = [(0, 0, lt), (1, 0, v)]
            entries += [(2 + i, 0, gs[:, :, i]) for i in range(d)]
            cores.append(_fibers((r, 1), n, entries))
        else:
            entries = [(0, 0, v), (0, 1, lt), (1, 1, v)]
            entries += [(0, 2 + i, gs[:, :, i]) for i in range(d)]
            entries += [(2 + i, 1, gs[:, :, i]) for i in range(d)]
            entries += [(2 + i, 2 + i, v) for i in range(d)]
            cores.append(_fibers((r, r), n, entries))
    return PackedTrains("generator", tuple(cores), m, 1)


def pack_gradient_trains(ing):
    """Per-sample gradient trains, ranks d + 1 with trailing rank d.

    Mode k depends on (reduced) coordinate k alone, so the derivative row
    of core k populates only channel k; the remaining channels carry the
    pass-through value diagonal.  Component i of the gradient is read off
    the trailing rank index.
    """
    p = len(ing.val)
    D = ing.reduced_dim
    m = ing.val[0].shape[0]
    cores = []
    if p == 1:
        entries = [(0, i, ing.d1[0] if i == 0 else np.zeros_like(ing.d1[0])) for i in range(D)]
        cores.append(_fibers((1, D), ing.val[0].shape[1], entries))
        return PackedTrains("gradient", tuple(cores), m, D)
    for k in range(p):
        n = ing.val[k].shape[1]
        v, g1 = ing.val[k], ing.d1[k]
        if k == 0:
            entries = [(0, 0, v)]
            entries += [(0, 1 + i, g1 if i == k else np.zeros_like(g1)) for i in range(D)]
            cores.append(_fibers((1, D + 1), n, entries))
        elif k == p - 1:
            entries = [(0, i, g1 if i == k else np.zeros_like(g1)) for i in range(D)]
            entries += [(1 + i, i, v) for i in range(D)]
            cores.append(_fibers((D + 1, D), n, entries))
        else:
            entries = [(0, 0, v)]
            entries += [(0, 1 + i, g1 if i == k else np.zeros_like(g1)) for i in range(D)]
            entries += [(1 + i, 1 + i, v) for i in range(D)]
            cores.append(_fibers((D + 1, D + 1), n, entries))
    return PackedTrains("gradient", tuple(cores), m, D)


def sample_train_cores(packed, l):
    """Materialize the order-p cores of sample l from the packed fibers."""
    cores = []
    for cf in packed.cores:
        core = np.zeros((cf.shape[0], cf.n, cf.shape[1]))
        for r, c, coef in cf.fibers:
            core[r, :, c] = coef[l]
        cores.append(core)
    return cores


# -- single-point train constructors (the contract-level API) --------------------


@dataclass(frozen=True)
class GeneratorTrain:
    """A per-sample TT plus the structure tag the sparse contraction uses."""

    train: TensorTrain
    structure: str


def nabla_psi_train(basis, x, absorb=None):
    """Gradient train at one point, as an order-(p+1) tensor train.

    The trailing mode indexes the gradient component (size D); the final
    core is the identity selector, or ``absorb`` (a (D, s) matrix, e.g. the
    diffusion) when given.  Derivatives are taken with respect to the
    reduced variables when the basis carries a coordinate map.
    """
    from .sde import SdeModel

    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    dim = x.shape[1]
    dummy = SdeModel(
        dim=dim,
        drift=lambda X: np.zeros_like(X),
        diffusion=lambda X: np.zeros((len(X), dim, 1)),
        name="gradient-only",
    )
    ing = generator_ingredients(basis, x, dummy)
    packed = pack_gradient_trains(ing)
    cores = sample_train_cores(packed, 0)
    D = packed.trailing_rank
    if absorb is None:
        selector = np.eye(D).reshape(D, D, 1)
    else:
        absorb = np.asarray(absorb, dtype=np.float64)
        if absorb.shape[0] != D:
            raise ValueError(f"absorb matrix must have {D} rows")
        selector = absorb.reshape(D, absorb.shape[1], 1)
    cores.append(selector)
    return GeneratorTrain(TensorTrain(tuple(cores)), "gradient")


def l_psi_train(basis, x, model):
    """Generator-application train at one point (order p, ranks d + 2)."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    ing = generator_ingredients(basis, x, model)
    packed = pack_generator_trains(ing)
    return GeneratorTrain(TensorTrain(tuple(sample_train_cores(packed, 0))), "generator")


def structural_zero_audit(gen_train):
    """True when every entry outside the structure's sparsity pattern is 0.

    Generator-structure cores allow the first row, the (1,1) diagonal
    entry, the second column, and the pass-through diagonal; gradient
    cores allow the first row and the shifted value diagonal, and the
    final selector core of a gradient train is unconstrained by design.
    """
    cores = gen_train.train.cores
    structure = gen_train.structure
    p = len(cores)
    for k, core in enumerate(cores):
        s0, _, s1 = core.shape
        allowed = np.zeros((s0, s1), dtype=bool)
        first, last = k == 0, k == p - 1
        if structure == "generator":
            if first:
                allowed[0, :] = True
            elif last:
                allowed[:, 0] = True
            else:
                allowed[0, :] = True
                allowed[1:, 1] = True
                for i in range(s0 - 2):
                    allowed[2 + i, 2 + i] = True
        elif structure == "gradient":
            if last:
                allowed[:, :] = True  # identity / absorbed-sigma selector
            elif first:
                allowed[0, :] = True
            elif k == p - 2:
                allowed[0, :] = True
                for i in range(s1):
                    allowed[1 + i, i] = True
            else:
                allowed[0, :] = True
                for i in range(s0 - 1):
                    allowed[1 + i, 1 + i] = True
        else:
            raise ValueError(f"unknown structure {structure!r}")
        outside = np.abs(core).sum(axis=1) * (~allowed)
        if np.any(outside > 0):
            return False
    return True
