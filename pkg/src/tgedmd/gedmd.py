"""Dense reference pipeline on the full product basis.

Everything here materializes the full N = prod(n_k) dimensional basis, so
it only scales to moderate N, but it is the oracle the tensor-train route
is verified against: generator applications are assembled from full
product-rule gradients and Hessians (not from the per-mode splitting the
TT cores use), and the reduced matrices follow the matrix whitening
algorithm directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import eval_mode, eval_mode_d1, eval_mode_d2
from .errors import EmptySubspaceError, IllConditionedError

COND_LIMIT = 1e14


def _kron_rows(mats):
    """Row-wise Kronecker chain of per-mode (n_k, m) matrices -> (N, m)."""
    out = mats[0]
    for v in mats[1:]:
        out = (out[:, None, :] * v[None, :, :]).reshape(-1, v.shape[1])
    return out


def _mode_tables(basis, X):
    """Per-mode value/derivative tables at the (reduced) coordinates."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = basis.coordinate_map.xi(X) if basis.coordinate_map is not None else X
    val = [eval_mode(basis, k, Y[:, k]) for k in range(basis.order)]
    d1 = [eval_mode_d1(basis, k, Y[:, k]) for k in range(basis.order)]
    d2 = [eval_mode_d2(basis, k, Y[:, k]) for k in range(basis.order)]
    return val, d1, d2


def product_basis_matrix(basis, X):
    """Full data matrix (N, m) of all basis products at all samples."""
    val, _, _ = _mode_tables(basis, X)
    return _kron_rows(val)


def product_gradient_matrix(basis, X):
    """Gradients of all products w.r.t. the (reduced) coordinates: (N, D, m)."""
    val, d1, _ = _mode_tables(basis, X)
    p = basis.order
    N = int(np.prod([v.shape[0] for v in val]))
    m = val[0].shape[1]
    out = np.zeros((N, p, m))
    for i in range(p):
        out[:, i, :] = _kron_rows([d1[k] if k == i else val[k] for k in range(p)])
    return out


def _map_fields(basis, X, model):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    b = model.drift(X)
    sig = model.diffusion(X)
    a = model.a(X)
    cm = basis.coordinate_map
    if cm is None:
        return b, sig, a, np.zeros_like(X)
    jac = cm.jacobian(X)
    b_eff = np.einsum("mki,mi->mk", jac, b)
    sig_eff = np.einsum("mki,mis->mks", jac, sig)
    a_eff = np.einsum("mki,mij,mlj->mkl", jac, a, jac)
    hess = cm.hessian_contract(X, a)
    return b_eff, sig_eff, a_eff, hess


def generator_apply_matrix(basis, X, model):
    """Generator applied to every basis product: (N, m).

    Assembled from the full product-rule expansion: drift times first
    derivatives, half the diffusion matrix contracted with the full
    Hessian (diagonal and mixed second derivatives), plus the map-Hessian
    correction when the basis lives on reduced variables.
    """
    val, d1, d2 = _mode_tables(basis, X)
    b_eff, _, a_eff, hess = _map_fields(basis, X, model)
    p = basis.order

    def replaced(repl):
        return _kron_rows([repl.get(k, val[k]) for k in range(p)])

    out = np.zeros((int(np.prod([v.shape[0] for v in val])), val[0].shape[1]))
    for i in range(p):
        grad_i = replaced({i: d1[i]})
        out += (b_eff[:, i] + 0.5 * hess[:, i]) * grad_i
        out += 0.5 * a_eff[:, i, i] * replaced({i: d2[i]})
        for j in range(i + 1, p):
            out += a_eff[:, i, j] * replaced({i: d1[i], j: d1[j]})
    return out


def gradient_sigma_matrix(basis, X, model):
    """dPsi entries: gradient of each product projected on diffusion
    columns, (N, s, m); chain-ruled through the coordinate map if any."""
    _, sig_eff, _, _ = _map_fields(basis, X, model)
    grad = product_gradient_matrix(basis, X)  # (N, D, m)
    return np.einsum("nim,mis->nsm", grad, sig_eff)


def generator_on_product(basis, idx, x, model):
    """Generator applied to one basis product at one point (scalar oracle).

    Literal double loop over coordinate pairs; kept free of any vectorized
    assembly so it can arbitrate between the implementations above.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    b_eff, _, a_eff, hess = _map_fields(basis, x, model)
    b_eff, a_eff, hess = b_eff[0], a_eff[0], hess[0]
    Y = basis.coordinate_map.xi(x)[0] if basis.coordinate_map is not None else x[0]
    p = basis.order
    fs = [basis.modes[k][idx[k]] for k in range(p)]
    vals = [float(fs[k].value(Y[k])) for k in range(p)]
    der1 = [float(fs[k].d1(Y[k])) for k in range(p)]
    der2 = [float(fs[k].d2(Y[k])) for k in range(p)]

    def prod_except(skip):
        out = 1.0
        for k in range(p):
            if k not in skip:
                out *= vals[k]
        return out

    total = 0.0
    for i in range(p):
        total += (b_eff[i] + 0.5 * hess[i]) * der1[i] * prod_except({i})
        total += 0.5 * a_eff[i, i] * der2[i] * prod_except({i})
        for j in range(p):
            if j != i:
                total += 0.5 * a_eff[i, j] * der1[i] * der1[j] * prod_except({i, j})
    return total


# -- empirical estimators --------------------------------------------------------


def empirical_C(psi, weights=None):
    """(1/m) Psi W Psi^T with W = diag(weights) (identity when absent)."""
    m = psi.shape[1]
    if weights is None:
        return (psi @ psi.T) / m
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return (psi * w) @ psi.T / m


def empirical_A_nonrev(psi, lpsi, weights=None):
    """(1/m) Psi W (L Psi)^T."""
    if psi.shape != lpsi.shape:
        raise ValueError("data and generator-data shapes differ")
    m = psi.shape[1]
    if weights is None:
        return (psi @ lpsi.T) / m
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return (psi * w) @ lpsi.T / m


def empirical_A_rev(dpsi, weights=None):
    """-(1/2m) dPsi W dPsi^T, the first-derivative-only estimator.

    dpsi has shape (N, s, m); the weight of sample l multiplies its whole
    s-column block.  Symmetric negative semidefinite by construction.
    """
    N, s, m = dpsi.shape
    flat = dpsi.transpose(0, 2, 1).reshape(N, m * s)
    if weights is None:
        return -(flat @ flat.T) / (2 * m)
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    wflat = np.repeat(w, s)
    return -(flat * wflat) @ flat.T / (2 * m)


# -- whitening reduction (the matrix algorithm) -----------------------------------


@dataclass(frozen=True)
class DenseReducedModel:
    """Truncated SVD factors of the data matrix plus the reduced generator."""

    U: np.ndarray  # (N, r)
    sigma: np.ndarray  # (r,)
    V: np.ndarray  # (m, r)
    M: np.ndarray  # (r, r)
    mode: str


def _truncate_svd(psi_w, rank, epsilon):
    m = psi_w.shape[1]
    u, s, vt = np.linalg.svd(psi_w, full_matrices=False)
    numerical = s > 1e-14 * s[0] if s.size and s[0] > 0 else np.zeros_like(s, bool)
    if epsilon is not None:
        keep = s >= np.sqrt(m) * epsilon
        keep &= numerical
        r = int(np.count_nonzero(keep))
        if r == 0:
            raise EmptySubspaceError(0, float(np.sqrt(m) * epsilon))
    else:
        r = int(rank) if rank is not None else int(np.count_nonzero(numerical))
        if r > np.count_nonzero(numerical):
            raise ValueError(
                f"requested rank {r} exceeds numerical rank "
                f"{np.count_nonzero(numerical)}"
            )
    return u[:, :r], s[:r], vt[:r].T


def amuse(psi, gen_data, mode, rank=None, epsilon=None, weights=None):
    """Whitened reduced generator matrix from dense data matrices.

    Parameters
    ----------
    psi : (N, m) data matrix
    gen_data : (N, m) generator applications for mode "nonrev",
        (N, s, m) sigma-projected gradients for mode "rev"
    mode : {"nonrev", "rev"}
    rank, epsilon : truncation by fixed rank r, or by the threshold rule
        keeping singular values >= sqrt(m) * epsilon (exactly one of the
        two, or neither for the full numerical rank)
    weights : optional positive importance weights; the SVD is then taken
        of Psi W^{1/2} and the estimators re-weighted accordingly
    """
    m = psi.shape[1]
    sqrt_w = None
    psi_w = psi
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be nonnegative with a positive sum")
        # Mean-one gauge: makes the result exactly invariant to the unknown
        # constant in the importance ratio (see algorithm.normalize_weights).
        w = w * (m / w.sum())
        sqrt_w = np.sqrt(w)
        psi_w = psi * sqrt_w
    U, s, V = _truncate_svd(psi_w, rank, epsilon)
    if s[0] / s[-1] > COND_LIMIT:
        raise IllConditionedError(
            f"whitening condition number {s[0] / s[-1]:.2e} exceeds {COND_LIMIT:.0e}"
        )
    s_inv = 1.0 / s
    if mode == "nonrev":
        lpsi = gen_data
        if sqrt_w is None:
            M = V.T @ lpsi.T @ U * s_inv
        else:
            M = (V.T * sqrt_w) @ lpsi.T @ U * s_inv
    elif mode == "rev":
        dpsi = gen_data
        G = np.tensordot(U.T, dpsi, axes=(1, 0))  # (r, s, m)
        if sqrt_w is not None:
            G = G * sqrt_w
        flat = G.reshape(G.shape[0], -1)
        M = -0.5 * (s_inv[:, None] * (flat @ flat.T) * s_inv)
        M = 0.5 * (M + M.T)  # suppress roundoff asymmetry
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return DenseReducedModel(U=U, sigma=s, V=V, M=M, mode=mode)


def galerkin_eigenvalues(C, A, n_ev=None):
    """Eigenvalues of C^{-1} A sorted by descending real part (oracle use)."""
    vals = np.linalg.eigvals(np.linalg.solve(C, A))
    vals = vals[np.argsort(-vals.real)]
    return vals if n_ev is None else vals[:n_ev]


def dense_cost_estimate(N, m, r):
    """The three additive cost terms of the dense pipeline, unit constants:
    SVD of the data matrix, reduced-matrix assembly, diagonalization."""
    return (float(N) * m**2, float(m) * (N * r + r**2), float(r) ** 3)
