"""Tensor trains and their basic algebra.

A tensor train (TT) stores an order-p tensor as a chain of order-3 cores,
core k having shape (r_{k-1}, n_k, r_k).  Boundary ranks r_0, r_p are
usually 1; values > 1 are allowed and encode a family of r_0 * r_p tensors
(one per pair of boundary indices).  All operations here are pure; core
arrays are frozen at construction, so values can be shared across threads.

Sign caveat: factors produced by SVD/QR are unique only up to column signs,
so individual core entries of orthonormalized trains are convention
dependent.  Only sign-invariant quantities (dense values, Gram residuals,
contractions) are contractual.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError

DENSE_CAP = 10**7

# Singular values below RANK_TOL * s_max count as numerical zeros; dropping
# them here protects every downstream inverse of the singular spectrum.
RANK_TOL = 1e-12


@dataclass(frozen=True)
class OpCounter:
    """Opt-in accumulator for floating-point multiply counts.

    Passed by the caller; contraction itself keeps no global state.
    """

    counts: dict = field(default_factory=lambda: {"multiplies": 0})

    @property
    def multiplies(self):
        return self.counts["multiplies"]

    def add(self, n):
        self.counts["multiplies"] += int(n)


def _freeze(core):
    out = np.ascontiguousarray(core, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TensorTrain:
    """Immutable chain of order-3 cores with consistent rank bookkeeping."""

    cores: tuple
    is_zero: bool = False

    def __post_init__(self):
        if len(self.cores) == 0:
            raise ValueError("a tensor train needs at least one core")
        cores = tuple(_freeze(c) for c in self.cores)
        object.__setattr__(self, "cores", cores)
        for k, core in enumerate(cores):
            if core.ndim != 3:
                raise ValueError(f"core {k} must have 3 axes, got {core.ndim}")
            if min(core.shape) < 1:
                raise ValueError(f"core {k} has a zero dimension {core.shape}")
            if k > 0 and cores[k - 1].shape[2] != core.shape[0]:
                raise ValueError(
                    f"rank chain broken between cores {k - 1} and {k}: "
                    f"{cores[k - 1].shape} -> {core.shape}"
                )

    @property
    def order(self):
        return len(self.cores)

    @property
    def mode_sizes(self):
        return tuple(core.shape[1] for core in self.cores)

    @property
    def ranks(self):
        return (self.cores[0].shape[0],) + tuple(c.shape[2] for c in self.cores)

    def __repr__(self):
        return f"TensorTrain(modes={self.mode_sizes}, ranks={self.ranks})"


def zero_train(mode_sizes):
    """Explicit zero tensor with all ranks 1 and the zero flag set."""
    cores = [np.zeros((1, n, 1)) for n in mode_sizes]
    return TensorTrain(tuple(cores), is_zero=True)


def unfold(core):
    """Mode-2 unfolding (r_prev * n, r_next), left-rank major."""
    r0, n, r1 = core.shape
    return core.reshape(r0 * n, r1)


def entry(t, idx):
    """Evaluate one tensor entry as the 1x1 product of core slices.

    Requires both boundary ranks equal to 1.  Indices are 0-based.
    """
    ranks = t.ranks
    if ranks[0] != 1 or ranks[-1] != 1:
        raise ValueError(f"entry() needs boundary ranks 1, got {ranks[0]}, {ranks[-1]}")
    if len(idx) != t.order:
        raise ValueError(f"index length {len(idx)} != order {t.order}")
    for k, (i, n) in enumerate(zip(idx, t.mode_sizes)):
        if not 0 <= i < n:
            raise IndexError(f"index {i} out of range for mode {k} of size {n}")
    if t.is_zero:
        return 0.0
    v = t.cores[0][:, idx[0], :]
    for k in range(1, t.order):
        v = v @ t.cores[k][:, idx[k], :]
    return float(v[0, 0])


def to_dense(t, cap=DENSE_CAP):
    """Materialize the full array (n_1, ..., n_p), or (..., r_p) if r_p > 1.

    The leading rank must be 1.  Raises CapacityError above ``cap`` entries.
    """
    if t.ranks[0] != 1:
        raise ValueError("to_dense() needs leading rank 1")
    size = int(np.prod([float(n) for n in t.mode_sizes]) * t.ranks[-1])
    if size > cap:
        raise CapacityError(f"dense size {size} exceeds cap {cap}")
    out = t.cores[0][0]  # (n_1, r_1)
    for core in t.cores[1:]:
        out = np.tensordot(out, core, axes=(-1, 0))
    if t.ranks[-1] == 1:
        out = out[..., 0]
    return out


def rank_one(factors):
    """TT with all interior ranks 1 whose dense form is the outer product."""
    if len(factors) == 0:
        raise ValueError("rank_one() needs at least one factor")
    cores = []
    for v in factors:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("rank-one factors must be vectors")
        cores.append(v.reshape(1, -1, 1))
    return TensorTrain(tuple(cores))


def tt_sum(a, b):
    """Elementwise sum; interior ranks add by block-diagonal concatenation."""
    if a.order != b.order or a.mode_sizes != b.mode_sizes:
        raise ValueError(
            f"summand shapes differ: {a.mode_sizes} vs {b.mode_sizes}"
        )
    if a.ranks[0] != b.ranks[0] or a.ranks[-1] != b.ranks[-1]:
        raise ValueError(
            f"boundary ranks differ: {a.ranks[0]},{a.ranks[-1]} vs "
            f"{b.ranks[0]},{b.ranks[-1]}"
        )
    p = a.order
    if p == 1:
        return TensorTrain((a.cores[0] + b.cores[0],))
    cores = []
    for k in range(p):
        ca, cb = a.cores[k], b.cores[k]
        if k == 0:
            cores.append(np.concatenate([ca, cb], axis=2))
        elif k == p - 1:
            cores.append(np.concatenate([ca, cb], axis=0))
        else:
            ra0, n, ra1 = ca.shape
            rb0, _, rb1 = cb.shape
            block = np.zeros((ra0 + rb0, n, ra1 + rb1))
            block[:ra0, :, :ra1] = ca
            block[ra0:, :, ra1:] = cb
            cores.append(block)
    return TensorTrain(tuple(cores))


def left_orthonormalize(t, tol=RANK_TOL):
    """Left-to-right sweep making every core but the last left-orthonormal.

    Uses per-core SVDs; singular values below ``tol * s_max`` are dropped,
    so rank-deficient cores come out at their numerical rank.  The
    represented tensor is unchanged (to ~1e-12 relative).  If the whole
    tensor is numerically zero the explicit zero train is returned.
    """
    if t.ranks[0] != 1:
        raise ValueError("left_orthonormalize() needs leading rank 1")
    cores = [np.array(c) for c in t.cores]
    for k in range(len(cores) - 1):
        mat = unfold(cores[k])
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        keep = s > tol * s[0] if s[0] > 0 else np.zeros(s.shape, dtype=bool)
        r = int(np.count_nonzero(keep))
        if r == 0:
            return zero_train(t.mode_sizes)
        u, s, vt = u[:, :r], s[:r], vt[:r]
        r0, n, _ = cores[k].shape
        cores[k] = u.reshape(r0, n, r)
        cores[k + 1] = np.tensordot(s[:, None] * vt, cores[k + 1], axes=(1, 0))
    if not np.any(cores[-1]):
        return zero_train(t.mode_sizes)
    return TensorTrain(tuple(cores))


def right_orthonormalize_last_core(t):
    """Make the final core's mode-1 unfolding row-orthonormal.

    The non-orthonormal factor is absorbed into the preceding core; the
    represented tensor is unchanged (to ~1e-12 relative).
    """
    if t.order < 2:
        raise ValueError("needs order >= 2")
    cores = [np.array(c) for c in t.cores]
    last = cores[-1]
    r0, n, r1 = last.shape
    mat = last.reshape(r0, n * r1)
    # LQ via QR of the transpose: mat = L Q with Q row-orthonormal.
    q, rt = np.linalg.qr(mat.T)
    rank = q.shape[1]
    cores[-1] = q.T.reshape(rank, n, r1)
    cores[-2] = np.tensordot(cores[-2], rt.T, axes=(2, 0))
    return TensorTrain(tuple(cores))


def orthonormality_residual(t):
    """Max Gram deviation max_k ||(core_k|_2)^T (core_k|_2) - Id||_inf over all but the last core."""
    res = 0.0
    for core in t.cores[:-1]:
        mat = unfold(core)
        gram = mat.T @ mat
        res = max(res, float(np.max(np.abs(gram - np.eye(gram.shape[0])))))
    return res


def _structural_fibers(core):
    """(s, t) pairs whose fiber core[s, :, t] is not identically zero."""
    mask = np.abs(core).sum(axis=1) > 0
    return np.argwhere(mask)


def contract(t, u, sparse_pattern=None, counter=None):
    """Full-index contraction of two trains sharing all mode sizes.

    Returns the (s_p, r_p) matrix whose (a, b) entry is the sum over all
    multi-indices of products of the two tensors' entries, boundary indices
    fixed to (a, b).  ``sparse_pattern`` ("gradient" or "generator") routes
    the structured trains produced by this package through a fast path that
    touches only structurally nonzero core fibers; cost is then
    O(sum_k n_k (d+2) r_{k-1} r_k) instead of the dense Kronecker
    accumulation.  Pass an OpCounter to record multiply counts.

    Parameters
    ----------
    t, u : TensorTrain
        Same order and mode sizes, leading ranks 1.
    sparse_pattern : {None, "gradient", "generator"}
        None selects the dense path.
    counter : OpCounter, optional
    """
    if t.order != u.order or t.mode_sizes != u.mode_sizes:
        raise ValueError(
            f"contraction shapes differ: {t.mode_sizes} vs {u.mode_sizes}"
        )
    if t.ranks[0] != 1 or u.ranks[0] != 1:
        raise ValueError("contract() needs leading ranks 1")
    if t.is_zero or u.is_zero:
        return np.zeros((t.ranks[-1], u.ranks[-1]))
    if sparse_pattern is None:
        return _contract_dense(t, u, counter)
    if sparse_pattern not in ("gradient", "generator"):
        raise ValueError(f"unknown sparse pattern {sparse_pattern!r}")
    return _contract_sparse(t, u, counter)


def _contract_dense(t, u, counter):
    # Literal Kronecker accumulation: v <- v * sum_u [T-slice (x) U-slice].
    v = None
    for tk, uk in zip(t.cores, u.cores):
        s0, n, s1 = tk.shape
        r0, _, r1 = uk.shape
        kmat = np.zeros((s0 * r0, s1 * r1))
        for j in range(n):
            kmat += np.kron(tk[:, j, :], uk[:, j, :])
        if counter is not None:
            counter.add(n * s0 * r0 * s1 * r1)
        if v is None:
            v = kmat.reshape(-1)
        else:
            if counter is not None:
                counter.add(v.size * s1 * r1)
            v = v @ kmat
    return v.reshape(t.ranks[-1], u.ranks[-1])


def _contract_sparse(t, u, counter):
    # v is kept as (s_k, r_k); for each used row of the T core, v's row is
    # multiplied into the next U core once, then the row's few nonzero
    # fibers are accumulated.  Unused rows skip the matrix product.
    tk, uk = t.cores[0], u.cores[0]
    v = np.einsum("anj,bnc->jc", tk, uk)  # leading ranks are 1
    if counter is not None:
        counter.add(tk.shape[1] * tk.shape[2] * uk.shape[2])
    for tk, uk in zip(t.cores[1:], u.cores[1:]):
        s0, n, s1 = tk.shape
        r0, _, r1 = uk.shape
        uflat = uk.reshape(r0, n * r1)
        fibers = _structural_fibers(tk)
        vnew = np.zeros((s1, r1))
        for s in range(s0):
            targets = fibers[fibers[:, 0] == s, 1]
            if targets.size == 0:
                continue
            y = (v[s] @ uflat).reshape(n, r1)
            if counter is not None:
                counter.add(r0 * n * r1)
            for tgt in targets:
                vnew[tgt] += tk[s, :, tgt] @ y
                if counter is not None:
                    counter.add(n * r1)
        v = vnew
    return v


def save_tt(t, path):
    """Write a train as a JSON header line plus little-endian f64 cores.

    The byte layout is the in-memory (left-rank, mode, right-rank) order,
    so a round trip is bit-exact.
    """
    header = {
        "order": t.order,
        "mode_sizes": list(t.mode_sizes),
        "ranks": list(t.ranks),
        "dtype": "f64le",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        for core in t.cores:
            fh.write(np.ascontiguousarray(core, dtype="<f8").tobytes())


def load_tt(path):
    """Read a train written by save_tt (bit-exact round trip)."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        if header.get("dtype") != "f64le":
            raise ValueError(f"unsupported dtype {header.get('dtype')!r}")
        ranks = header["ranks"]
        cores = []
        for k, n in enumerate(header["mode_sizes"]):
            shape = (ranks[k], n, ranks[k + 1])
            raw = fh.read(8 * int(np.prod(shape)))
            cores.append(np.frombuffer(raw, dtype="<f8").reshape(shape))
    return TensorTrain(tuple(cores))
