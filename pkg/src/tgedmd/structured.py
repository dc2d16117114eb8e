"""TT representation of structured sums of rank-one tensors.

The tensors handled here have the form

    T = sum_k  base_1 x ... x single_k x ... x base_p
      + sum_{k1<k2} sum_i  base_1 x ... x pair_left_{k1,i} x ...
                           ... x pair_right_{k2,i} x ... x base_p

with one replacement vector per term and all other slots filled by the
per-mode base vector.  Such a sum admits an exact TT with all ranks d + 2
(d the number of coupling channels i); adding the mirrored pair terms
(pair_right before pair_left) raises the ranks to 2d + 2.  This is the
construction every generator train in this package is an instance of; the
brute-force evaluator below is the independent oracle used to validate it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError
from .tt import TensorTrain

BRUTE_FORCE_CAP = 10**6


@dataclass(frozen=True)
class StructuredSumSpec:
    """Vectors defining one structured sum.

    base, single : tuples of p vectors (vector k of length n_k)
    pair_left, pair_right : tuples of p arrays of shape (d, n_k); d may be 0
    symmetric : also include the terms with pair_right before pair_left
    """

    base: tuple
    single: tuple
    pair_left: tuple
    pair_right: tuple
    symmetric: bool = False

    def __post_init__(self):
        base = tuple(np.asarray(v, dtype=np.float64) for v in self.base)
        single = tuple(np.asarray(v, dtype=np.float64) for v in self.single)
        d = self.coupling_dim_of(self.pair_left, base)
        left = tuple(
            np.asarray(g, dtype=np.float64).reshape(d, len(base[k]))
            for k, g in enumerate(self.pair_left)
        )
        right = tuple(
            np.asarray(h, dtype=np.float64).reshape(d, len(base[k]))
            for k, h in enumerate(self.pair_right)
        )
        p = len(base)
        if not (len(single) == len(left) == len(right) == p):
            raise ValueError("all vector families must cover every mode")
        for k in range(p):
            if len(single[k]) != len(base[k]):
                raise ValueError(f"length mismatch at mode {k}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "single", single)
        object.__setattr__(self, "pair_left", left)
        object.__setattr__(self, "pair_right", right)

    @staticmethod
    def coupling_dim_of(pair_family, base):
        arrs = [np.asarray(g) for g in pair_family]
        if not arrs:
            return 0
        return 0 if arrs[0].size == 0 else int(np.atleast_2d(arrs[0]).shape[0])

    @property
    def order(self):
        return len(self.base)

    @property
    def coupling_dim(self):
        return self.coupling_dim_of(self.pair_left, self.base)

    @property
    def mode_sizes(self):
        return tuple(len(v) for v in self.base)


def build_structured_tt(spec):
    """Exact TT of the structured sum, ranks d + 2 (2d + 2 if symmetric).

    Core layout (rank indices): row/column 0 carries the base vector and
    means "all slots so far untouched"; column 1 means "the term is
    complete"; column 2+i means "pair channel i opened, awaiting its right
    partner".  The symmetric variant appends d more states for pairs opened
    by a right vector awaiting a left partner.
    """
    p = spec.order
    if p < 2:
        raise ValueError("structured sums need order >= 2; use rank_one for p = 1")
    d = spec.coupling_dim
    r = 2 * d + 2 if spec.symmetric else d + 2
    cores = []
    for k in range(p):
        n = spec.mode_sizes[k]
        e, f = spec.base[k], spec.single[k]
        g, h = spec.pair_left[k], spec.pair_right[k]
        if k == 0:
            core = np.zeros((1, n, r))
            core[0, :, 0] = e
            core[0, :, 1] = f
            for i in range(d):
                core[0, :, 2 + i] = g[i]
                if spec.symmetric:
                    core[0, :, 2 + d + i] = h[i]
        elif k == p - 1:
            core = np.zeros((r, n, 1))
            core[0, :, 0] = f
            core[1, :, 0] = e
            for i in range(d):
                core[2 + i, :, 0] = h[i]
                if spec.symmetric:
                    core[2 + d + i, :, 0] = g[i]
        else:
            core = np.zeros((r, n, r))
            core[0, :, 0] = e
            core[0, :, 1] = f
            core[1, :, 1] = e
            for i in range(d):
                core[0, :, 2 + i] = g[i]
                core[2 + i, :, 1] = h[i]
                core[2 + i, :, 2 + i] = e
                if spec.symmetric:
                    core[0, :, 2 + d + i] = h[i]
                    core[2 + d + i, :, 1] = g[i]
                    core[2 + d + i, :, 2 + d + i] = e
        cores.append(core)
    return TensorTrain(tuple(cores))


def brute_force_structured(spec, cap=BRUTE_FORCE_CAP):
    """Dense evaluation by accumulating each rank-one term explicitly.

    Uses no TT machinery whatsoever; this is the oracle for
    build_structured_tt.
    """
    shape = spec.mode_sizes
    size = int(np.prod([float(n) for n in shape]))
    if size > cap:
        raise CapacityError(f"dense size {size} exceeds cap {cap}")
    p = spec.order
    d = spec.coupling_dim
    out = np.zeros(shape)

    def outer(vectors):
        acc = np.array(1.0)
        for v in vectors:
            acc = np.multiply.outer(acc, v)
        return acc

    for k in range(p):
        slots = list(spec.base)
        slots[k] = spec.single[k]
        out += outer(slots)
    for k1 in range(p - 1):
        for k2 in range(k1 + 1, p):
            for i in range(d):
                slots = list(spec.base)
                slots[k1] = spec.pair_left[k1][i]
                slots[k2] = spec.pair_right[k2][i]
                out += outer(slots)
                if spec.symmetric:
                    slots = list(spec.base)
                    slots[k1] = spec.pair_right[k1][i]
                    slots[k2] = spec.pair_left[k2][i]
                    out += outer(slots)
    return out
