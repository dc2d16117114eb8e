"""Univariate basis families with analytic derivatives, and product bases.

Each mode of a product basis holds a set of univariate functions; mode k is
evaluated at coordinate k of the (possibly reduced) state.  A product basis
may carry a CoordinateMap, in which case the basis coordinates are the
image of the descriptor map and all derivative bookkeeping happens in the
reduced variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# -- univariate function kinds ------------------------------------------------


@dataclass(frozen=True)
class Constant:
    def value(self, y):
        return np.ones_like(np.asarray(y, dtype=np.float64))

    def d1(self, y):
        return np.zeros_like(np.asarray(y, dtype=np.float64))

    d2 = d1


@dataclass(frozen=True)
class Gaussian:
    """exp(-(y - center)^2 / (2 * squared_bandwidth))."""

    center: float
    squared_bandwidth: float

    def __post_init__(self):
        if self.squared_bandwidth <= 0:
            raise ValueError("squared bandwidth must be positive")

    def value(self, y):
        u = np.asarray(y, dtype=np.float64) - self.center
        return np.exp(-(u * u) / (2.0 * self.squared_bandwidth))

    def d1(self, y):
        u = np.asarray(y, dtype=np.float64) - self.center
        return -(u / self.squared_bandwidth) * self.value(y)

    def d2(self, y):
        u = np.asarray(y, dtype=np.float64) - self.center
        s = self.squared_bandwidth
        return ((u * u) / (s * s) - 1.0 / s) * self.value(y)


@dataclass(frozen=True)
class PeriodicGaussian:
    """exp(-sin^2(0.5 (y - center)) / (2 * scale)); 2*pi periodic."""

    center: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def value(self, y):
        u = np.asarray(y, dtype=np.float64) - self.center
        s = np.sin(0.5 * u)
        return np.exp(-(s * s) / (2.0 * self.scale))

    def d1(self, y):
        u = np.asarray(y, dtype=np.float64) - self.center
        return -(np.sin(u) / (4.0 * self.scale)) * self.value(y)

    def d2(self, y):
        u = np.asarray(y, dtype=np.float64) - self.center
        c = 4.0 * self.scale
        return (-np.cos(u) / c + (np.sin(u) / c) ** 2) * self.value(y)


@dataclass(frozen=True)
class Monomial:
    degree: int

    def __post_init__(self):
        if self.degree < 0 or int(self.degree) != self.degree:
            raise ValueError("degree must be a nonnegative integer")

    def value(self, y):
        return np.asarray(y, dtype=np.float64) ** self.degree

    def d1(self, y):
        q = self.degree
        y = np.asarray(y, dtype=np.float64)
        if q == 0:
            return np.zeros_like(y)
        return q * y ** (q - 1)

    def d2(self, y):
        q = self.degree
        y = np.asarray(y, dtype=np.float64)
        if q < 2:
            return np.zeros_like(y)
        return q * (q - 1) * y ** (q - 2)


_KINDS = {
    "constant": (Constant, ()),
    "gaussian": (Gaussian, ("center", "squared_bandwidth")),
    "periodic_gaussian": (PeriodicGaussian, ("center", "scale")),
    "monomial": (Monomial, ("degree",)),
}


# -- coordinate maps ----------------------------------------------------------


@dataclass(frozen=True)
class CoordinateMap:
    """Descriptor map xi: R^d -> R^D with the derivative data the
    generator chain rule needs.

    xi(X) -> (m, D); jacobian(X) -> (m, D, d); hessian_contract(X, a_vals)
    -> (m, D) returning the Frobenius contraction of each component's
    Hessian with a(x).  Supplying the contraction directly avoids
    materializing the D x d x d third-order object, which is the only way
    the Hessian of the map enters.
    """

    full_dim: int
    reduced_dim: int
    xi: callable
    jacobian: callable
    hessian_contract: callable
    name: str = "custom"

    def __post_init__(self):
        if self.reduced_dim > self.full_dim:
            raise ValueError("reduced dimension exceeds full dimension")


def identity_map(dim):
    eye = np.eye(dim)

    return CoordinateMap(
        full_dim=dim,
        reduced_dim=dim,
        xi=lambda X: np.asarray(X, dtype=np.float64),
        jacobian=lambda X: np.broadcast_to(eye, (len(X), dim, dim)).copy(),
        hessian_contract=lambda X, a_vals: np.zeros((len(X), dim)),
        name="identity",
    )


def projection_map(dim, indices):
    indices = tuple(int(i) for i in indices)
    jac = np.zeros((len(indices), dim))
    for row, i in enumerate(indices):
        jac[row, i] = 1.0

    return CoordinateMap(
        full_dim=dim,
        reduced_dim=len(indices),
        xi=lambda X: np.asarray(X, dtype=np.float64)[:, list(indices)],
        jacobian=lambda X: np.broadcast_to(jac, (len(X), len(indices), dim)).copy(),
        hessian_contract=lambda X, a_vals: np.zeros((len(X), len(indices))),
        name=f"projection{indices}",
    )


_BUILTIN_MAPS = {"identity": identity_map, "projection": projection_map}


# -- product basis ------------------------------------------------------------


@dataclass(frozen=True)
class ProductBasis:
    """Per-mode univariate sets spanning the tensor-product model space."""

    modes: tuple
    coordinate_map: CoordinateMap | None = None

    def __post_init__(self):
        modes = tuple(tuple(fs) for fs in self.modes)
        if any(len(fs) < 1 for fs in modes):
            raise ValueError("every mode needs at least one function")
        object.__setattr__(self, "modes", modes)
        # overflow-checked total dimension
        total = 1
        for fs in modes:
            total *= len(fs)
            if total > 2**62:
                raise OverflowError("product basis dimension overflows")

    @property
    def order(self):
        return len(self.modes)

    @property
    def mode_sizes(self):
        return tuple(len(fs) for fs in self.modes)

    @property
    def total_dim(self):
        return math.prod(self.mode_sizes)


def eval_mode(basis, k, y):
    """Values of all mode-k functions at scalar (or vector) coordinate y."""
    return np.stack([f.value(y) for f in basis.modes[k]])


def eval_mode_d1(basis, k, y):
    return np.stack([f.d1(y) for f in basis.modes[k]])


def eval_mode_d2(basis, k, y):
    return np.stack([f.d2(y) for f in basis.modes[k]])


@dataclass(frozen=True)
class ChainRulePack:
    """Per-mode generator ingredients at one state point.

    values[k], lterm[k] : (n_k,) basis values and generator applications
    grad_sigma[k] : (n_k, s) rows grad_y psi . (jac sigma)_{k,:}
    effective_a : (D, D) matrix jac a jac^T
    """

    values: tuple
    lterm: tuple
    grad_sigma: tuple
    effective_a: np.ndarray


def chain_rule_pack(basis, x, model, coord_map=None):
    """All per-mode ingredients for the reduced-variable generator trains.

    With coord_map None (or identity) this reduces to the direct
    evaluation, where mode k sees coordinate k of the state.

    Parameters
    ----------
    basis : ProductBasis
    x : (d,) state point
    model : SdeModel (supplies drift, diffusion, a at x)
    coord_map : CoordinateMap, optional
        Defaults to basis.coordinate_map.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    cm = coord_map if coord_map is not None else basis.coordinate_map
    b = model.drift(x)[0]
    sig = model.diffusion(x)[0]
    a = model.a(x)[0]
    if np.max(np.abs(a - a.T)) > 1e-10:
        raise ValueError("diffusion matrix a(x) is not symmetric")
    if cm is None:
        y = x[0]
        jac_sigma = sig
        eff_b = b
        eff_a = a
        hess_term = np.zeros(len(y))
    else:
        y = cm.xi(x)[0]
        jac = cm.jacobian(x)[0]
        jac_sigma = jac @ sig
        eff_b = jac @ b
        eff_a = jac @ a @ jac.T
        hess_term = cm.hessian_contract(x, a.reshape(1, *a.shape))[0]
    values, lterm, grad_sigma = [], [], []
    for k in range(basis.order):
        v = eval_mode(basis, k, y[k])
        g1 = eval_mode_d1(basis, k, y[k])
        g2 = eval_mode_d2(basis, k, y[k])
        values.append(v)
        lterm.append(eff_b[k] * g1 + 0.5 * eff_a[k, k] * g2 + 0.5 * hess_term[k] * g1)
        grad_sigma.append(np.outer(g1, jac_sigma[k, :]))
    return ChainRulePack(tuple(values), tuple(lterm), tuple(grad_sigma), eff_a)


# -- configuration schema ------------------------------------------------------


def basis_to_config(basis):
    """JSON-serializable description: per-mode list of {kind, params}."""
    modes = []
    for fs in basis.modes:
        entries = []
        for f in fs:
            for kind, (cls, params) in _KINDS.items():
                if isinstance(f, cls):
                    entries.append(
                        {"kind": kind, "params": {p: getattr(f, p) for p in params}}
                    )
                    break
            else:
                raise ValueError(f"unknown function type {type(f)!r}")
        modes.append(entries)
    cfg = {"modes": modes}
    if basis.coordinate_map is not None:
        cfg["coordinate_map"] = basis.coordinate_map.name
    return cfg


def basis_from_config(cfg, coordinate_map=None):
    """Build a ProductBasis from the schema emitted by basis_to_config.

    ``coordinate_map`` may be a CoordinateMap instance or the config may
    name one: "identity" / "projection" built-ins (projection expects
    {"name": "projection", "dim": d, "indices": [...]}) or a "module:attr"
    plugin hook resolving to a CoordinateMap.
    """
    modes = []
    for entries in cfg["modes"]:
        fs = []
        for entry in entries:
            kind = entry["kind"]
            if kind not in _KINDS:
                raise ValueError(f"unknown basis kind {kind!r}")
            cls, _ = _KINDS[kind]
            fs.append(cls(**entry.get("params", {})))
        modes.append(tuple(fs))
    cm = coordinate_map
    if cm is None and "coordinate_map" in cfg:
        cm = resolve_coordinate_map(cfg["coordinate_map"])
    return ProductBasis(tuple(modes), coordinate_map=cm)


def resolve_coordinate_map(selector):
    """Resolve a config selector into a CoordinateMap (built-in or plugin)."""
    if isinstance(selector, CoordinateMap):
        return selector
    if isinstance(selector, dict):
        name = selector["name"]
        if name == "identity":
            return identity_map(int(selector["dim"]))
        if name == "projection":
            return projection_map(int(selector["dim"]), selector["indices"])
        raise ValueError(f"unknown coordinate map {name!r}")
    if isinstance(selector, str) and ":" in selector:
        module_name, attr = selector.split(":", 1)
        import importlib

        obj = getattr(importlib.import_module(module_name), attr)
        return obj() if callable(obj) and not isinstance(obj, CoordinateMap) else obj
    raise ValueError(f"cannot resolve coordinate map from {selector!r}")


def gaussian_mode(lo, hi, count, squared_bandwidth):
    """Equidistant Gaussian set on [lo, hi]; the standard mode builder."""
    centers = np.linspace(lo, hi, count)
    return tuple(Gaussian(float(c), float(squared_bandwidth)) for c in centers)


def monomial_mode(max_degree):
    return tuple(Monomial(q) for q in range(max_degree + 1))
