"""Experiment configuration: TOML/JSON loading and section dataclasses.

A config file may contain [simulate], [sample], [basis], and [run]
sections; each CLI subcommand consumes the sections it needs.  TOML and
JSON carry identical structure (chosen by file extension).
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import (
    ProductBasis,
    basis_from_config,
    gaussian_mode,
    monomial_mode,
    resolve_coordinate_map,
)
from .errors import ConfigError
from .algorithm import TruncationPolicy
from .sde import GmmSampler, lemon_slice_gmm, model_by_name

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    if path.suffix == ".json":
        with open(path) as fh:
            return json.load(fh)
    raise ConfigError(f"config must be .toml or .json, got {path.suffix!r}")


@dataclass(frozen=True)
class SimulateConfig:
    model_name: str
    x0: np.ndarray
    dt: float
    n_steps: int
    save_every: int
    burn_in: int
    seeds: tuple
    model_kwargs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, cfg):
        try:
            return cls(
                model_name=cfg["model"],
                x0=np.asarray(cfg["x0"], dtype=np.float64),
                dt=float(cfg["dt"]),
                n_steps=int(cfg["n_steps"]),
                save_every=int(cfg.get("save_every", 1)),
                burn_in=int(cfg.get("burn_in", 0)),
                seeds=tuple(int(s) for s in cfg["seeds"]),
                model_kwargs=dict(cfg.get("model_kwargs", {})),
            )
        except KeyError as exc:
            raise ConfigError(f"[simulate] is missing key {exc}") from exc

    def model(self):
        return model_by_name(self.model_name, **self.model_kwargs)


def sampler_from_config(cfg):
    if isinstance(cfg, str):
        if cfg == "lemon_slice_gmm":
            return lemon_slice_gmm()
        raise ConfigError(f"unknown sampler {cfg!r}")
    try:
        return GmmSampler(
            weights=np.asarray(cfg["weights"], dtype=np.float64),
            means=np.asarray(cfg["means"], dtype=np.float64),
            covariances=np.asarray(cfg["covariances"], dtype=np.float64),
        )
    except KeyError as exc:
        raise ConfigError(f"sampler spec is missing key {exc}") from exc


@dataclass(frozen=True)
class SampleConfig:
    sampler_spec: object
    m: int
    seeds: tuple

    @classmethod
    def from_dict(cls, cfg):
        try:
            return cls(
                sampler_spec=cfg["sampler"],
                m=int(cfg["m"]),
                seeds=tuple(int(s) for s in cfg["seeds"]),
            )
        except KeyError as exc:
            raise ConfigError(f"[sample] is missing key {exc}") from exc

    def sampler(self):
        return sampler_from_config(self.sampler_spec)


def basis_from_section(cfg):
    """Build a ProductBasis from the [basis] section.

    Each entry of ``modes`` is either a builder shorthand
    ({type = "gaussian_grid", lo, hi, count, squared_bandwidth} or
    {type = "monomials", max_degree}) or an explicit function list
    ({functions = [{kind, params}, ...]}).
    """
    try:
        mode_specs = cfg["modes"]
    except KeyError as exc:
        raise ConfigError("[basis] needs a 'modes' list") from exc
    modes = []
    for spec in mode_specs:
        if "type" in spec:
            kind = spec["type"]
            if kind == "gaussian_grid":
                modes.append(
                    gaussian_mode(
                        spec["lo"], spec["hi"], int(spec["count"]), spec["squared_bandwidth"]
                    )
                )
            elif kind == "monomials":
                modes.append(monomial_mode(int(spec["max_degree"])))
            else:
                raise ConfigError(f"unknown mode builder {kind!r}")
        elif "functions" in spec:
            modes.append(
                tuple(basis_from_config({"modes": [spec["functions"]]}).modes[0])
            )
        else:
            raise ConfigError("each mode needs 'type' or 'functions'")
    cm = None
    if "coordinate_map" in cfg:
        cm = resolve_coordinate_map(cfg["coordinate_map"])
    return ProductBasis(tuple(modes), coordinate_map=cm)


@dataclass(frozen=True)
class RunConfig:
    model_name: str
    mode: str
    data_pattern: str
    epsilons: tuple
    policy_kind: str
    rank_cap: int | None
    weights_source: str
    n_ev: int
    sampler_spec: object | None = None
    model_kwargs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, cfg):
        try:
            policy = cfg.get("policy", {})
            eps = policy.get("epsilon", 1e-12)
            if np.ndim(eps) == 0:
                eps = (float(eps),)
            else:
                eps = tuple(float(e) for e in eps)
            return cls(
                model_name=cfg["model"],
                mode=cfg.get("mode", "rev"),
                data_pattern=cfg["data"],
                epsilons=eps,
                policy_kind=policy.get("kind", "absolute"),
                rank_cap=policy.get("rank_cap"),
                weights_source=cfg.get("weights", "none"),
                n_ev=int(cfg.get("n_ev", 4)),
                sampler_spec=cfg.get("sampler"),
                model_kwargs=dict(cfg.get("model_kwargs", {})),
            )
        except KeyError as exc:
            raise ConfigError(f"[run] is missing key {exc}") from exc

    def model(self):
        return model_by_name(self.model_name, **self.model_kwargs)

    def policies(self):
        return [
            (eps, TruncationPolicy(kind=self.policy_kind, epsilon=eps, rank_cap=self.rank_cap))
            for eps in self.epsilons
        ]

    def weights_for(self, model, X):
        if self.weights_source == "none":
            return None
        if self.weights_source == "gmm":
            from .sde import importance_weights

            if self.sampler_spec is None:
                raise ConfigError("weights = 'gmm' needs a [run] sampler spec")
            return importance_weights(model, sampler_from_config(self.sampler_spec), X)
        raise ConfigError(f"unknown weights source {self.weights_source!r}")
