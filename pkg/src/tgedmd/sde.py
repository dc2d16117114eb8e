"""SDE models, trajectory generation, and sampling distributions.

All randomness is driven by the counter-based Philox generator keyed by an
integer seed, so a trajectory is reproducible bit-for-bit from
(model, x0, dt, n_steps, save_every, seed) regardless of chunking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightError, DriftSingularityError, IntegrationBlowupError

_NOISE_CHUNK = 100_000


@dataclass(frozen=True)
class SdeModel:
    """Drift/diffusion pair with optional stationary-density information.

    drift(X) -> (m, d); diffusion(X) -> (m, d, s); rho_tilde(X) -> (m,)
    unnormalized invariant density, or None when unknown.  ``reversible``
    marks gradient systems for which the first-derivative estimator is
    valid.
    """

    dim: int
    drift: callable
    diffusion: callable
    rho_tilde: callable | None = None
    reversible: bool = False
    name: str = "sde"

    def a(self, X):
        """Diffusion matrix field a = sigma sigma^T, shape (m, d, d)."""
        sig = self.diffusion(np.asarray(X, dtype=np.float64))
        return np.einsum("mis,mjs->mij", sig, sig)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (m, d)
    dt_between_saves: float
    seed: int
    model_name: str = "sde"

    def __post_init__(self):
        states = np.ascontiguousarray(self.states, dtype=np.float64)
        if states.ndim != 2 or len(states) < 1:
            raise ValueError("states must be a nonempty (m, d) array")
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory contains non-finite states")
        states.flags.writeable = False
        object.__setattr__(self, "states", states)

    @property
    def m(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[1]


def euler_maruyama(model, x0, dt, n_steps, save_every=1, seed=0, burn_in=0):
    """Integrate dX = b dt + sigma dW with the explicit Euler-Maruyama step.

    Saves the state after every ``save_every`` steps (the initial state is
    not saved; ``n_steps = 0`` returns just x0).  ``burn_in`` extra steps
    are integrated and discarded before saving starts; they consume noise
    from the same stream, so changing burn_in changes the realization.

    Raises IntegrationBlowupError naming the first non-finite step.
    """
    return euler_maruyama_batch(model, [x0], dt, n_steps, save_every, [seed], burn_in)[0]


def euler_maruyama_batch(model, x0s, dt, n_steps, save_every=1, seeds=(0,), burn_in=0):
    """Advance several independent trajectories in lockstep.

    Each trajectory consumes its own Philox stream keyed by its seed, so
    the result for a given seed is bit-identical whether it is integrated
    alone or inside a batch.  All trajectories share (dt, n_steps,
    save_every, burn_in).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 0 or save_every < 1:
        raise ValueError("n_steps >= 0 and save_every >= 1 required")
    seeds = list(seeds)
    X = np.array([np.asarray(x, dtype=np.float64) for x in x0s])
    if len(seeds) != len(X):
        raise ValueError("one seed per initial state required")
    n_traj, d = X.shape
    if n_steps == 0:
        return [
            Trajectory(X[t].reshape(1, d), dt * save_every, seeds[t], model.name)
            for t in range(n_traj)
        ]
    gens = [np.random.Generator(np.random.Philox(key=s)) for s in seeds]
    sqrt_dt = np.sqrt(dt)
    total = burn_in + n_steps
    n_saves = n_steps // save_every
    saved = np.empty((n_traj, n_saves, d))
    n_saved = 0
    step = 0
    while step < total:
        chunk = min(_NOISE_CHUNK, total - step)
        noise = np.stack([g.standard_normal((chunk, d)) for g in gens])
        for j in range(chunk):
            try:
                bx = model.drift(X)
            except DriftSingularityError as exc:
                raise IntegrationBlowupError(step + j, seeds) from exc
            sx = model.diffusion(X)
            X = X + bx * dt + sqrt_dt * np.einsum("mij,mj->mi", sx, noise[:, j])
            if not np.isfinite(X).all():
                raise IntegrationBlowupError(step + j, seeds)
            k = step + j + 1 - burn_in
            if k > 0 and k % save_every == 0 and n_saved < n_saves:
                saved[:, n_saved] = X
                n_saved += 1
        step += chunk
    return [
        Trajectory(saved[t, :n_saved], dt * save_every, seeds[t], model.name)
        for t in range(n_traj)
    ]


# -- built-in models -----------------------------------------------------------


def _lemon_slice_potential(X, n_harmonic):
    x1, x2 = X[:, 0], X[:, 1]
    r = np.hypot(x1, x2)
    phi = np.arctan2(x2, x1)
    with np.errstate(divide="ignore"):
        v = np.cos(4 * phi) + 1.0 / np.cos(0.5 * phi) + 10.0 * (r - 1.0) ** 2 + 1.0 / r
    for i in range(n_harmonic):
        v = v + 5.0 * X[:, 2 + i] ** 2
    return v


def _lemon_slice_grad(X, n_harmonic):
    x1, x2 = X[:, 0], X[:, 1]
    r = np.hypot(x1, x2)
    if np.any(r == 0):
        raise DriftSingularityError("lemon-slice drift undefined at the polar origin")
    phi = np.arctan2(x2, x1)
    half = 0.5 * phi
    dv_dphi = -4.0 * np.sin(4 * phi) + 0.5 * np.sin(half) / np.cos(half) ** 2
    dv_dr = 20.0 * (r - 1.0) - 1.0 / r**2
    grad = np.zeros_like(X)
    grad[:, 0] = dv_dr * x1 / r + dv_dphi * (-x2 / r**2)
    grad[:, 1] = dv_dr * x2 / r + dv_dphi * (x1 / r**2)
    for i in range(n_harmonic):
        grad[:, 2 + i] = 10.0 * X[:, 2 + i]
    return grad


def lemon_slice_model(n_harmonic=2):
    """Gradient diffusion in the four-well lemon-slice potential.

    The planar potential cos(4 phi) + 1/cos(0.5 phi) + 10 (r-1)^2 + 1/r
    acts on (x1, x2); ``n_harmonic`` additional coordinates each feel an
    independent harmonic potential 5 x^2.  Diffusion is sqrt(2) Id, so the
    unnormalized invariant density is exp(-V).
    """
    dim = 2 + n_harmonic
    sqrt2 = np.sqrt(2.0)

    def drift(X):
        return -_lemon_slice_grad(np.asarray(X, dtype=np.float64), n_harmonic)

    def diffusion(X):
        m = len(X)
        return np.broadcast_to(sqrt2 * np.eye(dim), (m, dim, dim)).copy()

    def rho_tilde(X):
        return np.exp(-_lemon_slice_potential(np.asarray(X, dtype=np.float64), n_harmonic))

    return SdeModel(
        dim=dim,
        drift=drift,
        diffusion=diffusion,
        rho_tilde=rho_tilde,
        reversible=True,
        name=f"lemon_slice_{dim}d",
    )


def lemon_slice_4d():
    """The four-dimensional benchmark configuration."""
    return lemon_slice_model(n_harmonic=2)


def lemon_slice_potential(X, n_harmonic=2):
    """Potential values (exposed for gradient-check tests)."""
    return _lemon_slice_potential(np.asarray(X, dtype=np.float64), n_harmonic)


def ou_model(dim, stiffness):
    """Ornstein-Uhlenbeck reference system: b = -diag(k) x, sigma = sqrt(2) Id.

    Analytic facts used as oracles elsewhere: the generator spectrum is
    {-(sum_i j_i k_i)} over multi-indices j, and the stationary covariance
    is diag(1/k).
    """
    stiffness = np.asarray(stiffness, dtype=np.float64)
    if stiffness.shape != (dim,) or np.any(stiffness <= 0):
        raise ValueError("stiffness must be a positive vector of length dim")
    sqrt2 = np.sqrt(2.0)

    def drift(X):
        return -np.asarray(X, dtype=np.float64) * stiffness

    def diffusion(X):
        m = len(X)
        return np.broadcast_to(sqrt2 * np.eye(dim), (m, dim, dim)).copy()

    def rho_tilde(X):
        X = np.asarray(X, dtype=np.float64)
        return np.exp(-0.5 * np.sum(stiffness * X**2, axis=1))

    return SdeModel(
        dim=dim,
        drift=drift,
        diffusion=diffusion,
        rho_tilde=rho_tilde,
        reversible=True,
        name=f"ou_{dim}d",
    )


# -- Gaussian mixture sampling -------------------------------------------------


@dataclass(frozen=True)
class GmmSampler:
    """Finite Gaussian mixture used as an importance-sampling distribution."""

    weights: np.ndarray  # (c,)
    means: np.ndarray  # (c, d)
    covariances: np.ndarray  # (c, d, d)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        cov = np.asarray(self.covariances, dtype=np.float64)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if mu.ndim != 2 or cov.shape != (len(w), mu.shape[1], mu.shape[1]):
            raise ValueError("inconsistent mixture shapes")
        for c in cov:
            if np.max(np.abs(c - c.T)) > 1e-12:
                raise ValueError("covariances must be symmetric")
            np.linalg.cholesky(c)  # positive definiteness check
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)

    @property
    def dim(self):
        return self.means.shape[1]


def gmm_sample(sampler, m, seed=0):
    """Draw m i.i.d. points; returned as a Trajectory-shaped container."""
    if m < 1:
        raise ValueError("m >= 1 required")
    gen = np.random.Generator(np.random.Philox(key=seed))
    comp = gen.choice(len(sampler.weights), size=m, p=sampler.weights)
    z = gen.standard_normal((m, sampler.dim))
    chols = np.linalg.cholesky(sampler.covariances)
    states = sampler.means[comp] + np.einsum("mij,mj->mi", chols[comp], z)
    return Trajectory(states, dt_between_saves=0.0, seed=seed, model_name="gmm")


def gmm_density(sampler, X):
    """Exact mixture density at the given points, shape (m,)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d = sampler.dim
    out = np.zeros(len(X))
    for w, mu, cov in zip(sampler.weights, sampler.means, sampler.covariances):
        chol = np.linalg.cholesky(cov)
        half = np.linalg.solve(chol, (X - mu).T).T
        maha = np.sum(half * half, axis=1)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        out += w * np.exp(-0.5 * (maha + logdet + d * np.log(2 * np.pi)))
    return out


def importance_weights(model, sampler, X):
    """Ratios rho_tilde(x) / theta(x) correcting estimators to the invariant
    measure; defined up to one global constant, which all downstream
    reduced matrices are invariant to."""
    if model.rho_tilde is None:
        raise ValueError("model has no invariant density; cannot re-weight")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    theta = gmm_density(sampler, X)
    if np.any(theta <= 0) or not np.all(np.isfinite(theta)):
        raise DegenerateWeightError("sampling density vanished at a data point")
    w = model.rho_tilde(X) / theta
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise DegenerateWeightError("non-finite or negative importance weight")
    return w


def lemon_slice_gmm():
    """Stand-in mixture sampler for the re-weighting study.

    Component means sit at the four potential wells on the unit circle
    (polar angles +-0.7717 and +-2.2096) extended by zeros, covariance
    0.2 Id4, with component weights (0.4, 0.3, 0.2, 0.1) that drastically
    shift the relative weights of the metastable states while keeping all
    physically relevant regions sampled.
    """
    angles = np.array([-2.2096, -0.7717, 0.7717, 2.2096])
    means = np.zeros((4, 4))
    means[:, 0] = np.cos(angles)
    means[:, 1] = np.sin(angles)
    covs = np.broadcast_to(0.2 * np.eye(4), (4, 4, 4)).copy()
    return GmmSampler(np.array([0.4, 0.3, 0.2, 0.1]), means, covs)


# -- trajectory file format ----------------------------------------------------


def save_trajectory(traj, path):
    """JSON header line + row-major little-endian f64 state block."""
    header = {
        "d": traj.dim,
        "m": traj.m,
        "dt_between_saves": traj.dt_between_saves,
        "seed": traj.seed,
        "model_name": traj.model_name,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(traj.states, dtype="<f8").tobytes())


def load_trajectory(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        m, d = header["m"], header["d"]
        raw = fh.read(8 * m * d)
        states = np.frombuffer(raw, dtype="<f8").reshape(m, d)
    return Trajectory(
        states,
        dt_between_saves=header["dt_between_saves"],
        seed=header["seed"],
        model_name=header["model_name"],
    )


_MODEL_BUILDERS = {
    "lemon_slice_4d": lemon_slice_4d,
    "lemon_slice_2d": lambda: lemon_slice_model(0),
    "lemon_slice_3d": lambda: lemon_slice_model(1),
}


def model_by_name(name, **kwargs):
    """Look up a built-in model; ou models use 'ou' with dim/stiffness kwargs."""
    if name == "ou":
        return ou_model(kwargs["dim"], kwargs["stiffness"])
    if name in _MODEL_BUILDERS:
        return _MODEL_BUILDERS[name]()
    raise ValueError(f"unknown model {name!r}")
