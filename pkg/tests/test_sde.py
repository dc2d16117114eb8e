import numpy as np
import pytest

from tgedmd import (
    GmmSampler,
    SdeModel,
    euler_maruyama,
    euler_maruyama_batch,
    gmm_density,
    gmm_sample,
    importance_weights,
    lemon_slice_4d,
    lemon_slice_gmm,
    lemon_slice_model,
    load_trajectory,
    ou_model,
    save_trajectory,
)
from tgedmd.errors import DegenerateWeightError, IntegrationBlowupError
from tgedmd.sde import lemon_slice_potential


def _deterministic_model(dim, drift_fn):
    return SdeModel(
        dim=dim,
        drift=drift_fn,
        diffusion=lambda X: np.zeros((len(X), dim, 1)),
        name="deterministic",
    )


def test_no_drift_no_noise_is_constant():
    model = _deterministic_model(2, lambda X: np.zeros_like(X))
    traj = euler_maruyama(model, np.array([1.0, -2.0]), 0.1, 10, seed=0)
    assert np.allclose(traj.states, [1.0, -2.0])


def test_explicit_euler_step():
    model = _deterministic_model(1, lambda X: -X)
    traj = euler_maruyama(model, np.array([1.0]), 0.1, 1, seed=0)
    assert traj.states[0, 0] == pytest.approx(0.9)


def test_zero_steps_returns_initial_state():
    model = _deterministic_model(1, lambda X: -X)
    traj = euler_maruyama(model, np.array([0.7]), 0.1, 0, seed=0)
    assert traj.states.shape == (1, 1)
    assert traj.states[0, 0] == 0.7


def test_ou_stationary_variance():
    model = ou_model(1, [1.0])
    traj = euler_maruyama(model, np.array([0.0]), 0.01, 200_000, save_every=2, seed=5)
    assert 0.95 < traj.states.var() < 1.05


def test_ou_stationary_covariance_diag():
    model = ou_model(2, [1.0, 4.0])
    traj = euler_maruyama(model, np.zeros(2), 0.005, 400_000, save_every=4, seed=9)
    cov = np.cov(traj.states.T)
    assert cov[0, 0] == pytest.approx(1.0, abs=0.08)
    assert cov[1, 1] == pytest.approx(0.25, abs=0.03)
    assert abs(cov[0, 1]) < 0.05


def test_determinism_bit_identical():
    model = ou_model(2, [1.0, 2.0])
    a = euler_maruyama(model, np.zeros(2), 0.01, 5000, save_every=10, seed=3)
    b = euler_maruyama(model, np.zeros(2), 0.01, 5000, save_every=10, seed=3)
    assert np.array_equal(a.states, b.states)


def test_batch_members_match_single_runs():
    model = ou_model(2, [1.0, 2.0])
    batch = euler_maruyama_batch(
        model, [np.zeros(2)] * 3, 0.01, 2000, save_every=5, seeds=[4, 5, 6]
    )
    for seed, traj in zip([4, 5, 6], batch):
        single = euler_maruyama(model, np.zeros(2), 0.01, 2000, save_every=5, seed=seed)
        assert np.array_equal(single.states, traj.states)


def test_blowup_raises_with_step_index():
    stiff = _deterministic_model(1, lambda X: X**3)
    with pytest.raises(IntegrationBlowupError) as err:
        euler_maruyama(stiff, np.array([10.0]), 1.0, 100, seed=0)
    assert err.value.step < 10


# -- lemon slice -------------------------------------------------------------------


def test_lemon_slice_gradient_matches_finite_differences(rng):
    model = lemon_slice_4d()
    X = rng.uniform(-1, 1, size=(50, 4))
    X[:, 0] = np.abs(X[:, 0]) + 0.3  # stay away from the polar singularity
    grad = -model.drift(X)
    h = 1e-5
    for i in range(4):
        Xp, Xm = X.copy(), X.copy()
        Xp[:, i] += h
        Xm[:, i] -= h
        fd = (lemon_slice_potential(Xp) - lemon_slice_potential(Xm)) / (2 * h)
        rel = np.abs(fd - grad[:, i]) / (1 + np.abs(grad[:, i]))
        assert np.max(rel) < 1e-6


def test_lemon_slice_reflection_symmetry(rng):
    X = rng.uniform(-1, 1, size=(20, 4))
    X[:, 0] = np.abs(X[:, 0]) + 0.2
    X2 = X.copy()
    X2[:, 1] *= -1
    assert np.max(np.abs(lemon_slice_potential(X) - lemon_slice_potential(X2))) < 1e-12


def test_lemon_slice_diffusion_matrix(rng):
    model = lemon_slice_4d()
    X = rng.uniform(0.3, 1.0, size=(5, 4))
    assert np.allclose(model.a(X), 2.0 * np.eye(4))


def test_lemon_slice_reduced_builder():
    assert lemon_slice_model(0).dim == 2
    assert lemon_slice_model(1).dim == 3
    assert lemon_slice_4d().dim == 4
    assert lemon_slice_4d().reversible


# -- Gaussian mixture ---------------------------------------------------------------


def test_single_component_density_at_mean():
    g = GmmSampler(np.array([1.0]), np.zeros((1, 2)), np.eye(2)[None])
    assert gmm_density(g, np.zeros((1, 2)))[0] == pytest.approx((2 * np.pi) ** -1)


def test_sample_mean_clt_bound():
    g = lemon_slice_gmm()
    m = 100_000
    s = gmm_sample(g, m, seed=2)
    mean = g.weights @ g.means
    # componentwise spread is bounded by mean separation + covariance
    sd = np.sqrt(np.einsum("c,cii->i", g.weights, g.covariances) + 1.0)
    assert np.all(np.abs(s.states.mean(axis=0) - mean) < 4 * sd / np.sqrt(m))


def test_density_normalization_by_quadrature():
    g = GmmSampler(
        np.array([0.4, 0.6]),
        np.array([[0.5, 0.0], [-0.5, 0.5]]),
        np.stack([0.3 * np.eye(2), 0.2 * np.eye(2)]),
    )
    grid = np.linspace(-5, 5, 201)
    xx, yy = np.meshgrid(grid, grid, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    vals = gmm_density(g, pts).reshape(xx.shape)
    integral = np.trapz(np.trapz(vals, grid, axis=1), grid)
    assert integral == pytest.approx(1.0, abs=1e-3)


def test_sampler_validation():
    with pytest.raises(ValueError):
        GmmSampler(np.array([0.5, 0.4]), np.zeros((2, 2)), np.stack([np.eye(2)] * 2))
    with pytest.raises(np.linalg.LinAlgError):
        GmmSampler(np.array([1.0]), np.zeros((1, 2)), np.array([[[1.0, 0.0], [0.0, -1.0]]]))


# -- importance weights ---------------------------------------------------------------


def test_weights_constant_when_sampler_matches_target():
    model = ou_model(2, [1.0, 1.0])
    sampler = GmmSampler(np.array([1.0]), np.zeros((1, 2)), np.eye(2)[None])
    X = gmm_sample(sampler, 500, seed=1).states
    w = importance_weights(model, sampler, X)
    assert np.max(np.abs(w / w[0] - 1.0)) < 1e-10


def test_weights_scale_with_density():
    model = ou_model(2, [1.0, 2.0])
    doubled = SdeModel(
        dim=2,
        drift=model.drift,
        diffusion=model.diffusion,
        rho_tilde=lambda X: 2.0 * model.rho_tilde(X),
        reversible=True,
        name="doubled",
    )
    sampler = GmmSampler(np.array([1.0]), np.zeros((1, 2)), np.eye(2)[None])
    X = gmm_sample(sampler, 100, seed=4).states
    w1 = importance_weights(model, sampler, X)
    w2 = importance_weights(doubled, sampler, X)
    assert np.allclose(w2, 2.0 * w1, rtol=1e-14)


def test_weights_require_density():
    model = SdeModel(
        dim=1,
        drift=lambda X: -X,
        diffusion=lambda X: np.ones((len(X), 1, 1)),
        name="no-density",
    )
    sampler = GmmSampler(np.array([1.0]), np.zeros((1, 1)), np.eye(1)[None])
    with pytest.raises(ValueError):
        importance_weights(model, sampler, np.zeros((3, 1)))


def test_degenerate_weight_error():
    model = ou_model(1, [1.0])
    sampler = GmmSampler(np.array([1.0]), np.zeros((1, 1)), np.eye(1)[None])
    far = np.full((1, 1), 1e9)  # sampler density underflows to zero
    with pytest.raises(DegenerateWeightError):
        importance_weights(model, sampler, far)


def test_weighted_mean_consistent_with_ergodic_mean():
    # Weighted GMM estimate of E[x1] against a long-SDE time average.
    model = lemon_slice_4d()
    sampler = lemon_slice_gmm()
    traj = euler_maruyama(
        model, np.array([1.0, 0, 0, 0]), 1e-3, 300_000, save_every=100, seed=11, burn_in=1000
    )
    sde_vals = traj.states[:, 0]
    s = gmm_sample(sampler, 30_000, seed=12)
    w = importance_weights(model, sampler, s.states)
    gmm_vals = s.states[:, 0]
    mean_sde = sde_vals.mean()
    mean_gmm = np.sum(w * gmm_vals) / np.sum(w)
    # generous combined error: SDE samples are correlated, weighted samples
    # have an effective size (sum w)^2 / sum w^2
    se_sde = sde_vals.std(ddof=1) / np.sqrt(len(sde_vals) / 50)
    m_eff = np.sum(w) ** 2 / np.sum(w**2)
    se_gmm = np.sqrt(np.sum(w * (gmm_vals - mean_gmm) ** 2) / np.sum(w)) / np.sqrt(m_eff)
    assert abs(mean_sde - mean_gmm) < 3 * np.hypot(se_sde, se_gmm)


# -- trajectory files --------------------------------------------------------------


def test_trajectory_roundtrip_is_bit_exact(tmp_path):
    model = ou_model(3, [1.0, 1.0, 2.0])
    traj = euler_maruyama(model, np.zeros(3), 0.01, 500, save_every=5, seed=8)
    path = tmp_path / "t.traj"
    save_trajectory(traj, path)
    back = load_trajectory(path)
    assert back.states.tobytes() == traj.states.tobytes()
    assert back.seed == traj.seed
    assert back.dt_between_saves == traj.dt_between_saves
    assert back.model_name == traj.model_name
