import math

import numpy as np
import pytest

from autores import SystemParams
from autores.asymptotics import STABLE, evaluate, expand
from autores.integrators import (IntegrationError, NoiseStream, Trajectory,
                                 default_dt, integrate_ode, integrate_sde,
                                 reference_solution, sde_step_count)
from autores.model import rhs_primary


def test_trajectory_invariants():
    with pytest.raises(ValueError):
        Trajectory(times=[0.0, 1.0, 1.0], states=np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Trajectory(times=[0.0, 1.0], states=np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Trajectory(times=[0.0, 1.0], states=[[0.0, 0.0], [np.nan, 1.0]])
    t = Trajectory(times=[0.0, 1.0], states=[[0.0, 0.0], [1.0, 2.0]])
    assert not t.truncated


def test_integrate_ode_known_solution():
    traj = integrate_ode(lambda t, y: [-y[0]], [1.0], 0.0, 3.0, tol=1e-12,
                         t_eval=np.linspace(0.0, 3.0, 7))
    assert traj.times[-1] == 3.0
    assert traj.states[:, 0] == pytest.approx(np.exp(-traj.times), rel=1e-10)


def test_integrate_ode_rejects_bad_window():
    with pytest.raises(ValueError):
        integrate_ode(lambda t, y: [0.0], [1.0], 5.0, 5.0)
    with pytest.raises(ValueError):
        integrate_ode(lambda t, y: [0.0], [1.0], 5.0, 4.0)


def test_integrate_ode_hits_nodes_exactly():
    grid = np.linspace(1.0, 2.0, 11)
    traj = integrate_ode(lambda t, y: [y[0]], [1.0], 1.0, 2.0, t_eval=grid)
    assert np.array_equal(traj.times, grid)


def test_noise_stream_is_reproducible():
    a = NoiseStream(99, 3).generator().standard_normal(8)
    b = NoiseStream(99, 3).generator().standard_normal(8)
    c = NoiseStream(99, 4).generator().standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sde_step_count():
    assert sde_step_count(0.0, 1.0, 0.1) == 10
    assert sde_step_count(0.0, 1.05, 0.1) == 11
    assert sde_step_count(2.0, 2.0001, 0.1) == 1


def test_default_dt():
    assert default_dt(0.5) == 1e-3
    assert default_dt(0.05) == 1e-3
    assert default_dt(0.01) == pytest.approx(1e-5, rel=1e-12)


def _zero_matrix(t, y):
    return np.zeros((1, 2))


def test_sde_zero_noise_is_euler():
    # with G = 0 the scheme is the deterministic Euler map
    stream = NoiseStream(1, 0)
    traj = integrate_sde(lambda t, y: np.array([-y[0]]), _zero_matrix,
                         [1.0], 0.0, 1.0, 0.25, 0.3, stream)
    x = 1.0
    for _ in range(4):
        x += -x * 0.25
    assert traj.states[-1, 0] == pytest.approx(x, rel=1e-14)


def test_sde_pure_noise_variance():
    # dx = mu dW: Var x(T) = mu^2 T
    mu, T, n = 0.4, 2.0, 400
    ends = np.empty(n)
    for j in range(n):
        traj = integrate_sde(lambda t, y: np.array([0.0]),
                             lambda t, y: np.array([[1.0, 0.0]]),
                             [0.0], 0.0, T, 1e-2, mu, NoiseStream(7, j))
        ends[j] = traj.states[-1, 0]
    var = ends.var(ddof=1)
    se = var * math.sqrt(2.0 / (n - 1))
    assert abs(var - mu * mu * T) < 4 * se


def test_sde_shared_increments_reproduce_path():
    p = SystemParams(lam=1.0, gamma=0.1)
    drift = lambda t, y: np.asarray(rhs_primary(y, t, p))
    diff = lambda t, y: np.array([[0.0, 0.0], [0.0, 1.0]])
    n_steps = sde_step_count(0.0, 2.0, 1e-2)
    rng = NoiseStream(11, 0).generator()
    dw = rng.standard_normal((n_steps, 2)) * math.sqrt(1e-2)
    a = integrate_sde(drift, diff, [1.0, 2.0], 0.0, 2.0, 1e-2, 0.3,
                      NoiseStream(0, 0), dW=dw)
    b = integrate_sde(drift, diff, [1.0, 2.0], 0.0, 2.0, 1e-2, 0.3,
                      NoiseStream(999, 5), dW=dw)
    assert np.array_equal(a.states, b.states)


def test_sde_final_partial_step_lands_on_end():
    traj = integrate_sde(lambda t, y: np.array([1.0]),
                         lambda t, y: np.array([[0.0]]),
                         [0.0], 0.0, 0.55, 0.1, 0.1, NoiseStream(2, 0))
    assert traj.times[-1] == pytest.approx(0.55, abs=1e-14)
    assert traj.states[-1, 0] == pytest.approx(0.55, rel=1e-12)


def test_sde_record_every_thins_output():
    full = integrate_sde(lambda t, y: np.array([0.0]),
                         lambda t, y: np.array([[1.0]]),
                         [0.0], 0.0, 1.0, 0.01, 0.2, NoiseStream(3, 1))
    thin = integrate_sde(lambda t, y: np.array([0.0]),
                         lambda t, y: np.array([[1.0]]),
                         [0.0], 0.0, 1.0, 0.01, 0.2, NoiseStream(3, 1),
                         record_every=10)
    assert thin.times.size < full.times.size
    # identical noise, so the recorded subsequence matches
    idx = np.searchsorted(full.times, thin.times)
    assert np.allclose(full.states[idx, 0], thin.states[:, 0], rtol=0,
                       atol=1e-14)


def test_sde_truncates_blowup():
    traj = integrate_sde(lambda t, y: np.array([y[0] ** 2]),
                         lambda t, y: np.array([[0.0]]),
                         [5.0], 0.0, 2.0, 1e-3, 0.1, NoiseStream(4, 0))
    assert traj.truncated
    assert traj.times[-1] < 2.0
    assert np.all(np.isfinite(traj.states))


def test_reference_matches_series_far_out(params, ref):
    e = expand(params, STABLE, 3)
    for tau in (150.0, 300.0):
        r_s, psi_s = evaluate(e, params, tau)
        r_f, psi_f = ref.state(tau)
        assert r_f == pytest.approx(r_s, abs=2e-5)
        assert psi_f == pytest.approx(psi_s, abs=2e-5)


def test_reference_slope_equals_field(params, ref):
    # spline derivative against the vector field it was built from
    h = 1e-5
    for tau in (20.0, 77.0, 250.0):
        r_hi, p_hi = ref.state(tau + h)
        r_lo, p_lo = ref.state(tau - h)
        dr, dp = rhs_primary(ref.state(tau), tau, params)
        assert (r_hi - r_lo) / (2 * h) == pytest.approx(dr, rel=1e-4, abs=1e-6)
        assert (p_hi - p_lo) / (2 * h) == pytest.approx(dp, rel=1e-4, abs=1e-6)


def test_reference_domain_enforced(params, ref):
    with pytest.raises(ValueError):
        ref.state(ref.tau_min - 0.5)
    with pytest.raises(ValueError):
        ref.state(ref.tau_max + 0.5)


def test_reference_phase_stays_locked(params, ref):
    taus = np.linspace(ref.tau_min, ref.tau_max, 200)
    psi = np.array([ref.state(t)[1] for t in taus])
    psi0 = math.pi - math.asin(params.gamma)
    assert np.all(np.abs(psi - psi0) < 0.1)
