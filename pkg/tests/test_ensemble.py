import math

import numpy as np
import pytest

from autores.model import NoiseSchedule, constant_schedule
from autores.integrators import Trajectory
from autores.ensemble import (EnsembleConfig, classify_capture,
                              classify_capture_noisy, exit_time_scaling,
                              run_ensemble, supermartingale_check,
                              wilson_interval)


def _noise(mu, s2=1.0):
    return NoiseSchedule(mu=mu, sigma1=constant_schedule(0.0),
                         sigma2=constant_schedule(s2), h=1.0)


@pytest.fixture
def cfg_maker(params, ref):
    def make(mu=0.3, eps1=0.05, n_paths=256, horizon=2.0, seed=101, **kw):
        tau0 = 20.0
        base = dict(params=params, noise=_noise(mu), tau0=tau0,
                    horizon=horizon, dt=1e-3, n_paths=n_paths,
                    master_seed=seed, x0=tuple(ref.state(tau0)), eps1=eps1)
        base.update(kw)
        return EnsembleConfig(**base)
    return make


def test_wilson_properties():
    lo, hi = wilson_interval(40, 100)
    assert lo == pytest.approx(0.3094012864324589, rel=1e-12)
    assert hi == pytest.approx(0.4979974132089382, rel=1e-12)
    assert lo < 0.4 < hi
    lo, hi = wilson_interval(0, 50)
    assert lo == pytest.approx(0.0, abs=1e-12) and hi < 0.1
    lo, hi = wilson_interval(50, 50)
    assert hi == 1.0 and lo > 0.9
    with pytest.raises(ValueError):
        wilson_interval(1, 0)


def test_config_validation(params):
    good = dict(params=params, noise=_noise(0.1), tau0=10.0, horizon=5.0,
                dt=1e-3, n_paths=100, master_seed=1)
    EnsembleConfig(**good)
    with pytest.raises(ValueError, match="n_paths"):
        EnsembleConfig(**{**good, "n_paths": 99})
    with pytest.raises(ValueError):
        EnsembleConfig(**{**good, "dt": 0.0})
    with pytest.raises(ValueError, match="budget"):
        EnsembleConfig(**{**good, "horizon": 600.0, "dt": 1e-5})


def test_out_of_class_schedule_refused(ref, cfg_maker):
    cfg = cfg_maker(n_paths=100, noise=_noise(0.1, s2=2.0))
    with pytest.raises(ValueError, match="out_of_class"):
        run_ensemble(cfg, ref)
    stats = run_ensemble(cfg, ref, out_of_class_ok=True)
    assert stats.out_of_class


def test_thread_count_invariance(ref, cfg_maker):
    cfg = cfg_maker()
    one = run_ensemble(cfg, ref, threads=1)
    four = run_ensemble(cfg, ref, threads=4)
    for key in ("exit_times", "censored", "sup_psi_dev",
                "sup_r_dev_weighted", "sup_r_dev_raw", "captured",
                "end_states"):
        a, b = getattr(one, key), getattr(four, key)
        assert np.array_equal(a, b, equal_nan=True), key
    assert one.to_dict() == four.to_dict()


def test_censoring_consistency(ref, cfg_maker):
    cfg = cfg_maker(mu=0.1, eps1=0.15)
    stats = run_ensemble(cfg, ref)
    # a sensible mix, not all one class
    assert 0.0 < float(np.mean(stats.censored)) < 1.0
    exceeded = (stats.sup_psi_dev >= cfg.eps1) | (
        stats.sup_r_dev_weighted >= cfg.eps1)
    assert np.array_equal(exceeded, ~stats.censored)
    assert np.all(stats.exit_times[stats.censored] == cfg.horizon)
    assert np.all(stats.exit_times <= cfg.horizon)
    assert np.all(stats.exit_times > 0)


def test_tube_nesting(ref, cfg_maker):
    # same noise realizations; a wider tube can only be exited later
    narrow = run_ensemble(cfg_maker(eps1=0.05), ref)
    wide = run_ensemble(cfg_maker(eps1=0.10), ref)
    assert np.all(wide.exit_times >= narrow.exit_times)
    assert np.array_equal(wide.sup_psi_dev, narrow.sup_psi_dev)


def test_ball_start_reproducible(ref, cfg_maker):
    cfg = cfg_maker(n_paths=128, ball_radius=0.02)
    a = run_ensemble(cfg, ref)
    b = run_ensemble(cfg, ref, threads=3)
    assert np.array_equal(a.end_states, b.end_states)
    point = run_ensemble(cfg_maker(n_paths=128), ref)
    assert not np.array_equal(a.end_states, point.end_states)


def test_pure_noise_exit_scaling():
    # harness oracle: with the drift removed the phase is a scaled
    # Brownian motion, so median exit from |x| < eps1 is const * eps1^2/mu^2
    def median_exit(mu, eps1, n_paths=300, dt=2e-4, horizon=6.0, seed=99):
        rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
        n_steps = int(round(horizon / dt))
        t = np.full(n_paths, horizon)
        done = np.zeros(n_paths, dtype=bool)
        x = np.zeros(n_paths)
        s = mu * math.sqrt(dt)
        for k in range(n_steps):
            x = x + s * rng.standard_normal(n_paths)
            out = ~done & (np.abs(x) >= eps1)
            t[out] = (k + 1) * dt
            done |= out
            if done.all():
                break
        assert done.all()
        return float(np.median(t))

    consts = [median_exit(mu, eps1) * mu * mu / (eps1 * eps1)
              for mu, eps1 in [(0.2, 0.1), (0.1, 0.1), (0.15, 0.12)]]
    assert max(consts) / min(consts) < 1.15


def _traj(times, r, psi, truncated=False):
    return Trajectory(np.asarray(times, dtype=float),
                      np.column_stack([r, psi]), truncated=truncated)


def test_classify_capture_synthetic(params):
    t = np.linspace(0.0, 60.0, 1201)
    locked = _traj(t, params.lam * t + params.nu, np.full_like(t, 3.04))
    assert classify_capture(locked, params) == "captured"

    slipping = _traj(np.linspace(0.0, 100.0, 2001),
                     np.full(2001, 2.0),
                     -10.0 * math.pi * np.linspace(0.0, 1.0, 2001))
    assert classify_capture(slipping, params) == "escaped"

    low = _traj(t, np.full_like(t, 5.0), np.full_like(t, 3.04))
    assert classify_capture(low, params) == "escaped"

    short = _traj(np.linspace(0.0, 40.0, 801),
                  params.lam * np.linspace(0.0, 40.0, 801) + params.nu,
                  np.full(801, 3.04))
    assert classify_capture(short, params) == "indeterminate"

    dead = _traj(t, params.lam * t + params.nu, np.full_like(t, 3.04),
                 truncated=True)
    assert classify_capture(dead, params) == "escaped"

    # phase winding in the tail flips the verdict even at full amplitude
    psi = np.full_like(t, 3.04)
    tail = t >= 48.0
    psi[tail] += 4.0 * math.pi * (t[tail] - 48.0) / 12.0
    winding = _traj(t, params.lam * t + params.nu, psi)
    assert classify_capture(winding, params) == "escaped"


def test_classify_noisy_tolerates_jitter(params):
    # dense zigzag: huge total variation, small range
    t = np.linspace(0.0, 60.0, 2401)
    psi = 3.04 + 0.05 * np.where(np.arange(t.size) % 2 == 0, 1.0, -1.0)
    traj = _traj(t, params.lam * t + params.nu, psi)
    assert classify_capture(traj, params) == "escaped"
    assert classify_capture_noisy(traj, params) == "captured"
    # on a smooth path the two rules agree
    smooth = _traj(t, params.lam * t + params.nu, np.full_like(t, 3.04))
    assert classify_capture(smooth, params) == "captured"
    assert classify_capture_noisy(smooth, params) == "captured"


def test_exit_time_scaling_validation(ref, cfg_maker):
    cfgs = [cfg_maker(mu=m, n_paths=100) for m in (0.2, 0.3)]
    with pytest.raises(ValueError, match="at least 3"):
        exit_time_scaling(cfgs, ref)
    dup = [cfg_maker(mu=m, n_paths=100) for m in (0.2, 0.3, 0.3)]
    with pytest.raises(ValueError, match="distinct"):
        exit_time_scaling(dup, ref)
    mixed = [cfg_maker(mu=0.2, n_paths=100),
             cfg_maker(mu=0.3, n_paths=100),
             cfg_maker(mu=0.45, n_paths=100, eps1=0.2)]
    with pytest.raises(ValueError, match="differ only"):
        exit_time_scaling(mixed, ref)


def test_supermartingale_depth_limit(ref, cert, cfg_maker):
    cfg = cfg_maker(mu=0.05, n_paths=100, horizon=1.0)
    with pytest.raises(NotImplementedError):
        supermartingale_check(cfg, cert, N=2, ref=ref)
