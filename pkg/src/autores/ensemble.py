"""Monte Carlo engine: deviation probabilities, first-exit times,
capture fractions, and the supermartingale sanity test.

Paths are integrated in fixed-width blocks, vectorized across the block.
Every path owns a counter-based noise stream keyed by (master_seed,
path_index), and blocks are merged in path order, so aggregates are
bit-identical whether one thread or eight run the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .model import SystemParams, NoiseSchedule
from .integrators import NoiseStream, Trajectory, ReferenceSolution, sde_step_count
from .lyapunov import StabilityCertificate, noise_class_check

BLOCK_PATHS = 128   # vectorization width; results do not depend on it being hit
CHUNK_STEPS = 2048  # noise increments are drawn per path in chunks this long


@dataclass(frozen=True)
class EnsembleConfig:
    """One Monte Carlo experiment on the perturbed system.

    Paths start at x0 = (r, psi) at tau0, or in a ball of radius
    ball_radius around the reference solution when ball_radius > 0, and
    run to tau0 + horizon with Euler-Maruyama steps dt.
    """

    params: SystemParams
    noise: NoiseSchedule
    tau0: float
    horizon: float
    dt: float
    n_paths: int
    master_seed: int
    x0: tuple = (1.0, 0.0)
    ball_radius: float = 0.0
    eps1: float = 0.1

    def __post_init__(self):
        if self.n_paths < 100:
            raise ValueError("n_paths must be at least 100 for probability estimates")
        if self.horizon <= 0 or self.dt <= 0:
            raise ValueError("horizon and dt must be positive")
        n_steps = sde_step_count(self.tau0, self.tau0 + self.horizon, self.dt)
        if n_steps > 50_000_000:
            raise ValueError("horizon/dt implies an unreasonable step budget")

    def to_dict(self) -> dict:
        return {
            "lambda": self.params.lam, "gamma": self.params.gamma,
            "mu": self.noise.mu,
            "sigma1": {"coeff": self.noise.sigma1.coeff, "power": self.noise.sigma1.power},
            "sigma2": {"coeff": self.noise.sigma2.coeff, "power": self.noise.sigma2.power},
            "h": self.noise.h,
            "tau0": self.tau0, "horizon": self.horizon, "dt": self.dt,
            "n_paths": self.n_paths, "master_seed": self.master_seed,
            "x0": list(self.x0), "ball_radius": self.ball_radius,
            "eps1": self.eps1,
        }


def wilson_interval(k: int, n: int, z: float = 1.959963984540054):
    """Wilson 95% score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class EnsembleStats:
    """Aggregates over one ensemble; all intervals are Wilson 95%.

    exit_times hold the elapsed time from tau0 to the first exit from
    the eps1 tube; censored paths carry the horizon and are flagged.
    """

    n_paths: int
    exceed_prob_psi: float
    exceed_psi_interval: tuple
    exceed_prob_r: float
    exceed_r_interval: tuple
    capture_fraction: float
    capture_interval: tuple
    exit_times: np.ndarray
    censored: np.ndarray
    sup_psi_dev: np.ndarray
    sup_r_dev_weighted: np.ndarray
    sup_r_dev_raw: np.ndarray
    captured: np.ndarray
    escaped_at: np.ndarray
    end_states: np.ndarray
    out_of_class: bool = False

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "exceed_prob_psi": self.exceed_prob_psi,
            "exceed_psi_interval": list(self.exceed_psi_interval),
            "exceed_prob_r": self.exceed_prob_r,
            "exceed_r_interval": list(self.exceed_r_interval),
            "capture_fraction": self.capture_fraction,
            "capture_interval": list(self.capture_interval),
            "median_exit_time": float(np.median(self.exit_times)),
            "censored_fraction": float(np.mean(self.censored)),
            "out_of_class": self.out_of_class,
        }


def _precompute_step_grid(cfg: EnsembleConfig, ref: Optional[ReferenceSolution]):
    """Per-step quantities shared by all paths: times, step sizes, schedule
    values, and reference samples (NaN outside the reference domain)."""
    tau0, tau1 = cfg.tau0, cfg.tau0 + cfg.horizon
    n_steps = sde_step_count(tau0, tau1, cfg.dt)
    k = np.arange(n_steps)
    tau_at = tau0 + k * cfg.dt                       # step start times
    tau_next = np.minimum(tau0 + (k + 1) * cfg.dt, tau1)
    tau_next[-1] = tau1
    h = tau_next - tau_at
    s1 = np.asarray(cfg.noise.sigma1(tau_at), dtype=float)
    s2 = np.asarray(cfg.noise.sigma2(tau_at), dtype=float)
    if ref is not None:
        inside = (tau_next >= ref.tau_min) & (tau_next <= ref.tau_max)
        rs = np.full(n_steps, np.nan)
        ps = np.full(n_steps, np.nan)
        if inside.any():
            rs[inside], ps[inside] = ref.state(tau_next[inside])
    else:
        rs = np.full(n_steps, np.nan)
        ps = np.full(n_steps, np.nan)
    return tau_at, tau_next, h, s1, s2, rs, ps


def _run_block(cfg: EnsembleConfig, lo: int, hi: int, grid,
               tv_window_start: float):
    """Integrate paths [lo, hi); returns per-path statistics arrays.

    Pure function of (cfg, lo, hi): safe to run on any thread.
    """
    tau_at, tau_next, h, s1, s2, rs, ps = grid
    n_steps = tau_at.size
    m = hi - lo
    p = cfg.params
    mu = cfg.noise.mu
    sqrt_dt = math.sqrt(cfg.dt)

    rngs = [NoiseStream(cfg.master_seed, j).generator() for j in range(lo, hi)]
    r = np.full(m, float(cfg.x0[0]))
    psi = np.full(m, float(cfg.x0[1]))
    if cfg.ball_radius > 0:
        # ball start draws come first from each path's stream
        for i, rng in enumerate(rngs):
            u, ang = rng.uniform(size=2)
            rad = cfg.ball_radius * math.sqrt(u)
            r[i] += rad * math.cos(2 * math.pi * ang)
            psi[i] += rad * math.sin(2 * math.pi * ang)

    alive = np.ones(m, dtype=bool)
    escaped_at = np.full(m, np.nan)
    sup_psi = np.zeros(m)
    sup_rw = np.zeros(m)
    sup_rr = np.zeros(m)
    # exit times are elapsed since tau0; censored paths carry the horizon
    exit_time = np.full(m, cfg.horizon)
    exited = np.zeros(m, dtype=bool)
    # phase range over the classification window; the total-variation rule
    # used for deterministic paths diverges on diffusion paths as dt -> 0,
    # so the noisy classifier bounds max-min instead (identical verdicts
    # in the zero-noise limit)
    psi_lo = np.full(m, np.inf)
    psi_hi = np.full(m, -np.inf)

    eps1 = cfg.eps1
    gamma, lam = p.gamma, p.lam
    k0 = 0
    while k0 < n_steps and alive.any():
        k1 = min(k0 + CHUNK_STEPS, n_steps)
        dw = np.empty((m, k1 - k0, 2))
        for i, rng in enumerate(rngs):
            dw[i] = rng.standard_normal((k1 - k0, 2))
        dw *= sqrt_dt
        for k in range(k0, k1):
            hk = h[k]
            if hk != cfg.dt:  # partial step rescales increment variance
                w1 = dw[:, k - k0, 0] * math.sqrt(hk / cfg.dt)
                w2 = dw[:, k - k0, 1] * math.sqrt(hk / cfg.dt)
            else:
                w1 = dw[:, k - k0, 0]
                w2 = dw[:, k - k0, 1]
            sin_psi = np.sin(psi)
            cos_psi = np.cos(psi)
            dr = r * sin_psi - gamma * r
            dp = r - lam * tau_at[k] + cos_psi
            r_new = r + dr * hk + mu * (s1[k] * r * sin_psi * w1)
            psi_new = psi + dp * hk + mu * (s1[k] * cos_psi * w1 + s2[k] * w2)
            bad = ~np.isfinite(r_new) | ~np.isfinite(psi_new)
            newly_dead = alive & bad
            if newly_dead.any():
                escaped_at[newly_dead] = tau_next[k]
                alive[newly_dead] = False
            step_mask = alive & ~bad
            r = np.where(step_mask, r_new, r)
            psi = np.where(step_mask, psi_new, psi)

            if not math.isnan(rs[k]):
                # deviation metrics exist only on the reference domain
                dev_psi = np.abs(psi - ps[k])
                dev_r = np.abs(r - rs[k])
                wgt = 1.0 / math.sqrt(tau_next[k])
                upd = step_mask
                sup_psi = np.where(upd, np.maximum(sup_psi, dev_psi), sup_psi)
                sup_rw = np.where(upd, np.maximum(sup_rw, dev_r * wgt), sup_rw)
                sup_rr = np.where(upd, np.maximum(sup_rr, dev_r), sup_rr)
                out = (dev_psi >= eps1) | (dev_r * wgt >= eps1)
                newly_out = upd & out & ~exited
                if newly_out.any():
                    exit_time[newly_out] = tau_next[k] - cfg.tau0
                    exited[newly_out] = True
            if tau_next[k] >= tv_window_start:
                psi_lo = np.where(step_mask, np.minimum(psi_lo, psi), psi_lo)
                psi_hi = np.where(step_mask, np.maximum(psi_hi, psi), psi_hi)
        k0 = k1

    tau_end = cfg.tau0 + cfg.horizon
    captured = alive & (r > lam * tau_end / 2.0) & (psi_hi - psi_lo < 2.0 * math.pi)
    # escape by blow-up counts as an exit wherever the tube was being tracked
    exit_time = np.where(~exited & ~alive & np.isfinite(escaped_at),
                         escaped_at - cfg.tau0, exit_time)
    exited = exited | ~alive
    return {
        "sup_psi": sup_psi, "sup_rw": sup_rw, "sup_rr": sup_rr,
        "exit_time": exit_time, "exited": exited,
        "captured": captured, "escaped_at": escaped_at,
        "end_r": r, "end_psi": psi,
    }


def run_ensemble(cfg: EnsembleConfig, ref: Optional[ReferenceSolution] = None,
                 threads: int = 1, out_of_class_ok: bool = False) -> EnsembleStats:
    """Integrate the ensemble and aggregate deviation/exit/capture statistics.

    The noise schedule must pass its class check unless the run is
    explicitly marked out-of-class.  Deviation and exit metrics are
    measured against ref wherever the path time lies in its domain; with
    no ref, only capture statistics are meaningful.  Blow-up is recorded
    as escape data, never an error.
    """
    check = noise_class_check(cfg.noise, max(cfg.tau0, 1e-6))
    out_of_class = not check["admissible"]
    if out_of_class and not out_of_class_ok:
        raise ValueError(
            f"noise schedule not in class (bound {check['bound']}, "
            f"h {cfg.noise.h}); pass out_of_class_ok=True to run anyway")
    grid = _precompute_step_grid(cfg, ref)
    tv_window_start = cfg.tau0 + 0.8 * cfg.horizon
    blocks = [(lo, min(lo + BLOCK_PATHS, cfg.n_paths))
              for lo in range(0, cfg.n_paths, BLOCK_PATHS)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(
                lambda b: _run_block(cfg, b[0], b[1], grid, tv_window_start),
                blocks))
    else:
        results = [_run_block(cfg, lo, hi, grid, tv_window_start)
                   for lo, hi in blocks]
    # merge in path order; aggregation below is then thread-count independent
    def cat(key):
        return np.concatenate([res[key] for res in results])

    sup_psi = cat("sup_psi")
    sup_rw = cat("sup_rw")
    exit_time = cat("exit_time")
    exited = cat("exited")
    captured = cat("captured")
    n = cfg.n_paths
    k_psi = int(np.sum(sup_psi >= cfg.eps1))
    k_r = int(np.sum(sup_rw >= cfg.eps1))
    k_cap = int(np.sum(captured))
    return EnsembleStats(
        n_paths=n,
        exceed_prob_psi=k_psi / n,
        exceed_psi_interval=wilson_interval(k_psi, n),
        exceed_prob_r=k_r / n,
        exceed_r_interval=wilson_interval(k_r, n),
        capture_fraction=k_cap / n,
        capture_interval=wilson_interval(k_cap, n),
        exit_times=exit_time,
        censored=~exited,
        sup_psi_dev=sup_psi,
        sup_r_dev_weighted=sup_rw,
        sup_r_dev_raw=cat("sup_rr"),
        captured=captured,
        escaped_at=cat("escaped_at"),
        end_states=np.column_stack([cat("end_r"), cat("end_psi")]),
        out_of_class=out_of_class,
    )


def classify_capture(traj: Trajectory, p: SystemParams) -> str:
    """Capture verdict for a finished trajectory.

    captured: final amplitude above lam*tau_end/2 and the phase's total
    variation over the last 20% of the window below 2*pi.  A truncated
    (blown-up) or slipping-phase path is escaped.  Windows shorter than
    tau_end = 50 are indeterminate.
    """
    tau_end = float(traj.times[-1])
    if tau_end < 50.0:
        return "indeterminate"
    if traj.truncated:
        return "escaped"
    r_end = float(traj.states[-1, 0])
    t_start = traj.times[0] + 0.8 * (tau_end - traj.times[0])
    tail = traj.times >= t_start
    psi_tail = traj.states[tail, 1]
    tv = float(np.sum(np.abs(np.diff(psi_tail)))) if psi_tail.size > 1 else 0.0
    if r_end > p.lam * tau_end / 2.0 and tv < 2.0 * math.pi:
        return "captured"
    return "escaped"


def classify_capture_noisy(traj: Trajectory, p: SystemParams) -> str:
    """Capture verdict for a diffusion path.

    Same amplitude test as classify_capture, but the phase criterion is
    the range (max minus min) over the last 20% of the window instead of
    the total variation: along a diffusion path the total variation grows
    without bound as the recording step shrinks, so it cannot separate a
    locked phase from a slipping one.  The range can.  Both rules agree
    on smooth paths.
    """
    tau_end = float(traj.times[-1])
    if tau_end < 50.0:
        return "indeterminate"
    if traj.truncated:
        return "escaped"
    r_end = float(traj.states[-1, 0])
    t_start = traj.times[0] + 0.8 * (tau_end - traj.times[0])
    psi_tail = traj.states[traj.times >= t_start, 1]
    spread = float(psi_tail.max() - psi_tail.min()) if psi_tail.size else 0.0
    if r_end > p.lam * tau_end / 2.0 and spread < 2.0 * math.pi:
        return "captured"
    return "escaped"


def exit_time_scaling(cfgs: Sequence[EnsembleConfig],
                      ref: ReferenceSolution, threads: int = 1,
                      n_boot: int = 1000, seed: int = 12345) -> dict:
    """Fit log(median first-exit time) against log(mu) across ensembles.

    Configs must differ only in noise amplitude and at least three are
    required.  Censored paths enter at the horizon value; the fit is
    refused when more than half the paths are censored at every mu.
    Returns slope with a bootstrap percentile interval (paths resampled
    per ensemble, n_boot times).
    """
    if len(cfgs) < 3:
        raise ValueError("need at least 3 noise amplitudes")
    mus = [c.noise.mu for c in cfgs]
    if len(set(mus)) != len(mus):
        raise ValueError("noise amplitudes must be distinct")
    base = cfgs[0]
    for c in cfgs[1:]:
        same = (c.params == base.params and c.tau0 == base.tau0
                and c.eps1 == base.eps1 and c.x0 == base.x0
                and c.ball_radius == base.ball_radius)
        if not same:
            raise ValueError("configs must differ only in mu (and horizon/dt)")
    stats = [run_ensemble(c, ref, threads=threads) for c in cfgs]
    if all(float(np.mean(s.censored)) > 0.5 for s in stats):
        raise ValueError("more than half the paths censored at every mu; "
                         "increase the horizon")
    log_mu = np.log(np.asarray(mus, dtype=float))
    medians = np.array([float(np.median(s.exit_times)) for s in stats])
    slope = float(np.polyfit(log_mu, np.log(medians), 1)[0])

    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    boot = np.empty(n_boot)
    boot_med = np.empty((n_boot, len(mus)))
    exits = [s.exit_times for s in stats]
    for b in range(n_boot):
        med = [np.median(rng.choice(e, size=e.size, replace=True))
               for e in exits]
        boot_med[b] = med
        boot[b] = np.polyfit(log_mu, np.log(med), 1)[0]
    lo, hi = np.percentile(boot, [2.5, 97.5])
    med_lo, med_hi = np.percentile(boot_med, [2.5, 97.5], axis=0)
    return {
        "mus": mus,
        "medians": medians.tolist(),
        "median_intervals": [[float(a), float(b)]
                             for a, b in zip(med_lo, med_hi)],
        "censored_fractions": [float(np.mean(s.censored)) for s in stats],
        "slope": slope,
        "slope_interval": (float(lo), float(hi)),
        "n_boot": n_boot,
    }


def _error_block(cfg: EnsembleConfig, lo: int, hi: int, grid,
                 cert: StabilityCertificate, chain_const: float,
                 obs_idx: np.ndarray):
    """Stopped error-system paths for the supermartingale check.

    Integrates (R, Psi) with the deviation drift and the shifted-state
    diffusion, stops each path at its first exit from the certified tube
    d <= d0, and records the comparison function U_1 = 4V + mu^2 c (T +
    t0 - t) at the stopped state: observations at obs_idx steps plus the
    pathwise running supremum over every step.
    """
    tau_at, tau_next, h, s1, s2, rs, ps = grid
    n_steps = tau_at.size
    m = hi - lo
    p = cfg.params
    mu = cfg.noise.mu
    gamma, nu = p.gamma, p.nu
    sqrt_dt = math.sqrt(cfg.dt)
    t0, T = cfg.tau0, cfg.horizon

    rngs = [NoiseStream(cfg.master_seed, j).generator() for j in range(lo, hi)]
    R = np.full(m, float(cfg.x0[0]))
    Psi = np.full(m, float(cfg.x0[1]))
    if cfg.ball_radius > 0:
        for i, rng in enumerate(rngs):
            u, ang = rng.uniform(size=2)
            rad = cfg.ball_radius * math.sqrt(u)
            R[i] += rad * math.cos(2 * math.pi * ang)
            Psi[i] += rad * math.sin(2 * math.pi * ang)

    def U1(Rv, Pv, rsv, psv, tau, clock_t):
        H = (Rv * Rv / 2.0 + (Rv + rsv) * (np.cos(Pv + psv) - np.cos(psv))
             + Pv * rsv * np.sin(psv))
        V = (H + gamma * Rv * Pv / 2.0) / (nu * tau)
        return 4.0 * V + mu * mu * chain_const * (T + t0 - clock_t)

    stopped = np.zeros(m, dtype=bool)
    # stopped-state snapshot: (R, Psi, rs, ps, tau)
    Rs_c, Ps_c = R.copy(), Psi.copy()
    rs_c = np.full(m, rs[0] if np.isfinite(rs[0]) else np.nan)
    ps_c = np.full(m, ps[0] if np.isfinite(ps[0]) else np.nan)
    tau_c = np.full(m, t0)

    rs0, ps0 = rs_c, ps_c
    u_now = U1(R, Psi, rs0, ps0, np.full(m, t0), np.full(m, t0))
    u_sup = u_now.copy()
    obs = np.empty((obs_idx.size, m))
    obs_ptr = 0
    if obs_idx.size and obs_idx[0] == -1:  # observation at tau0 itself
        obs[0] = u_now
        obs_ptr = 1

    k0 = 0
    while k0 < n_steps:
        k1 = min(k0 + CHUNK_STEPS, n_steps)
        dw = np.empty((m, k1 - k0, 2))
        for i, rng in enumerate(rngs):
            dw[i] = rng.standard_normal((k1 - k0, 2))
        dw *= sqrt_dt
        for k in range(k0, k1):
            hk = h[k]
            scale = 1.0 if hk == cfg.dt else math.sqrt(hk / cfg.dt)
            w1 = dw[:, k - k0, 0] * scale
            w2 = dw[:, k - k0, 1] * scale
            rsk, psk = rs[k], ps[k]
            live = ~stopped
            if live.any():
                cosd = np.cos(Psi + psk)
                sind = np.sin(Psi + psk)
                dH_dR = R + cosd - math.cos(psk)
                dH_dPsi = -(R + rsk) * sind + rsk * math.sin(psk)
                dR = -dH_dPsi - gamma * R
                dPsi = dH_dR
                R_new = R + dR * hk + mu * (s1[k] * (rsk + R) * sind * w1)
                Psi_new = Psi + dPsi * hk + mu * (s1[k] * cosd * w1 + s2[k] * w2)
                R = np.where(live, R_new, R)
                Psi = np.where(live, Psi_new, Psi)
                out = (R * R + Psi * Psi > cert.d0 * cert.d0) | \
                      ~np.isfinite(R) | ~np.isfinite(Psi)
                newly = live & out
                if newly.any():
                    Rs_c = np.where(newly, R, Rs_c)
                    Ps_c = np.where(newly, Psi, Ps_c)
                    rs_c = np.where(newly, rsk, rs_c)
                    ps_c = np.where(newly, psk, ps_c)
                    tau_c = np.where(newly, tau_next[k], tau_c)
                    stopped |= newly
            live = ~stopped
            Rv = np.where(live, R, Rs_c)
            Pv = np.where(live, Psi, Ps_c)
            rsv = np.where(live, rsk, rs_c)
            psv = np.where(live, psk, ps_c)
            tv = np.where(live, tau_next[k], tau_c)
            u_now = U1(Rv, Pv, rsv, psv, tv, tv)
            u_sup = np.maximum(u_sup, u_now)
            if obs_ptr < obs_idx.size and k == obs_idx[obs_ptr]:
                obs[obs_ptr] = u_now
                obs_ptr += 1
        k0 = k1
    return {"obs": obs, "u_sup": u_sup, "stopped": stopped}


def supermartingale_check(cfg: EnsembleConfig, cert: StabilityCertificate,
                          N: int, ref: ReferenceSolution,
                          n_obs: int = 41, threads: int = 1,
                          doob_ladder=(1.0, 2.0, 4.0)) -> dict:
    """Empirical supermartingale and maximal-inequality test for U_1.

    cfg.x0 is read as the starting deviation (R, Psi).  Paths are stopped
    at first exit from the certified tube.  The report carries, per
    observation band, whether the mean is non-increasing within 2 paired
    standard errors, and the maximal-bound ladder: the fraction of paths
    whose running sup of U_1 reaches c times the start value, against the
    mean-start/c bound, within 3 standard errors.
    """
    if N != 1:
        raise NotImplementedError("only the N=1 comparison chain is testable "
                                  "with closed-form constants")
    grid = _precompute_step_grid(cfg, ref)
    n_steps = grid[0].size
    # chain clock constant mu^2 h n^2 C per unit time
    chain_const = cfg.noise.h * 4.0 * cert.C
    obs_steps = np.unique(np.linspace(0, n_steps - 1, n_obs - 1).astype(int))
    obs_idx = np.concatenate([[-1], obs_steps])  # -1 marks the tau0 snapshot
    blocks = [(lo, min(lo + BLOCK_PATHS, cfg.n_paths))
              for lo in range(0, cfg.n_paths, BLOCK_PATHS)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(
                lambda b: _error_block(cfg, b[0], b[1], grid, cert,
                                       chain_const, obs_idx), blocks))
    else:
        results = [_error_block(cfg, lo, hi, grid, cert, chain_const, obs_idx)
                   for lo, hi in blocks]
    obs = np.concatenate([res["obs"] for res in results], axis=1)
    u_sup = np.concatenate([res["u_sup"] for res in results])
    stopped = np.concatenate([res["stopped"] for res in results])

    n = cfg.n_paths
    means = obs.mean(axis=1)
    bands = []
    ok = True
    for i in range(len(means) - 1):
        diff = obs[i + 1] - obs[i]
        se = float(diff.std(ddof=1)) / math.sqrt(n)
        passed = float(diff.mean()) <= 2.0 * se
        bands.append({"mean_before": float(means[i]),
                      "mean_after": float(means[i + 1]),
                      "mean_diff": float(diff.mean()), "se": se,
                      "pass": bool(passed)})
        ok = ok and passed

    u_start = obs[0]
    mean_start = float(u_start.mean())
    ladder = []
    ladder_ok = True
    for c_mult in doob_ladder:
        c = c_mult * mean_start
        frac = float(np.mean(u_sup >= c))
        bound = min(1.0, mean_start / c)
        se = math.sqrt(max(frac * (1 - frac), 1.0 / n) / n)
        passed = frac <= bound + 3.0 * se
        ladder.append({"c_multiple": c_mult, "c": c, "fraction": frac,
                       "bound": bound, "se": se, "pass": bool(passed)})
        ladder_ok = ladder_ok and passed

    return {
        "mean_nonincreasing": bool(ok),
        "bands": bands,
        "doob_ok": bool(ladder_ok),
        "doob_ladder": ladder,
        "stopped_fraction": float(np.mean(stopped)),
        "mean_start": mean_start,
        "n_paths": n,
    }
