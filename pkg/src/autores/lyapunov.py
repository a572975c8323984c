"""Lyapunov machinery: the deviation-energy function V, numeric
certification of its inequalities, the iterated comparison chain, and
admissibility thresholds for the finite-time stability guarantees.

Certification is sampled, not proved: inequalities are checked on a
dense grid plus random spot checks, and the certificate records the
worst observed slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .model import (
    SystemParams,
    NoiseSchedule,
    hamiltonian,
    hamiltonian_partials,
    hamiltonian_time_partial,
    hamiltonian_hessian,
)


@dataclass(frozen=True)
class StabilityCertificate:
    """Numerically validated constants for the deviation-system inequalities.

    Valid on the tube sqrt(R^2 + Psi^2) <= d0, tau >= tau0.  The weighted
    norm is w = R^2/(nu tau) + Psi^2; U = 4V satisfies w <= U <= A w with
    A = 3, y-weight a = 1/nu, weight exponent b = 1, decay rate q.
    margin is the smallest slack seen over the grid (>= 0 iff certified).
    """

    d0: float
    tau0: float
    A: float
    B: float
    C: float
    q: float
    a: float
    b: float
    rho0: float
    grid: int
    margin: float
    tau_hi: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class NoCertificate:
    """Search failure: names the first violated inequality and where."""

    reason: str
    tau: float
    R: float
    Psi: float


@dataclass(frozen=True)
class ThresholdReport:
    N: int
    kappa: float
    h: float
    eps1: float
    eps2: float
    delta: float
    Delta: float
    T_mu_exponent: float
    empirical: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def eval_V(e, tau, p: SystemParams, ref):
    """V = [H + gamma R Psi / 2] / (nu tau); accepts arrays."""
    R, Psi = e
    tau = np.asarray(tau, dtype=float)
    H = hamiltonian(e, tau, p, ref)
    return (H + p.gamma * R * Psi / 2.0) / (p.nu * tau)


def grad_V(e, tau, p: SystemParams, ref):
    """Closed-form (dV/dR, dV/dPsi)."""
    R, Psi = e
    tau = np.asarray(tau, dtype=float)
    dH_dR, dH_dPsi = hamiltonian_partials(e, tau, p, ref)
    gR = (dH_dR + p.gamma * Psi / 2.0) / (p.nu * tau)
    gP = (dH_dPsi + p.gamma * R / 2.0) / (p.nu * tau)
    return gR, gP


def hess_V(e, tau, p: SystemParams, ref):
    """Closed-form Hessian entries (V_RR, V_RPsi, V_PsiPsi)."""
    tau = np.asarray(tau, dtype=float)
    H_RR, H_RP, H_PP = hamiltonian_hessian(e, tau, p, ref)
    s = 1.0 / (p.nu * tau)
    return H_RR * s, (H_RP + p.gamma / 2.0) * s, H_PP * s


def dV_dtau(e, tau, p: SystemParams, ref):
    """Total derivative of V along the deviation flow, in closed form.

    Substituting the flow (-dH/dPsi - gamma R, dH/dR) collapses the
    Hamiltonian cross terms, leaving
      dV/dtau = -V/tau + [dH/dtau - (gamma/2)(R H_R + Psi H_Psi)
                          - gamma^2 R Psi / 2] / (nu tau).
    """
    R, Psi = e
    tau = np.asarray(tau, dtype=float)
    V = eval_V(e, tau, p, ref)
    dH_dR, dH_dPsi = hamiltonian_partials(e, tau, p, ref)
    dH_dt = hamiltonian_time_partial(e, tau, p, ref)
    bracket = (dH_dt
               - (p.gamma / 2.0) * (R * dH_dR + Psi * dH_dPsi)
               - p.gamma ** 2 * R * Psi / 2.0)
    return -V / tau + bracket / (p.nu * tau)


def weighted_norm(e, tau, p: SystemParams):
    """w = R^2/(nu tau) + Psi^2, the norm the sandwich is written in."""
    R, Psi = e
    tau = np.asarray(tau, dtype=float)
    return R * R / (p.nu * tau) + Psi * Psi


def _inequality_slacks(R, Psi, tau, p: SystemParams, ref, q: float):
    """Pointwise slack of each certified inequality; negative = violated.

    Returns (sandwich_lo, sandwich_hi, decay) where
      sandwich_lo = V - w/4,  sandwich_hi = 3w/4 - V,  decay = -qV - dV/dtau.
    All are normalized by w so slacks are comparable across the tube.
    """
    e = (R, Psi)
    w = weighted_norm(e, tau, p)
    V = eval_V(e, tau, p, ref)
    dV = dV_dtau(e, tau, p, ref)
    with np.errstate(invalid="ignore", divide="ignore"):
        lo = np.where(w > 0, (V - 0.25 * w) / np.maximum(w, 1e-300), np.inf)
        hi = np.where(w > 0, (0.75 * w - V) / np.maximum(w, 1e-300), np.inf)
        decay = np.where(w > 0, (-q * V - dV) / np.maximum(w, 1e-300), np.inf)
    return lo, hi, decay


def _tube_samples(d0: float, tau0: float, tau_hi: float, grid: int):
    """Polar-by-log-time sample of the tube boundary and interior."""
    radii = np.linspace(d0 / grid, d0, grid)
    angles = np.linspace(0.0, 2.0 * np.pi, grid, endpoint=False)
    taus = np.geomspace(tau0, tau_hi, grid)
    rr, aa, tt = np.meshgrid(radii, angles, taus, indexing="ij")
    R = (rr * np.cos(aa)).ravel()
    Psi = (rr * np.sin(aa)).ravel()
    return R, Psi, tt.ravel()


def _tube_ok(d0, tau0, tau_hi, grid, p, ref, q):
    R, Psi, tt = _tube_samples(d0, tau0, tau_hi, grid)
    lo, hi, decay = _inequality_slacks(R, Psi, tt, p, ref, q)
    worst = min(float(lo.min()), float(hi.min()), float(decay.min()))
    return worst >= 0.0, worst, (R, Psi, tt, lo, hi, decay)


def certify(p: SystemParams, ref, d_range=(1e-3, 0.3),
            tau_range=(10.0, 50.0), grid: int = 32,
            tau_hi: Optional[float] = None, q: Optional[float] = None):
    """Search for the largest certified tube.

    tau0 candidates ascend through tau_range; for each, the largest d0 in
    d_range passing every inequality on the sampled tube is found by
    bisection; the certificate with maximal d0 wins.  B and C are then
    measured as the smallest constants fitting the winning tube.  Returns
    NoCertificate (naming the first violated inequality and its location)
    if nothing in range certifies.
    """
    if grid < 32:
        raise ValueError("grid must be at least 32 points per axis")
    q = p.gamma / 6.0 if q is None else q
    if tau_hi is None:
        tau_hi = ref.tau_max
    d_lo, d_hi = d_range
    tau0_candidates = np.linspace(tau_range[0], tau_range[1], 9)

    best = None  # (d0, tau0, margin)
    first_violation = None
    for tau0 in tau0_candidates:
        if tau0 >= tau_hi:
            break
        ok_lo, worst_lo, detail = _tube_ok(d_lo, tau0, tau_hi, grid, p, ref, q)
        if not ok_lo:
            if first_violation is None:
                R, Psi, tt, lo, hi, decay = detail
                names = ("sandwich lower", "sandwich upper", "decay")
                mins = [lo.min(), hi.min(), decay.min()]
                which = int(np.argmin(mins))
                idx = int(np.argmin((lo, hi, decay)[which]))
                first_violation = NoCertificate(
                    reason=f"{names[which]} inequality violated",
                    tau=float(tt[idx]), R=float(R[idx]), Psi=float(Psi[idx]))
            continue
        if _tube_ok(d_hi, tau0, tau_hi, grid, p, ref, q)[0]:
            d_best, margin = d_hi, _tube_ok(d_hi, tau0, tau_hi, grid, p, ref, q)[1]
        else:
            a_, b_ = d_lo, d_hi
            for _ in range(40):
                mid = 0.5 * (a_ + b_)
                if _tube_ok(mid, tau0, tau_hi, grid, p, ref, q)[0]:
                    a_ = mid
                else:
                    b_ = mid
            d_best = a_
            margin = _tube_ok(d_best, tau0, tau_hi, grid, p, ref, q)[1]
        if best is None or d_best > best[0]:
            best = (d_best, float(tau0), margin)

    if best is None:
        return first_violation if first_violation is not None else NoCertificate(
            reason="no tube in range certified", tau=float(tau_range[0]),
            R=0.0, Psi=0.0)

    d0, tau0, margin = best
    # measure the smallest B, C fitting the winning tube
    R, Psi, tt = _tube_samples(d0, tau0, tau_hi, grid)
    V = eval_V((R, Psi), tt, p, ref)
    gR, gP = grad_V((R, Psi), tt, p, ref)
    grad_sq = gR * gR + gP * gP
    with np.errstate(invalid="ignore", divide="ignore"):
        B = float(np.max(np.where(V > 0, grad_sq / np.maximum(V, 1e-300), 0.0)))
    h_rr, h_rp, h_pp = hess_V((R, Psi), tt, p, ref)
    # spectral norm of a symmetric 2x2
    mean = (h_rr + h_pp) / 2.0
    disc = np.sqrt(((h_rr - h_pp) / 2.0) ** 2 + h_rp ** 2)
    C = float(np.max(np.abs(mean) + disc))
    return StabilityCertificate(
        d0=float(d0), tau0=float(tau0), A=3.0, B=B, C=C, q=float(q),
        a=1.0 / p.nu, b=1.0, rho0=float(d0), grid=grid,
        margin=float(margin), tau_hi=float(tau_hi))


def spot_check(cert: StabilityCertificate, p: SystemParams, ref,
               n: int = 10_000, seed: int = 0) -> int:
    """Random interior points; returns the number of inequality violations."""
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    rad = cert.d0 * np.sqrt(rng.uniform(0.0, 1.0, n))
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    taus = np.exp(rng.uniform(np.log(cert.tau0), np.log(cert.tau_hi), n))
    R = rad * np.cos(ang)
    Psi = rad * np.sin(ang)
    lo, hi, decay = _inequality_slacks(R, Psi, taus, p, ref, cert.q)
    return int(np.sum(lo < 0) + np.sum(hi < 0) + np.sum(decay < 0))


def chain_a(k: int, n: int, h: float, B: float, C: float, q: float) -> float:
    """Chain constant a_k = (k+1) n^2 h (B + C) / q."""
    return (k + 1) * n * n * h * (B + C) / q


def chain_U(N: int, mu: float, h: float, n: int, B: float, C: float,
            q: float, T: float, U_value, t, t0: float):
    """Iterated comparison function U_N.

    U_1 = U + mu^2 h n^2 C (T + t0 - t); for k >= 2,
    U_k = U^k + mu^2 a_{k-1} U_{k-1}.  Nondecreasing in U; equals U at
    the horizon when N = 1.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if min(h, n, C, q) <= 0 or T < 0:
        raise ValueError("constants must be positive and T nonnegative")
    t = np.asarray(t, dtype=float)
    if np.any(t < t0) or np.any(t > t0 + T):
        raise ValueError("t must lie in [t0, t0 + T]")
    U = np.asarray(U_value, dtype=float)
    Uk = U + mu * mu * h * n * n * C * (T + t0 - t)
    for k in range(2, N + 1):
        ak = chain_a(k - 1, n, h, B, C, q)
        Uk = U ** k + mu * mu * ak * Uk
    return Uk


def thresholds(N: int, kappa: float, h: float, n: int, A: float, a: float,
               C: float, eps1: float, eps2: float) -> ThresholdReport:
    """Admissibility thresholds for the finite-horizon stability guarantee.

    The closed forms hold for N = 1:
      delta = (eps1^2 eps2 / (2 A (1 + a)))^{1/2}
      Delta = (eps1^2 eps2 / (2 n^2 h C))^{1/(2 kappa)}
    For N > 1 only the horizon exponent -2N(1-kappa) is exact; delta and
    Delta are then carried over and marked empirical.
    """
    if not (0 < kappa < 1):
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    if min(h, n, A, C, eps1, eps2) <= 0 or a < 0 or N < 1:
        raise ValueError("invalid threshold parameters")
    delta = math.sqrt(eps1 * eps1 * eps2 / (2.0 * A * (1.0 + a)))
    Delta = (eps1 * eps1 * eps2 / (2.0 * n * n * h * C)) ** (1.0 / (2.0 * kappa))
    return ThresholdReport(N=N, kappa=kappa, h=h, eps1=eps1, eps2=eps2,
                           delta=delta, Delta=Delta,
                           T_mu_exponent=-2.0 * N * (1.0 - kappa),
                           empirical=N > 1)


def thresholds_beta(beta: float, kappa: float) -> float:
    """Horizon exponent (kappa - 2)/(1 + beta) for decaying noise intensity."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not (0 < kappa < 1):
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    return (-2.0 + kappa) / (1.0 + beta)


def noise_class_check(n: NoiseSchedule, tau0: float) -> dict:
    """Closed-form sup over tau >= tau0 of |sigma1(tau)| tau + |sigma2(tau)|.

    Works on the power-law presets only: each term is |c| tau^e, which is
    unbounded when e > 0 and c != 0, else nonincreasing so the supremum
    sits at tau0.
    """
    if tau0 <= 0:
        raise ValueError("tau0 must be positive")
    for sched in (n.sigma1, n.sigma2):
        if not hasattr(sched, "coeff") or not hasattr(sched, "power"):
            raise TypeError("noise_class_check requires preset schedules "
                            "(constant or power-law)")
    e1 = n.sigma1.power + 1.0  # the tau weight shifts the exponent
    e2 = n.sigma2.power
    bound = 0.0
    for coeff, expo in ((n.sigma1.coeff, e1), (n.sigma2.coeff, e2)):
        if coeff != 0.0 and expo > 0:
            return {"bound": math.inf, "admissible": False}
        bound += abs(coeff) * tau0 ** expo
    return {"bound": bound, "admissible": bound <= n.h}
