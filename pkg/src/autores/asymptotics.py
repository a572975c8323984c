"""Formal large-time series for captured solutions.

A captured solution grows like r = lam*tau + sum r_k tau^-k with phase
psi = psi0 + sum psi_k tau^-k.  Substituting the truncation into the
system and matching powers of x = 1/tau gives a linear recurrence for
the coefficients; there are no free parameters once the branch (the root
of sin psi0 = gamma) is chosen.  The expansion is treated as asymptotic,
never evaluated below tau = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .model import SystemParams

STABLE = "stable"
UNSTABLE = "unstable"
_BRANCHES = (STABLE, UNSTABLE)


@dataclass(frozen=True)
class AsymptoticExpansion:
    """Coefficients of the captured-solution series up to a given order.

    r_coeffs holds r_0..r_K, psi_coeffs holds psi_1..psi_K (one shorter:
    the phase series starts at order 1 above the constant psi0).
    """

    branch: str
    psi0: float
    r_coeffs: np.ndarray
    psi_coeffs: np.ndarray
    order: int

    def to_dict(self, p: SystemParams) -> dict:
        return {
            "gamma": p.gamma,
            "lambda": p.lam,
            "branch": self.branch,
            "K": self.order,
            "psi0": self.psi0,
            "r": [float(c) for c in self.r_coeffs],
            "psi": [float(c) for c in self.psi_coeffs],
        }


def solve_psi0(p: SystemParams, branch: str) -> float:
    """Constant phase of the captured branch: the chosen root of sin psi0 = gamma.

    The root in (0, pi/2) is linearly unstable; the mirrored root
    pi - arcsin(gamma), with negative cosine, is the attracting one.
    """
    if branch not in _BRANCHES:
        raise ValueError(f"branch must be one of {_BRANCHES}, got {branch!r}")
    root = float(np.arcsin(p.gamma))
    return root if branch == UNSTABLE else float(np.pi) - root


def _residual_coeffs(gamma: float, lam: float, psi0: float,
                     r: np.ndarray, psi: np.ndarray, K: int):
    """Coefficient arrays (orders 0..K in x = 1/tau) of both equation residuals.

    r is r_0..r_K, psi is psi_1..psi_K.  Trigonometric functions of the
    phase series are expanded by Taylor composition around psi0, truncated
    at the same order as everything else.
    """
    n = K + 2  # keep one extra order so shifted products stay exact through K

    def mul(a, b):
        out = np.zeros(n)
        for i, ai in enumerate(a):
            if ai == 0.0:
                continue
            jmax = n - i
            out[i:i + jmax] += ai * b[:jmax]
        return out

    P = np.zeros(n)
    P[1:K + 1] = psi[:K]
    # cos(P), sin(P) as truncated Taylor series; P = O(x) so P^m needs m <= n
    cosP = np.zeros(n)
    cosP[0] = 1.0
    sinP = np.zeros(n)
    term = np.zeros(n)
    term[0] = 1.0  # running P^m / m!
    for m in range(1, n):
        term = mul(term, P) / m
        if m % 2 == 1:
            sinP += term * (-1.0) ** ((m - 1) // 2)
        else:
            cosP += term * (-1.0) ** (m // 2)
    s0, c0 = np.sin(psi0), np.cos(psi0)
    sin_psi = s0 * cosP + c0 * sinP
    cos_psi = c0 * cosP - s0 * sinP

    R = np.zeros(n)
    R[:K + 1] = r[:K + 1]
    S = sin_psi.copy()
    S[0] -= gamma  # vanishes identically when sin psi0 = gamma

    # amplitude equation: d/dtau(lam/x + R) = (lam/x + R)(sin psi - gamma)
    RS = mul(R, S)
    rhs1 = np.zeros(n)
    rhs1[:n - 1] += lam * S[1:]  # the lam/x factor shifts S down one order
    rhs1 += RS
    lhs1 = np.zeros(n)
    lhs1[0] = lam
    for k in range(1, K + 1):
        if k + 1 < n:
            lhs1[k + 1] = -k * r[k]

    # phase equation: d psi/dtau = R + cos psi  (the lam*tau terms cancel)
    rhs2 = R + cos_psi
    lhs2 = np.zeros(n)
    for k in range(1, K + 1):
        if k + 1 < n:
            lhs2[k + 1] = -k * psi[k - 1]

    return (lhs1 - rhs1)[:K + 1], (lhs2 - rhs2)[:K + 1]


def expand(p: SystemParams, branch: str, K: int) -> AsymptoticExpansion:
    """Coefficients through order K by matching powers of 1/tau.

    At each order j the two residual coefficients are affine in the pair
    of new unknowns (r_j, psi_{j+1}); the phase-equation row involves only
    r_j, so the system is triangular and is solved explicitly.  Raises
    ArithmeticError naming the order if a pivot degenerates (it cannot for
    valid parameters, where both pivots are bounded away from zero).
    """
    if K < 0:
        raise ValueError(f"order K must be >= 0, got {K}")
    psi0 = solve_psi0(p, branch)
    r = np.zeros(K + 1)
    psi = np.zeros(K)

    def resid_at(j, rj, pj1):
        rr = r.copy()
        pp = psi.copy()
        rr[j] = rj
        if j < K:
            pp[j] = pj1
        e1, e2 = _residual_coeffs(p.gamma, p.lam, psi0, rr, pp, K)
        return np.array([e1[j], e2[j]])

    for j in range(K + 1):
        b = resid_at(j, 0.0, 0.0)
        d_r = resid_at(j, 1.0, 0.0) - b    # residual response to r_j
        if abs(d_r[1]) < 1e-12:
            raise ArithmeticError(f"degenerate amplitude pivot at order {j}")
        r[j] = -b[1] / d_r[1]
        if j < K:
            d_p = resid_at(j, 0.0, 1.0) - b  # residual response to psi_{j+1}
            if abs(d_p[0]) < 1e-12 * max(1.0, p.lam):
                raise ArithmeticError(f"degenerate phase pivot at order {j}")
            psi[j] = -(b[0] + d_r[0] * r[j]) / d_p[0]

    return AsymptoticExpansion(branch=branch, psi0=psi0,
                               r_coeffs=r, psi_coeffs=psi, order=K)


def evaluate(e: AsymptoticExpansion, p: SystemParams, tau):
    """Truncated series value (r, psi) at tau > 0; accepts arrays."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("series evaluation requires tau > 0")
    x = 1.0 / tau
    r = p.lam * tau + sum(e.r_coeffs[k] * x ** k for k in range(e.order + 1))
    psi = e.psi0 + sum(e.psi_coeffs[k - 1] * x ** k for k in range(1, e.order + 1))
    return r, psi + np.zeros_like(tau)


def evaluate_derivative(e: AsymptoticExpansion, p: SystemParams, tau):
    """Exact tau-derivative of the truncated series."""
    tau = np.asarray(tau, dtype=float)
    x = 1.0 / tau
    dr = p.lam + sum(-k * e.r_coeffs[k] * x ** (k + 1)
                     for k in range(1, e.order + 1))
    dpsi = sum(-k * e.psi_coeffs[k - 1] * x ** (k + 1)
               for k in range(1, e.order + 1))
    return dr + np.zeros_like(tau), dpsi + np.zeros_like(tau)


def residual(e: AsymptoticExpansion, p: SystemParams, tau) -> Tuple:
    """Defect of the truncation in both equations at tau.

    Returns (series derivative minus field) componentwise; the norm decays
    like a power of tau whose exponent improves with the order.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("residual requires tau > 0")
    r, psi = evaluate(e, p, tau)
    dr, dpsi = evaluate_derivative(e, p, tau)
    res_r = dr - (r * np.sin(psi) - p.gamma * r)
    res_psi = dpsi - (r - p.lam * tau + np.cos(psi))
    return res_r, res_psi


def residual_slope(e: AsymptoticExpansion, p: SystemParams,
                   tau_lo: float = 10.0, tau_hi: float = 1000.0,
                   samples: int = 40) -> float:
    """Fitted log-log slope of the residual norm over [tau_lo, tau_hi]."""
    taus = np.geomspace(tau_lo, tau_hi, samples)
    rr, rp = residual(e, p, taus)
    norms = np.hypot(rr, rp)
    # guard: a residual that is exactly zero has no slope to fit
    norms = np.maximum(norms, 1e-300)
    return float(np.polyfit(np.log(taus), np.log(norms), 1)[0])
