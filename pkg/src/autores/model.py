"""Domain types and closed-form vector fields for the autoresonance system.

The unperturbed system in slow time tau is

    dr/dtau   = r sin(psi) - gamma r
    dpsi/dtau = r - lambda tau + cos(psi)

with pump sweep rate lambda > 0 and damping 0 < gamma < 1.  The noise-
perturbed variant shares the same drift; the diffusion matrix couples a
multiplicative channel through sigma1 and an additive phase channel
through sigma2.  Everything here is a pure function of its arguments and
accepts numpy arrays componentwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class SystemParams:
    """Sweep rate and damping, with the derived constant nu = sqrt(1 - gamma^2)."""

    lam: float
    gamma: float
    nu: float = field(init=False)

    def __post_init__(self):
        if not (self.lam > 0):
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not (0 < self.gamma < 1):
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        object.__setattr__(self, "nu", math.sqrt(1.0 - self.gamma**2))


class State(NamedTuple):
    """Amplitude and phase shift; psi is unwrapped so phase slipping stays visible."""

    r: float
    psi: float


class ErrorState(NamedTuple):
    """Deviation from a reference captured solution."""

    R: float
    Psi: float


@dataclass(frozen=True)
class Schedule:
    """Noise intensity preset c * tau**p; constant when p == 0."""

    coeff: float
    power: float = 0.0

    def __call__(self, tau: ArrayLike) -> ArrayLike:
        if self.power == 0.0:
            return self.coeff * np.ones_like(np.asarray(tau, dtype=float))
        return self.coeff * np.asarray(tau, dtype=float) ** self.power


@dataclass(frozen=True)
class NoiseSchedule:
    """Noise amplitude mu with intensity schedules for the two channels.

    h is the declared class bound on sup over tau of |sigma1(tau)| tau
    + |sigma2(tau)|; whether the schedules actually satisfy it is checked
    separately, not assumed here.
    """

    mu: float
    sigma1: Schedule
    sigma2: Schedule
    h: float = 1.0

    def __post_init__(self):
        if not (0 < self.mu < 1):
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")


def constant_schedule(c: float) -> Schedule:
    return Schedule(coeff=float(c), power=0.0)


def power_schedule(c: float, p: float) -> Schedule:
    return Schedule(coeff=float(c), power=float(p))


def rhs_primary(s, tau: ArrayLike, p: SystemParams):
    """Right-hand side of the unperturbed system at state s = (r, psi)."""
    r, psi = s
    dr = r * np.sin(psi) - p.gamma * r
    dpsi = r - p.lam * np.asarray(tau, dtype=float) + np.cos(psi)
    return dr, dpsi


def drift_perturbed(s, tau: ArrayLike, p: SystemParams, n: NoiseSchedule):
    """Ito drift of the perturbed system; identical to the unperturbed field."""
    return rhs_primary(s, tau, p)


def diffusion_matrix(s, tau: float, n: NoiseSchedule) -> np.ndarray:
    """Diffusion matrix G; the amplitude mu is applied by the integrator.

    Rows correspond to (r, psi), columns to the two Wiener channels:
    row 1 = (sigma1 r sin psi, 0), row 2 = (sigma1 cos psi, sigma2).
    """
    r, psi = s
    s1 = float(np.asarray(n.sigma1(tau)))
    s2 = float(np.asarray(n.sigma2(tau)))
    return np.array(
        [
            [s1 * r * np.sin(psi), 0.0],
            [s1 * np.cos(psi), s2],
        ]
    )


def hamiltonian(e, tau: ArrayLike, p: SystemParams, ref) -> ArrayLike:
    """Energy-like function H for the deviation variables.

    H = R^2/2 + (R + r*)[cos(Psi + psi*) - cos psi*] + Psi r* sin psi*
    with (r*, psi*) the reference captured solution at tau.
    """
    R, Psi = e
    rs, ps = ref.state(tau)
    return (
        R**2 / 2.0
        + (R + rs) * (np.cos(Psi + ps) - np.cos(ps))
        + Psi * rs * np.sin(ps)
    )


def hamiltonian_partials(e, tau: ArrayLike, p: SystemParams, ref):
    """Closed-form (dH/dR, dH/dPsi); no finite differences."""
    R, Psi = e
    rs, ps = ref.state(tau)
    dH_dR = R + np.cos(Psi + ps) - np.cos(ps)
    dH_dPsi = -(R + rs) * np.sin(Psi + ps) + rs * np.sin(ps)
    return dH_dR, dH_dPsi


def hamiltonian_time_partial(e, tau: ArrayLike, p: SystemParams, ref) -> ArrayLike:
    """Closed-form dH/dtau at frozen (R, Psi).

    Uses the chain rule through (r*(tau), psi*(tau)), whose derivatives are
    the unperturbed field evaluated on the reference solution.
    """
    R, Psi = e
    rs, ps = ref.state(tau)
    drs, dps = rhs_primary((rs, ps), tau, p)
    return (
        drs * (np.cos(Psi + ps) - np.cos(ps))
        + (R + rs) * (-np.sin(Psi + ps) + np.sin(ps)) * dps
        + Psi * (drs * np.sin(ps) + rs * np.cos(ps) * dps)
    )


def hamiltonian_hessian(e, tau: ArrayLike, p: SystemParams, ref):
    """Closed-form second partials (H_RR, H_RPsi, H_PsiPsi)."""
    R, Psi = e
    rs, ps = ref.state(tau)
    H_RR = np.ones_like(np.asarray(R, dtype=float))
    H_RPsi = -np.sin(Psi + ps)
    H_PsiPsi = -(R + rs) * np.cos(Psi + ps)
    return H_RR, H_RPsi, H_PsiPsi


def rhs_error(e, tau: ArrayLike, p: SystemParams, ref):
    """Vector field of the deviation system: (-dH/dPsi - gamma R, dH/dR)."""
    R, Psi = e
    dH_dR, dH_dPsi = hamiltonian_partials(e, tau, p, ref)
    return -dH_dPsi - p.gamma * R, dH_dR


def diffusion_error(e, tau: float, ref, n: NoiseSchedule) -> np.ndarray:
    """Diffusion matrix of the deviation system at (R, Psi).

    Obtained from the original-variable matrix evaluated at the shifted
    state (r* + R, psi* + Psi); the reference solution itself satisfies
    the deterministic equations, so its noise terms cancel.
    """
    R, Psi = e
    rs, ps = ref.state(tau)
    s1 = float(np.asarray(n.sigma1(tau)))
    s2 = float(np.asarray(n.sigma2(tau)))
    return np.array(
        [
            [s1 * (rs + R) * np.sin(ps + Psi), 0.0],
            [s1 * np.cos(ps + Psi), s2],
        ]
    )
