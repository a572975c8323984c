import math

import numpy as np
import pytest

from autores import SystemParams
from autores.asymptotics import (STABLE, UNSTABLE, evaluate,
                                 evaluate_derivative, expand, residual,
                                 residual_slope, solve_psi0)

# regression values produced by the recurrence itself at gamma=0.1, lam=1
STABLE_PSI0 = 3.0414252324282334
STABLE_R = [0.99498743710662, -0.10050378152592128,
            0.5974429590676908, -1.0593529902694812]
STABLE_PSI = [-1.005037815259212, 0.9492405143808479, -1.2703230442835063]
UNSTABLE_PSI0 = 0.1001674211615598
UNSTABLE_R = [-0.9949874371066201, 0.10050378152592121,
              -0.3974429590676908, -0.9608490299325392]
UNSTABLE_PSI = [1.005037815259212, 1.0507594856191522, 1.068302842263304]


@pytest.fixture(scope="module")
def p():
    return SystemParams(lam=1.0, gamma=0.1)


def test_locked_phase_roots(p):
    for branch in (STABLE, UNSTABLE):
        psi0 = solve_psi0(p, branch)
        assert math.sin(psi0) == pytest.approx(p.gamma, abs=1e-14)
    assert math.cos(solve_psi0(p, STABLE)) < 0
    assert math.cos(solve_psi0(p, UNSTABLE)) > 0


def test_bad_branch_rejected(p):
    with pytest.raises(ValueError):
        solve_psi0(p, "sideways")
    with pytest.raises(ValueError):
        expand(p, "sideways", 2)


def test_frozen_coefficients_stable(p):
    e = expand(p, STABLE, 3)
    assert e.psi0 == pytest.approx(STABLE_PSI0, rel=1e-14)
    assert list(e.r_coeffs) == pytest.approx(STABLE_R, rel=1e-12)
    assert list(e.psi_coeffs) == pytest.approx(STABLE_PSI, rel=1e-12)


def test_frozen_coefficients_unstable(p):
    e = expand(p, UNSTABLE, 3)
    assert e.psi0 == pytest.approx(UNSTABLE_PSI0, rel=1e-14)
    assert list(e.r_coeffs) == pytest.approx(UNSTABLE_R, rel=1e-12)
    assert list(e.psi_coeffs) == pytest.approx(UNSTABLE_PSI, rel=1e-12)


def test_low_order_closed_forms(p):
    # r_0 = -cos(psi0); the first corrections obey psi_1 = 1/cos(psi0)
    # and r_1 = gamma * psi_1 (the amplitude equation at this order
    # forces the gamma-multiple, which equals tan(psi0))
    for branch in (STABLE, UNSTABLE):
        e = expand(p, branch, 1)
        c = math.cos(e.psi0)
        assert e.r_coeffs[0] == pytest.approx(-c, rel=1e-13)
        assert e.psi_coeffs[0] == pytest.approx(1.0 / c, rel=1e-13)
        assert e.r_coeffs[1] == pytest.approx(p.gamma / c, rel=1e-13)
        assert e.r_coeffs[1] == pytest.approx(math.tan(e.psi0), rel=1e-13)


def test_orders_are_consistent(p):
    # higher-order expansion must reproduce lower orders bitwise
    lo = expand(p, STABLE, 2)
    hi = expand(p, STABLE, 6)
    assert list(hi.r_coeffs[:3]) == list(lo.r_coeffs)
    assert list(hi.psi_coeffs[:2]) == list(lo.psi_coeffs)


def test_evaluate_is_the_polynomial(p):
    e = expand(p, STABLE, 3)
    tau = 17.0
    x = 1.0 / tau
    r_hand = p.lam * tau + sum(c * x ** k for k, c in enumerate(e.r_coeffs))
    psi_hand = e.psi0 + sum(c * x ** (k + 1)
                            for k, c in enumerate(e.psi_coeffs))
    r, psi = evaluate(e, p, tau)
    assert r == pytest.approx(r_hand, rel=1e-15)
    assert psi == pytest.approx(psi_hand, rel=1e-15)


def test_evaluate_derivative_matches_finite_difference(p):
    e = expand(p, STABLE, 3)
    tau, h = 40.0, 1e-5
    r_hi, psi_hi = evaluate(e, p, tau + h)
    r_lo, psi_lo = evaluate(e, p, tau - h)
    dr, dpsi = evaluate_derivative(e, p, tau)
    assert dr == pytest.approx((r_hi - r_lo) / (2 * h), rel=1e-8)
    assert dpsi == pytest.approx((psi_hi - psi_lo) / (2 * h), rel=1e-6)


def test_residual_shrinks_with_order(p):
    tau = np.array([50.0, 100.0])
    res1 = np.abs(residual(expand(p, STABLE, 1), p, tau)).max()
    res4 = np.abs(residual(expand(p, STABLE, 4), p, tau)).max()
    assert res4 < res1 * 1e-3


def test_residual_slope_first_order(p):
    e = expand(p, STABLE, 1)
    slope = residual_slope(e, p, tau_lo=10.0, tau_hi=1000.0)
    assert slope <= -1.0 + 0.3
