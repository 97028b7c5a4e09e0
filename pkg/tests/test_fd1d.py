"""Finite-difference backend: scheme pieces, solves, audits, variants."""

import math

import numpy as np
import pytest

from stockloan import (
    DividendRegime,
    FDConfig,
    LatticeConfig,
    LoanContract,
    MarketParams,
    PSORNonConvergence,
    RegionKind,
    VIProblem,
    classify,
    european_call,
    parity_price_regime3,
    price_amortized,
    price_regime1,
    price_withdrawable,
    residual_report,
    solve_vi,
)
from stockloan.fd1d import log_stencil

K = 0.7
GAMMA = 0.1
HIGH_VOL = MarketParams(r=0.06, delta=0.03, sigma=0.4)


def contract(regime, maturity=1.0):
    return LoanContract(principal=K, loan_rate=GAMMA, maturity=maturity,
                        regime=DividendRegime(regime))


def problem(regime, market=HIGH_VOL, maturity=1.0):
    return VIProblem.from_regime(market, contract(regime, maturity))


def test_config_validation():
    with pytest.raises(ValueError):
        FDConfig(space_nodes=8)
    with pytest.raises(ValueError):
        FDConfig(time_steps=1)
    with pytest.raises(ValueError):
        FDConfig(psor_omega=2.0)
    with pytest.raises(ValueError):
        FDConfig(log_x_min=0.0, log_x_max=0.0)


def test_problem_validation():
    with pytest.raises(ValueError):
        VIProblem.from_regime(HIGH_VOL, contract(4))
    with pytest.raises(ValueError):
        VIProblem("regime1", HIGH_VOL, contract(2))
    with pytest.raises(ValueError):
        VIProblem("withdrawable", HIGH_VOL, contract(1))
    with pytest.raises(ValueError):
        VIProblem("regime1", HIGH_VOL, contract(1), cap=0.5)


def test_log_stencil_rows_sum_to_minus_rate():
    rng = np.random.default_rng(99)
    for _ in range(50):
        sigma = float(rng.uniform(0.05, 0.6))
        drift = float(rng.uniform(-0.3, 0.3))
        rate = float(rng.uniform(-0.1, 0.2))
        dy = float(rng.uniform(0.005, 0.1))
        lo, mid, up = log_stencil(sigma, drift, rate, dy)
        assert lo + mid + up == pytest.approx(-rate, abs=1e-12)
        # off-diagonal signs keep the discrete comparison principle
        assert lo >= 0.0
        assert up >= 0.0


def test_log_stencil_upwind_fallback():
    # drift strong enough to break the central form switches to one-sided
    sigma, dy = 0.1, 0.05
    drift = 0.5
    assert abs(drift) * dy > sigma * sigma
    lo, mid, up = log_stencil(sigma, drift, 0.05, dy)
    assert lo >= 0.0 and up >= 0.0
    central_lo = 0.5 * sigma ** 2 / dy ** 2 - 0.5 * (drift - 0.5 * sigma ** 2) / dy
    assert central_lo < 0.0


def test_golden_value_matches_lattice():
    surface, _ = solve_vi(problem(1), FDConfig(space_nodes=400, time_steps=400))
    fd_value = surface.value_at(0.8, 1.0)
    assert fd_value == pytest.approx(0.15262954922165786, rel=1e-10)
    lattice_value, _ = price_regime1(0.8, HIGH_VOL, contract(1), LatticeConfig(steps=2000))
    assert abs(fd_value - lattice_value) < 1e-3 * K


def test_solver_metadata():
    surface, _ = solve_vi(problem(1), FDConfig(space_nodes=200, time_steps=100))
    meta = surface.solver_meta
    assert meta["solver"] == "fd"
    assert meta["constrained"] is True
    assert meta["psor_total_sweeps"] > 0
    assert len(meta["rannacher_intermediate"]) == 200


def test_unconstrained_path_skips_psor():
    market = MarketParams(r=0.12, delta=0.0, sigma=0.3)
    assert classify(market, contract(1)).redemption_region_kind is RegionKind.EMPTY
    surface, boundary = solve_vi(VIProblem.from_regime(market, contract(1)),
                                 FDConfig(space_nodes=200, time_steps=100))
    assert surface.solver_meta["constrained"] is False
    assert surface.solver_meta["psor_total_sweeps"] == 0
    assert not np.isfinite(boundary.x_star[1:]).any()


def test_unconstrained_matches_european_call():
    market = MarketParams(r=0.12, delta=0.0, sigma=0.3)
    surface, _ = solve_vi(VIProblem.from_regime(market, contract(1)),
                          FDConfig(space_nodes=400, time_steps=400))
    similarity = MarketParams(r=market.r - GAMMA, delta=0.0, sigma=market.sigma)
    for spot in np.linspace(0.35, 1.6, 10):
        reference = european_call(float(spot), 1.0, similarity, K)
        assert abs(surface.value_at(float(spot), 1.0) - reference) < 1e-3 * K


def test_delivered_stream_matches_parity():
    market = MarketParams(r=0.12, delta=0.03, sigma=0.3)
    surface, _ = solve_vi(VIProblem.from_regime(market, contract(3)),
                          FDConfig(space_nodes=400, time_steps=400))
    for spot in np.linspace(0.35, 1.6, 10):
        reference = parity_price_regime3(float(spot), 1.0, market, contract(3))
        assert abs(surface.value_at(float(spot), 1.0) - reference) < 1e-3 * K


def test_psor_nonconvergence_raises():
    with pytest.raises(PSORNonConvergence) as info:
        solve_vi(problem(1), FDConfig(space_nodes=200, time_steps=50,
                                      psor_tol=1e-14, psor_max_iter=1))
    assert info.value.sweeps == 1
    assert info.value.worst_update > 0.0


def test_complementarity_audit_clean():
    prob = problem(1)
    surface, _ = solve_vi(prob, FDConfig(space_nodes=200, time_steps=200))
    report = residual_report(surface, prob)
    assert report.max_violation < 1e-6 * K
    assert report.violation_fraction == 0.0
    # obstacle dips are bounded by the PSOR stopping tolerance
    assert report.min_obstacle_residual >= -1e-9
    # the stored tolerance is absolute, scaled by the principal
    assert report.tol == pytest.approx(1e-6 * K)


def test_boundary_monotone_and_anchored():
    surface, boundary = solve_vi(problem(1, maturity=5.0),
                                 FDConfig(space_nodes=400, time_steps=400))
    assert boundary.is_monotone(tolerance=0.0)
    x = np.asarray(surface.x_nodes[0])
    gap = float(np.diff(x)[np.searchsorted(x, K)])
    assert abs(boundary.x_star[0] - K) <= gap
    assert np.isfinite(boundary.x_star).all()


def test_boundary_approaches_perpetual_level():
    from stockloan import perpetual_regime1

    loan = contract(1, maturity=25.0)
    level = perpetual_regime1(HIGH_VOL, loan).x_star_inf
    _, boundary = solve_vi(VIProblem.from_regime(HIGH_VOL, loan),
                           FDConfig(space_nodes=600, time_steps=600))
    finite = boundary.x_star[np.isfinite(boundary.x_star)]
    assert np.max(finite) <= level * 1.001
    assert boundary.x_star[-1] >= 0.94 * level


def test_amortized_matches_lattice():
    loan = contract(1, maturity=5.0)
    surface, _ = solve_vi(VIProblem("amortized", HIGH_VOL, loan),
                          FDConfig(space_nodes=400, time_steps=400))
    for spot in (0.6, 0.8, 1.1):
        lattice_value, _ = price_amortized(spot, HIGH_VOL, loan, LatticeConfig(steps=2000))
        assert abs(surface.value_at(spot, 5.0) - lattice_value) < 1e-3 * K


def test_withdrawable_matches_lattice_and_respects_cap():
    loan = contract(1, maturity=5.0)
    cap = 0.5
    surface, _ = solve_vi(VIProblem("withdrawable", HIGH_VOL, loan, cap=cap),
                          FDConfig(space_nodes=400, time_steps=400))
    lattice_value, _ = price_withdrawable(0.8, HIGH_VOL, loan, LatticeConfig(steps=2000), cap)
    assert abs(surface.value_at(0.8, 5.0) - lattice_value) < 1e-3 * K
    for layer in (0, 150, 400):
        assert np.all(surface.values[layer] <= cap + 1e-12)


def test_far_field_carries_delivered_stream():
    # the delivered-dividend source cancels the yield drag, so the top of
    # the domain must sit on x - K*exp(-(r-gamma)*tau), not on the leaky
    # forward; a reinvested-dividend solve would otherwise dominate it there
    cfg = FDConfig(space_nodes=200, time_steps=200)
    surface2, _ = solve_vi(problem(2), cfg)
    surface3, _ = solve_vi(problem(3), cfg)
    assert np.asarray(surface2.x_nodes[0]).shape == np.asarray(surface3.x_nodes[0]).shape
    for layer in (50, 100, 200):
        gap = np.max(np.asarray(surface2.values[layer]) - np.asarray(surface3.values[layer]))
        assert gap <= 2e-4


def test_value_surface_layers_share_grid():
    surface, _ = solve_vi(problem(1), FDConfig(space_nodes=64, time_steps=32))
    first = np.asarray(surface.x_nodes[0])
    assert all(np.array_equal(first, np.asarray(nodes)) for nodes in surface.x_nodes)
    assert len(surface.tau_grid) == 33
