"""Binomial-lattice pricing for the one-dimensional stock-loan problems.

Regimes 1 to 3 are solved on a recombining CRR tree in similarity
coordinates, where the redemption obstacle x - K is time independent, the
per-step growth factor is exp((r - gamma - delta) * dt) and discounting
happens at r - gamma.  The delivered-dividend regime adds an explicit
source term delta * x * dt after discounting the expectation.  The
amortizing and withdrawable variants keep calendar cash coordinates because
their obstacles do not scale with exp(gamma * t).

Surfaces store every layer of the tree so redemption boundaries can be read
off afterwards; they are immutable once returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .contracts import DividendRegime, LoanContract, MarketParams, reduce_regime2


@dataclass(frozen=True)
class LatticeConfig:
    """Tree resolution and boundary-extraction cap.

    steps is the number of time steps.  x_max_mult caps, in units of the
    principal, how far out boundary extraction searches before declaring
    the boundary unbounded at a layer.
    """

    steps: int = 2000
    x_max_mult: float = 8.0

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError(f"need at least one step, got {self.steps}")
        if self.x_max_mult <= 1.0:
            raise ValueError(f"spatial cap multiplier must exceed 1, got {self.x_max_mult}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ValueSurface1D:
    """Value surface on a one-dimensional grid, one layer per time to maturity.

    tau_grid ascends from 0 (the terminal layer) to the maturity.  Layer j
    holds node coordinates x_nodes[j], values, the redemption obstacle and a
    flag marking nodes where the value equals the obstacle (ties count as
    redemption).  principal scales tolerances; spatial_cap bounds boundary
    extraction; label names the problem and solver_meta carries diagnostics.
    """

    tau_grid: np.ndarray
    x_nodes: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]
    obstacles: tuple[np.ndarray, ...]
    payoff_flags: tuple[np.ndarray, ...]
    principal: float
    spatial_cap: float
    label: str
    solver_meta: dict

    def layer_count(self) -> int:
        return len(self.tau_grid)

    def value_at(self, x: float, tau: float) -> float:
        """Bilinear lookup: linear in x within layers, linear across tau."""
        taus = self.tau_grid
        if not taus[0] <= tau <= taus[-1]:
            raise ValueError(f"tau={tau} outside surface range [{taus[0]}, {taus[-1]}]")
        j_hi = int(np.searchsorted(taus, tau))
        if j_hi == 0 or taus[j_hi] == tau:
            return float(np.interp(x, self.x_nodes[j_hi], self.values[j_hi]))
        j_lo = j_hi - 1
        v_lo = float(np.interp(x, self.x_nodes[j_lo], self.values[j_lo]))
        v_hi = float(np.interp(x, self.x_nodes[j_hi], self.values[j_hi]))
        w = (tau - taus[j_lo]) / (taus[j_hi] - taus[j_lo])
        return (1.0 - w) * v_lo + w * v_hi


@dataclass(frozen=True)
class BoundaryCurve:
    """Redemption boundary per tau layer, with monotonicity metadata.

    x_star holds the smallest node in the redemption region of each layer,
    or inf where no node within the spatial cap qualifies.  max_decrease
    records the largest observed drop between consecutive finite entries;
    construction never repairs violations, tests assert on them.
    """

    tau_grid: np.ndarray
    x_star: np.ndarray
    max_decrease: float

    def is_monotone(self, tolerance: float = 0.0) -> bool:
        return self.max_decrease <= tolerance


def _crr_step_params(
    sigma: float, drift: float, rate: float, dt: float
) -> tuple[float, float, float, float]:
    """CRR step: up/down factors, up probability and one-step discount.

    drift is the risk-neutral growth rate of the lattice state and rate the
    discount rate, both per unit time.  The martingale probability must lie
    strictly inside (0, 1) or the step size is too coarse for the drift.
    """
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    p = (math.exp(drift * dt) - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ValueError(
            f"risk-neutral step probability {p:.6g} falls outside (0, 1); "
            f"increase the step count so that |drift|*sqrt(dt) stays well below sigma "
            f"(drift={drift:.6g}, sigma={sigma:.6g}, dt={dt:.6g})"
        )
    return u, d, p, math.exp(-rate * dt)


def _solve_tree(
    spot: float,
    sigma: float,
    drift: float,
    rate: float,
    maturity: float,
    steps: int,
    terminal: Callable[[np.ndarray], np.ndarray],
    obstacle: Callable[[np.ndarray, float], np.ndarray],
    source: Callable[[np.ndarray], np.ndarray] | None,
    cap: float | None,
    principal: float,
    spatial_cap: float,
    label: str,
) -> tuple[float, ValueSurface1D]:
    if spot <= 0.0:
        raise ValueError(f"spot must be positive, got {spot}")
    dt = maturity / steps
    u, d, p, disc = _crr_step_params(sigma, drift, rate, dt)
    log_u = math.log(u)
    q = 1.0 - p

    tau_grid = _frozen(np.arange(steps + 1, dtype=float) * dt)
    xs: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    obss: list[np.ndarray] = []
    flags: list[np.ndarray] = []

    def layer_nodes(level: int) -> np.ndarray:
        return spot * np.exp(log_u * (2.0 * np.arange(level + 1) - level))

    x = layer_nodes(steps)
    v = np.asarray(terminal(x), dtype=float)
    obs = np.asarray(obstacle(x, 0.0), dtype=float)
    if cap is not None:
        v = np.minimum(v, cap)
    xs.append(_frozen(x))
    vals.append(_frozen(v))
    obss.append(_frozen(obs))
    flags.append(_frozen(v == obs))

    for j in range(1, steps + 1):
        level = steps - j
        x = layer_nodes(level)
        prev = vals[j - 1]
        cont = disc * (p * prev[1:] + q * prev[:-1])
        if source is not None:
            cont = cont + source(x) * dt
        obs = np.asarray(obstacle(x, j * dt), dtype=float)
        v = np.maximum(cont, obs)
        if cap is not None:
            v = np.minimum(v, cap)
        xs.append(_frozen(x))
        vals.append(_frozen(v))
        obss.append(_frozen(obs))
        flags.append(_frozen(v == obs))

    root = vals[-1]
    if any(np.isnan(layer).any() for layer in vals):
        raise RuntimeError(f"lattice produced NaN values for problem {label!r}")
    surface = ValueSurface1D(
        tau_grid=tau_grid,
        x_nodes=tuple(xs),
        values=tuple(vals),
        obstacles=tuple(obss),
        payoff_flags=tuple(flags),
        principal=principal,
        spatial_cap=spatial_cap,
        label=label,
        solver_meta={
            "solver": "lattice",
            "steps": steps,
            "dt": dt,
            "up_factor": u,
            "up_probability": p,
        },
    )
    return float(root[0]), surface


def price_regime1(
    spot: float, market: MarketParams, contract: LoanContract, config: LatticeConfig
) -> tuple[float, ValueSurface1D]:
    """Price a lender-keeps-dividends loan; returns (value, surface).

    The surface lives in similarity coordinates; at t = 0 those coincide
    with cash coordinates, so the returned value is the loan value at spot.
    """
    if contract.regime is not DividendRegime.LENDER_KEEPS:
        raise ValueError(f"price_regime1 requires regime 1, got {contract.regime!r}")
    return _solve_similarity_tree(spot, market, contract, config, label="regime1")


def price_regime2(
    spot: float, market: MarketParams, contract: LoanContract, config: LatticeConfig
) -> tuple[float, ValueSurface1D]:
    """Price a reinvested-dividend loan via its dividend-free reduction.

    The surface is indexed by the scaled reinvested position; at t = 0 the
    position equals the stock, so the value is again read off at spot.
    """
    if contract.regime is not DividendRegime.REINVESTED_RETURNED_ON_REDEMPTION:
        raise ValueError(f"price_regime2 requires regime 2, got {contract.regime!r}")
    red_market, red_contract = reduce_regime2(market, contract)
    return _solve_similarity_tree(spot, red_market, red_contract, config, label="regime2")


def price_regime3(
    spot: float, market: MarketParams, contract: LoanContract, config: LatticeConfig
) -> tuple[float, ValueSurface1D]:
    """Price a delivered-dividend loan net of already-delivered dividends.

    The value solves the obstacle problem with dividend inflow delta * x as
    an explicit source added after discounting each expectation.  The full
    loan price is this value plus the dividends already delivered, which the
    caller adds at the API boundary.
    """
    if contract.regime is not DividendRegime.DELIVERED_IMMEDIATELY:
        raise ValueError(f"price_regime3 requires regime 3, got {contract.regime!r}")
    delta = market.delta
    return _solve_similarity_tree(
        spot,
        market,
        contract,
        config,
        label="regime3",
        source=(lambda x: delta * x) if delta > 0.0 else None,
    )


def _solve_similarity_tree(
    spot: float,
    market: MarketParams,
    contract: LoanContract,
    config: LatticeConfig,
    label: str,
    source: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[float, ValueSurface1D]:
    principal = contract.principal
    r_bar = market.r - contract.loan_rate
    value, surface = _solve_tree(
        spot=spot,
        sigma=market.sigma,
        drift=r_bar - market.delta,
        rate=r_bar,
        maturity=contract.maturity,
        steps=config.steps,
        terminal=lambda x: np.maximum(x - principal, 0.0),
        obstacle=lambda x, tau: x - principal,
        source=source,
        cap=None,
        principal=principal,
        spatial_cap=config.x_max_mult * principal,
        label=label,
    )
    return value, surface


def amortized_payment_rate(contract: LoanContract) -> float:
    """Continuous payment rate that fully amortizes the principal by maturity.

    Solves K = integral_0^T c * exp(-gamma * t) dt for c, giving
    c = gamma * K / (1 - exp(-gamma * T)) with the gamma -> 0 limit K / T.
    """
    gamma, principal, maturity = contract.loan_rate, contract.principal, contract.maturity
    if gamma == 0.0:
        return principal / maturity
    return gamma * principal / -math.expm1(-gamma * maturity)


def price_amortized(
    spot: float, market: MarketParams, contract: LoanContract, config: LatticeConfig
) -> tuple[float, ValueSurface1D]:
    """Price the amortizing variant, where the loan is repaid continuously.

    The borrower pays at the constant rate c = amortized_payment_rate and
    may stop at any time by handing the remaining balance back, keeping the
    stock.  Payments act as a sink -c; the obstacle is the stock minus the
    outstanding balance and at maturity the stock is owned outright.  Cash
    coordinates throughout; values may go negative near S = 0, where the
    remaining payment stream dominates.
    """
    rate_c = amortized_payment_rate(contract)
    gamma, principal = contract.loan_rate, contract.principal

    def outstanding(tau: float) -> float:
        # Present balance of the remaining payments: (c/gamma)(1 - exp(-gamma*tau)).
        if gamma == 0.0:
            return rate_c * tau
        return rate_c / gamma * -math.expm1(-gamma * tau)

    return _solve_tree(
        spot=spot,
        sigma=market.sigma,
        drift=market.r - market.delta,
        rate=market.r,
        maturity=contract.maturity,
        steps=config.steps,
        terminal=lambda z: z.copy(),
        obstacle=lambda z, tau: z - outstanding(tau),
        source=lambda z: np.full_like(z, -rate_c),
        cap=None,
        principal=principal,
        spatial_cap=config.x_max_mult * principal,
        label="amortized",
    )


def price_withdrawable(
    spot: float,
    market: MarketParams,
    contract: LoanContract,
    config: LatticeConfig,
    cap: float,
) -> tuple[float, ValueSurface1D]:
    """Price the variant where the lender may cash the borrower out at cap.

    The borrower redeems as usual against the accreted balance, but the
    position value is clamped at the withdrawal cap L from above: whenever
    intrinsic value exceeds L the lender settles at L, so the upper clamp
    wins over the redemption obstacle.  Cash coordinates.
    """
    principal, gamma, maturity = contract.principal, contract.loan_rate, contract.maturity
    if not 0.0 < cap < principal:
        raise ValueError(f"withdrawal cap must lie in (0, principal), got L={cap}")

    def obstacle(z: np.ndarray, tau: float) -> np.ndarray:
        return z - principal * math.exp(gamma * (maturity - tau))

    terminal_balance = principal * math.exp(gamma * maturity)
    return _solve_tree(
        spot=spot,
        sigma=market.sigma,
        drift=market.r - market.delta,
        rate=market.r,
        maturity=maturity,
        steps=config.steps,
        terminal=lambda z: np.minimum(np.maximum(z - terminal_balance, 0.0), cap),
        obstacle=obstacle,
        source=None,
        cap=cap,
        principal=principal,
        spatial_cap=config.x_max_mult * principal,
        label="withdrawable",
    )


def extract_boundary(surface: ValueSurface1D, tol: float = 1e-7) -> BoundaryCurve:
    """Read the redemption boundary off a value surface.

    Per tau layer, the boundary is the smallest node whose value sits within
    tol * principal of the obstacle (ties count as redemption).  Layers with
    no qualifying node below the spatial cap report inf.  The curve is never
    monotonized; the largest decrease between consecutive layers is recorded
    so callers can assert on it.
    """
    if tol < 0.0:
        raise ValueError(f"tolerance must be nonnegative, got {tol}")
    slack_tol = tol * surface.principal
    stars = np.empty(surface.layer_count())
    for j in range(surface.layer_count()):
        x = surface.x_nodes[j]
        slack = surface.values[j] - surface.obstacles[j]
        hit = np.flatnonzero((slack <= slack_tol) & (x <= surface.spatial_cap))
        stars[j] = x[hit[0]] if hit.size else math.inf
    max_decrease = 0.0
    for j in range(len(stars) - 1):
        left, right = stars[j], stars[j + 1]
        if math.isinf(left) and math.isinf(right):
            continue
        drop = left - right
        if drop > max_decrease:
            max_decrease = drop
    return BoundaryCurve(tau_grid=surface.tau_grid, x_star=_frozen(stars), max_decrease=max_decrease)
