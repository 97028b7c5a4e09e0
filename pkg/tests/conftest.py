"""Shared fixtures: the two standard parameter sets used across the suite.

Both sets use principal 0.7 and loan rate 0.1 against a riskless rate of
0.06, so the carry r - gamma = -0.04 keeps the redemption region nonempty;
they differ only in volatility (0.4 vs 0.15).
"""

import pytest

from stockloan import DividendRegime, LoanContract, MarketParams

PRINCIPAL = 0.7
LOAN_RATE = 0.1

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def high_vol_market() -> MarketParams:
    return MarketParams(r=0.06, delta=0.03, sigma=0.4)


@pytest.fixture
def low_vol_market() -> MarketParams:
    return MarketParams(r=0.06, delta=0.03, sigma=0.15)


@pytest.fixture
def make_contract():
    def _make(regime: int, maturity: float = 1.0, principal: float = PRINCIPAL,
              loan_rate: float = LOAN_RATE) -> LoanContract:
        return LoanContract(
            principal=principal,
            loan_rate=loan_rate,
            maturity=maturity,
            regime=DividendRegime(regime),
        )

    return _make


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
