"""Pricing engine for finite-maturity stock loans.

A stock loan advances a principal K against a share pledged as collateral;
the borrower may redeem the share at any time before maturity by repaying
the principal accrued at the loan rate.  What the lender does with the
dividends paid in the meantime changes the contract: this package prices
the four standard dividend arrangements, plus amortizing and capped
withdrawable variants, and locates the optimal redeeming boundaries.

Solvers: a binomial lattice and a Crank-Nicolson variational-inequality
solver for the one-dimensional regimes, a forward-shooting grid for the
two-dimensional cash-dividend regime, infinite-maturity closed forms, and
an exhaustive-stopping path tree for cross-checking everything else.
"""

from .closedform import (
    UNBOUNDED,
    PerpetualRegime3Result,
    PerpetualResult,
    TerminalLimit,
    european_call,
    european_put,
    parity_price_regime3,
    perpetual_regime1,
    perpetual_regime2,
    perpetual_regime3,
    terminal_limit,
)
from .contracts import (
    ClosedForm,
    DividendRegime,
    LoanContract,
    MarketParams,
    RegimeClassification,
    RegionKind,
    SimilarityState,
    accrue_dividends,
    classify,
    from_similarity,
    payoff,
    reduce_regime2,
    to_similarity,
)
from .fd1d import (
    ComplementarityReport,
    FDConfig,
    PSORNonConvergence,
    VIProblem,
    residual_report,
    solve_vi,
)
from .fsg2d import (
    BoundarySurface,
    FSG2DConfig,
    ValueSurface2D,
    extract_boundary_surface,
    price_regime4,
    price_regime4_linear,
)
from .lattice1d import (
    BoundaryCurve,
    LatticeConfig,
    ValueSurface1D,
    amortized_payment_rate,
    extract_boundary,
    price_amortized,
    price_regime1,
    price_regime2,
    price_regime3,
    price_withdrawable,
)
from .oracle import MAX_ORACLE_STEPS, oracle_boundary, oracle_price

__all__ = [
    "MAX_ORACLE_STEPS",
    "UNBOUNDED",
    "BoundaryCurve",
    "BoundarySurface",
    "ClosedForm",
    "ComplementarityReport",
    "DividendRegime",
    "FDConfig",
    "FSG2DConfig",
    "LatticeConfig",
    "LoanContract",
    "MarketParams",
    "PSORNonConvergence",
    "PerpetualRegime3Result",
    "PerpetualResult",
    "RegimeClassification",
    "RegionKind",
    "SimilarityState",
    "TerminalLimit",
    "VIProblem",
    "ValueSurface1D",
    "ValueSurface2D",
    "accrue_dividends",
    "amortized_payment_rate",
    "classify",
    "european_call",
    "european_put",
    "extract_boundary",
    "extract_boundary_surface",
    "from_similarity",
    "oracle_boundary",
    "oracle_price",
    "parity_price_regime3",
    "payoff",
    "perpetual_regime1",
    "perpetual_regime2",
    "perpetual_regime3",
    "price_amortized",
    "price_regime1",
    "price_regime2",
    "price_regime3",
    "price_regime4",
    "price_regime4_linear",
    "price_withdrawable",
    "residual_report",
    "solve_vi",
    "terminal_limit",
]

__version__ = "1.0.0"
