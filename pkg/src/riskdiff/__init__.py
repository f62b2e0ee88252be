"""Risk-indifference pricing of American options under stochastic volatility.

Buyer's and seller's indifference prices are characterized by a BSDE whose
reflected companion uses the BSDE itself (plus the exercise value) as its
barrier.  This package simulates the stochastic volatility model, solves
the backward system with interchangeable regression backends and verifies
everything against an exact small-tree oracle.
"""

from .model import (MarketModel, PathBundle, Payoff, TimeGrid,
                    arctangent_model, payoff_path, read_bundle, sharpe,
                    simulate, write_bundle)
from .risk import (Driver, EffectiveDriver, effective_driver, entropic_driver,
                   numerical_conjugate, validate_driver)
from .approx import NetConfig, fit_net, fit_poly
from .solver import (BackwardSolution, NetScheme, PolyScheme, PricingResult,
                     TableScheme, price, smile, solve_boundary_bsde,
                     solve_reflected)
from .oracle import (Tree, build_tree, oracle_bsde, oracle_price,
                     oracle_reflected, tree_path_bundle)
from .quote import Quote, bs_price, implied_vol, log_moneyness

__all__ = [
    "MarketModel", "PathBundle", "Payoff", "TimeGrid", "arctangent_model",
    "payoff_path", "read_bundle", "sharpe", "simulate", "write_bundle",
    "Driver", "EffectiveDriver", "effective_driver", "entropic_driver",
    "numerical_conjugate", "validate_driver",
    "NetConfig", "fit_net", "fit_poly",
    "BackwardSolution", "NetScheme", "PolyScheme", "PricingResult",
    "TableScheme", "price", "smile", "solve_boundary_bsde", "solve_reflected",
    "Tree", "build_tree", "oracle_bsde", "oracle_price", "oracle_reflected",
    "tree_path_bundle",
    "Quote", "bs_price", "implied_vol", "log_moneyness",
]

__version__ = "0.1.0"
