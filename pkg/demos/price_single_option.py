"""Price one American put with the Monte Carlo solver.

Simulates the stochastic volatility model, solves the boundary BSDE and
the reflected claim equation with the quadratic-basis regression backend,
and prints the buyer's and seller's indifference prices with jackknife
error bars.  Takes a few seconds.

Run:  python3 demos/price_single_option.py [strike]
"""

import sys

from riskdiff import (Payoff, PolyScheme, TimeGrid, arctangent_model,
                      entropic_driver, price)
from riskdiff.solver import joint_std_error

strike = float(sys.argv[1]) if len(sys.argv) > 1 else 100.0

model = arctangent_model(r=0.02, mu=0.08, a=0.7, b=0.03, alpha=5.0,
                         m_level=0.0, nu=1.0, rho=-0.2, s0=100.0, v0=0.15)
driver = entropic_driver(1.0, 0.2)
grid = TimeGrid(T=0.25, N=10)
payoff = Payoff(kind="american_put", strike=strike, rate=model.r)

results = {}
for side in ("buyer", "seller"):
    res = price(side, model, grid, payoff, driver, n_paths=8192, seed=0,
                scheme_factory=lambda: PolyScheme(degree=2))
    results[side] = res
    print(f"{side:>6}: price = {res.price:8.4f} +- {res.mc_std_error:.4f}  "
          f"(risk with claim {res.risk_with_claim:8.4f}, "
          f"without {res.risk_without:8.4f})")

spread = results["seller"].price - results["buyer"].price
se = joint_std_error(results["seller"], results["buyer"])
print(f"spread: {spread:8.4f} +- {se:.4f}  (must be nonnegative)")
