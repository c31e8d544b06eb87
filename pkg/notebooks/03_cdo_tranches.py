"""
Tranche spreads on the CDO benchmark
====================================

100 obligors with lognormal pds of mean 7%, factor loading 0.1, a five-year
contract paid quarterly.
"""

# %%
from modphi.benchmarks import cdo_benchmark, cdo_schedule
from modphi.cdo import STANDARD_TRANCHES, price_tranches
from modphi.engines import Engine

port, sched = cdo_benchmark(), cdo_schedule()
engines = [Engine("recursive"), Engine("modpoisson", 4), Engine("modpoisson", 10),
           Engine("stein-poisson"), Engine("stein-gauss")]
prices = {str(e): price_tranches(port, STANDARD_TRANCHES, sched, e) for e in engines}

# %% [markdown]
# Fair spreads in basis points, and the gap to the recursion.

# %%
ref = [p.fair_spread_bp for p in prices["recursive"]]
print(f"{'engine':15s} " + " ".join(f"{t.label:>12s}" for t in STANDARD_TRANCHES))
for name, row in prices.items():
    print(f"{name:15s} " + " ".join(f"{p.fair_spread_bp:12.4f}" for p in row))
print()
for name, row in prices.items():
    if name != "recursive":
        print(f"{name:15s} " + " ".join(f"{p.fair_spread_bp - r:12.2e}" for p, r in zip(row, ref)))
