"""
Mod-Poisson schemes on one conditional slice
============================================

How the signed measure of order r approaches the exact Poisson-binomial law
on the risk benchmark, and where the Stein corrections sit.
"""

# %%
import numpy as np

from modphi.benchmarks import risk_benchmark
from modphi.estimators import recursive_pmf, stein_gaussian_call, stein_poisson_call
from modphi.model import conditional_pd
from modphi import modpoisson as mp

port = risk_benchmark()

# %% [markdown]
# Total variation distance to the recursion, for three factor values. The
# slice mean grows as the factor falls, and higher orders are needed.

# %%
print(f"{'psi':>5} {'mean':>8} " + " ".join(f"{'r=' + str(r):>10}" for r in (0, 2, 4, 6, 10)))
for psi in (1.0, 0.0, -2.0):
    s = conditional_pd(port, psi)
    exact = recursive_pmf(s).pmf
    tvs = []
    for r in (0, 2, 4, 6, 10):
        c = mp.coefficients(s.pd, r)
        size = max(len(exact), mp.truncation_point(c) + r + 1)
        ref = np.zeros(size)
        ref[: len(exact)] = exact
        tvs.append(0.5 * np.abs(mp.signed_measure_pmf(c, np.arange(size)) - ref).sum())
    print(f"{psi:5.1f} {s.mean:8.3f} " + " ".join(f"{v:10.2e}" for v in tvs))

# %% [markdown]
# The order-2 call coincides with the Chen-Stein Poisson call. The Gaussian
# call carries a lattice error that only fades on wide slices.

# %%
for psi in (0.0, -3.0):
    s = conditional_pd(port, psi)
    d = recursive_pmf(s)
    K = int(round(s.mean)) + 2
    exact = d.call(K)
    print(
        f"psi={psi:4.1f} K={K:3d} exact={exact:.6f} "
        f"order2={mp.call_estimate(mp.coefficients(s.pd, 2), K):.6f} "
        f"stein-poisson={stein_poisson_call(s, K):.6f} "
        f"stein-gauss={stein_gaussian_call(s, K):.6f}"
    )

# %% [markdown]
# Above its order the scheme does not reproduce the factorial cumulants: the
# log of a truncated series is not the truncated log.

# %%
p = np.array([0.1, 0.2, 0.15])
c = mp.coefficients(p, 2)
nu = mp.signed_measure_pmf(c, np.arange(mp.truncation_point(c) + 3))
print("factorial cumulants of nu(2):", mp.factorial_cumulants(nu, 4))
print("-12 b2^2 =", -12 * c.b[1] ** 2)
