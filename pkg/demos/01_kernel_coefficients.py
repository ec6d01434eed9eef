"""
Kernel coefficients and the null series
=======================================

How the pairwise kernel ``cot(t/2) + a tan(t/2)`` splits into Gegenbauer
terms, and what the weights imply for the null distribution.
"""

# %%
import numpy as np

from stereounif import KernelSpec, RandomStream, build_table, series_variance
from stereounif.coefficients import gegenbauer_coef_oracle, tail_variance
from stereounif.distributions import sample_null_asymptotic

# %%
# The closed-form coefficients agree with direct quadrature. For ``a = 1``
# the odd terms drop out, for ``a = -1`` the even ones do.
for a in (-1.0, 0.0, 1.0):
    spec = KernelSpec(a, 3)
    table = build_table(spec, 8)
    oracle = [gegenbauer_coef_oracle(k, spec) for k in range(9)]
    print(f"a = {a:+.0f}  b_k = {np.round(table.b, 4)}")
    print(f"         max |closed - quad| = {np.max(np.abs(table.b - oracle)):.1e}")

# %%
# The null limit is a weighted sum of centred chi-squares. On the 3-sphere
# the variance is finite and the tail beyond K shrinks roughly like 1/K.
table = build_table(KernelSpec(0.0, 3), 1000)
total = series_variance(table)
for K in (10, 100, 1000):
    print(f"K = {K:5d}  tail share {tail_variance(table, K) / total:.2e}")

# %%
# On the circle-like case q = 2 the weights decay too slowly: the series
# variance diverges, so only a truncated statistic has a usable limit.
print("q = 2 tail variance:", tail_variance(build_table(KernelSpec(0.0, 2), 100), 10))
truncated = build_table(KernelSpec(0.0, 2, K=6), 6)
print("q = 2, K = 6 variance:", round(series_variance(truncated), 4))

# %%
# Draws from the limit: mean zero and the predicted variance.
null = sample_null_asymptotic(table, 50_000, RandomStream(1))
print(f"mean {null.draws.mean():+.4f}  var {null.draws.var():.4f} (series {total:.4f})")
print("upper 5% point:", round(null.critical_value(0.05), 4))
