"""
Testing a sample
================

Exact-n Monte Carlo calibration against the large-sample limit, then a few
tests on uniform and concentrated data.
"""

# %%
from scipy import stats

from stereounif import RandomStream, RotSymSpec, StatSpec, run_test
from stereounif.distributions import asymptotic_null, sample_null_exact
from stereounif.samplers import north_pole, sample_rotsym, sample_uniform_sphere

# %%
# Null draws at n = 200 on the 3-sphere are already close to the limit.
stat = StatSpec.tn(0.0)
exact = sample_null_exact(stat, 200, 4000, RandomStream(2), q=3)
limit = asymptotic_null(stat, 3, 20_000, RandomStream(3))
print("KS distance:", round(stats.ks_2samp(exact.draws, limit.draws).statistic, 4))
print("95% points:", round(exact.critical_value(0.05), 3), round(limit.critical_value(0.05), 3))

# %%
# A uniform sample is not rejected; a von Mises-Fisher sample with moderate
# concentration is.
uniform = sample_uniform_sphere(2, 100, RandomStream(4))
print(run_test(uniform, stat, m=4000, seed=0).summary())

# %%
vmf = sample_rotsym(RotSymSpec(north_pole(2), 2.0), 2, 100, RandomStream(5))
for s in (StatSpec.tn(-1.0), StatSpec.tn(0.0), StatSpec.tn(1.0), StatSpec("rayleigh")):
    rep = run_test(vmf, s, m=4000, seed=0)
    print(f"{s.display:10s} statistic {rep.statistic:9.3f}  p-value {rep.p_value:.4f}")

# %%
# Larger ``a`` moves weight toward even harmonics, which are blind to a
# shift of the mean direction but sensitive to axial concentration.
axial = sample_rotsym(RotSymSpec(north_pole(2), 2.0, "mixvmf"), 2, 100, RandomStream(6))
for s in (StatSpec.tn(-1.0), StatSpec.tn(1.0), StatSpec("bingham")):
    rep = run_test(axial, s, m=4000, seed=0)
    print(f"{s.display:10s} p-value {rep.p_value:.4f}")
