"""Lorentzian width of the pooled profile as the coupling grows."""
import numpy as np

from ldos.models import build_gue_perturbation, build_haar_random, make_map_pair
from ldos.oracle import aggregated_ldos
from ldos.stats import fit_width, predicted_gamma, regime_check

N, M = 128, 16
u = build_haar_random(N, seed=3)
v = build_gue_perturbation(N, seed=4)

print(" delta   sigma*rho   fitted   predicted   regime")
for delta in [0.02, 0.04, 0.08, 0.16]:
    pair = make_map_pair(u, v, delta)
    prof = aggregated_ldos(pair, M)
    fit = fit_width(prof)
    gamma = predicted_gamma(pair.sigma, pair.level_density)
    reg = regime_check(pair.sigma, pair.level_density, pair.bandwidth, c_lo=1.0)
    print(f"{delta:6.2f}  {pair.sigma * pair.level_density:9.2f}  {fit.width:7.3f}  {gamma:10.3f}   {reg}")

# below one bin width the fit is pinned by the grid, above 2 pi it flattens
print("\nbin width 2pi/M =", round(2 * np.pi / M, 3))
