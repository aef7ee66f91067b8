"""How many shots separate a Lorentzian from a Gaussian of the same width."""
import numpy as np

from ldos.stats import (
    ProfileHypothesis,
    chernoff_lambda,
    decide,
    discretize_profile,
    required_samples,
)

M = 16
h1 = ProfileHypothesis("breit_wigner", 0.8)
h2 = ProfileHypothesis("gaussian", 0.8)
p1, p2 = discretize_profile(h1, M), discretize_profile(h2, M)

lam, alpha = chernoff_lambda(p1, p2)
print(f"lambda={lam:.5f} at alpha={alpha:.3f}")
for eps in [1e-1, 1e-2, 1e-3]:
    print(f"  eps={eps:g}: K >= {required_samples(lam, eps)}")

rng = np.random.default_rng(0)
K = int(required_samples(lam, 1e-3))
data = rng.multinomial(K, p1)
rep = decide(data, h1, h2)
print(f"\nK={K} draws from the Lorentzian -> {rep.decision} (LLR {rep.log_likelihood_ratio:.1f})")
