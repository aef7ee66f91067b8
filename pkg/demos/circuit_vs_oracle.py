"""Sampled two-stage circuit against the exact kernel from diagonalization."""
import numpy as np

from ldos.circuit import CircuitConfig, MaximallyMixed, PhaseEstimationCircuit
from ldos.models import build_gue_perturbation, build_haar_random, make_map_pair
from ldos.oracle import conditional, kernel_circuit_faithful
from ldos.stats import JointCounts, estimate_kernel, total_variation

N, M = 32, 8
pair = make_map_pair(build_haar_random(N, seed=1), build_gue_perturbation(N, seed=2), delta=0.2)
print(f"N={N}  M={M}  sigma={pair.sigma:.4f}  b={pair.bandwidth}  rho_E={pair.level_density:.3f}")

cfg = CircuitConfig(m_bins=M, shots=40000, seed=11)
m, l = PhaseEstimationCircuit(pair, cfg).sample()
counts = JointCounts.from_arrays(m, l, M)

exact = kernel_circuit_faithful(pair, M, MaximallyMixed())
print("TV(sampled joint, exact joint) =", round(total_variation(counts.counts / cfg.shots, exact), 4))

est = estimate_kernel(counts)
cond = conditional(exact)
np.set_printoptions(precision=3, suppress=True)
print("\nrow m=0, sampled :", est.p[0])
print("row m=0, exact   :", cond[0])
print("row m=0, 1 stderr:", est.stderr[0])
