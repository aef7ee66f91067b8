"""Classical laboratory for the two-stage phase-estimation LDOS algorithm.

Submodules
----------
spectral  dense linear algebra, unitary eigendecomposition, phase bins
models    map/perturbation generators and derived parameters
circuit   statevector simulation of the two-stage circuit
oracle    exact LDOS kernels from full diagonalization
stats     counting, width fits, Chernoff coefficient, hypothesis tests
runner    experiment configs, pipeline and artifact files
"""

__version__ = "0.1.0"
