import dataclasses
import itertools

import numpy as np
import pytest

from ldos.circuit import Eigenstate, MaximallyMixed, PureState
from ldos.errors import EmptyBandError
from ldos.models import (
    build_diagonal_grid,
    build_gue_perturbation,
    build_haar_random,
    effective_strength,
    grid_aligned_pair,
    make_map_pair,
)
from ldos.oracle import (
    aggregated_ldos,
    band_average,
    coarse_grain,
    conditional,
    kernel_circuit_faithful,
    kernel_ideal_binning,
    ldos_from_joint,
    ldos_from_kernel,
    leakage_amplitude,
    transition_matrix,
)
from ldos.spectral import SpectralData, band_index, eig_unitary

from conftest import random_pair


def own_band(phi, M):
    # nearest grid point on the circle, found by scanning every band centre
    dist = [abs(np.angle(np.exp(1j * (phi - 2 * np.pi * l / M)))) for l in range(M)]
    return int(np.argmin(dist))


# -- transition matrix --------------------------------------------------------


def test_transition_identity_at_zero_delta():
    pair = random_pair(12, 0.0, seed=2)
    np.testing.assert_allclose(transition_matrix(pair.u_spectral, pair.perturbed_spectral), np.eye(12), atol=1e-12)


def test_transition_permutation():
    su = eig_unitary(build_haar_random(6, 3))
    perm = np.array([3, 0, 5, 1, 2, 4])
    sp = SpectralData(phases=su.phases[perm], vectors=su.vectors[:, perm])
    np.testing.assert_allclose(transition_matrix(su, sp), np.eye(6)[perm], atol=1e-12)


def test_transition_doubly_stochastic(pair16):
    t = transition_matrix(pair16.u_spectral, pair16.perturbed_spectral)
    np.testing.assert_allclose(t.sum(axis=0), 1.0, atol=1e-9)
    np.testing.assert_allclose(t.sum(axis=1), 1.0, atol=1e-9)
    assert t.min() >= 0 and t.max() <= 1 + 1e-12


# -- coarse graining ----------------------------------------------------------


def test_coarse_grain_single_band(pair16):
    t = transition_matrix(pair16.u_spectral, pair16.perturbed_spectral)
    cg = coarse_grain(t, pair16.perturbed_spectral.phases, 1)
    np.testing.assert_allclose(cg, np.ones((1, 16)), atol=1e-12)


def test_coarse_grain_grid_indicator():
    M = 4
    pair = make_map_pair(build_diagonal_grid(8, M, seed=1), build_gue_perturbation(8, 0), 0.0)
    t = transition_matrix(pair.u_spectral, pair.perturbed_spectral)
    cg = coarse_grain(t, pair.perturbed_spectral.phases, M)
    bands = band_index(pair.u_spectral.phases, M)
    np.testing.assert_allclose(cg, np.eye(M)[:, bands], atol=1e-12)


def test_coarse_grain_brute_force(pair32):
    M = 8
    su, sp = pair32.u_spectral, pair32.perturbed_spectral
    t = transition_matrix(su, sp)
    cg = coarse_grain(t, sp.phases, M)
    N = t.shape[0]
    ref = np.zeros((M, N))
    for j in range(N):
        for k in range(N):
            ref[own_band(sp.phases[k], M), j] += t[k, j]
    np.testing.assert_array_equal(cg, ref)
    np.testing.assert_allclose(cg.sum(axis=0), 1.0, atol=1e-9)


def test_band_average_grid_identity():
    M = 4
    pair = make_map_pair(build_diagonal_grid(8, M), build_gue_perturbation(8, 0), 0.0)
    t = transition_matrix(pair.u_spectral, pair.perturbed_spectral)
    ba = band_average(coarse_grain(t, pair.perturbed_spectral.phases, M), pair.u_spectral.phases, M)
    np.testing.assert_allclose(ba.kernel, np.eye(M), atol=1e-12)
    np.testing.assert_array_equal(ba.occupancy, [2, 2, 2, 2])


def test_band_average_uniform_transitions(pair32):
    M, N = 8, 32
    t = np.full((N, N), 1.0 / N)
    sp = pair32.perturbed_spectral.phases
    ba = band_average(coarse_grain(t, sp, M), pair32.u_spectral.phases, M)
    occupancy = np.bincount(band_index(sp, M), minlength=M)
    for m in np.flatnonzero(~ba.empty):
        np.testing.assert_allclose(ba.kernel[:, m], occupancy / N, atol=1e-12)


def test_band_average_flags_empty():
    M = 8
    u = np.diag(np.exp(-2j * np.pi * np.array([0, 0, 1, 1]) / M))
    pair = make_map_pair(u, build_gue_perturbation(4, 0), 0.2)
    t = transition_matrix(pair.u_spectral, pair.perturbed_spectral)
    ba = band_average(coarse_grain(t, pair.perturbed_spectral.phases, M), pair.u_spectral.phases, M)
    np.testing.assert_array_equal(ba.empty, [False, False] + [True] * 6)
    assert np.all(np.isnan(ba.kernel[:, 2:]))
    np.testing.assert_allclose(ba.kernel[:, :2].sum(axis=0), 1.0, atol=1e-9)
    np.testing.assert_allclose(ba.empirical_density()[:2], 2 * M / (2 * np.pi))


# -- ideal binning --------------------------------------------------------------


def test_ideal_eigenstate_is_coarse_column(pair16):
    M, j = 8, 6
    t = transition_matrix(pair16.u_spectral, pair16.perturbed_spectral)
    cg = coarse_grain(t, pair16.perturbed_spectral.phases, M)
    kernel = kernel_ideal_binning(pair16, M, Eigenstate(j))
    m = band_index(pair16.u_spectral.phases[j], M)
    np.testing.assert_array_equal(kernel[m], cg[:, j])
    assert np.all(np.isnan(np.delete(kernel, m, axis=0)))


def test_ideal_mixed_is_band_average(pair16):
    M = 8
    t = transition_matrix(pair16.u_spectral, pair16.perturbed_spectral)
    ba = band_average(coarse_grain(t, pair16.perturbed_spectral.phases, M), pair16.u_spectral.phases, M)
    np.testing.assert_array_equal(kernel_ideal_binning(pair16, M, MaximallyMixed()), ba.kernel.T)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ideal_pure_state_triple_loop(seed):
    N, M = 12, 4
    pair = random_pair(N, 0.6, seed=seed)
    rng = np.random.default_rng(seed)
    # independent diagonalization; eigenvector phases are arbitrary here
    _, a = np.linalg.eig(pair.u)
    _, b = np.linalg.eig(pair.u_perturbed)
    phi_u = np.mod(-np.angle(np.diag(a.conj().T @ pair.u @ a)), 2 * np.pi)
    phi_p = np.mod(-np.angle(np.diag(b.conj().T @ pair.u_perturbed @ b)), 2 * np.pi)
    bands_u = [own_band(x, M) for x in phi_u]
    bands_p = [own_band(x, M) for x in phi_p]
    m0 = max(set(bands_u), key=bands_u.count)
    inband = [j for j in range(N) if bands_u[j] == m0]
    c = np.zeros(N, dtype=complex)
    c[inband] = rng.normal(size=len(inband)) + 1j * rng.normal(size=len(inband))
    c /= np.linalg.norm(c)
    psi = a @ c
    ref = np.zeros(M)
    for k, j, jp in itertools.product(range(N), inband, inband):
        ref[bands_p[k]] += (
            c[j] * np.conj(c[jp]) * np.vdot(b[:, k], a[:, j]) * np.conj(np.vdot(b[:, k], a[:, jp]))
        ).real
    kernel = kernel_ideal_binning(pair, M, PureState(psi))
    np.testing.assert_allclose(kernel[m0], ref, atol=1e-10)
    others = [m for m in range(M) if m != m0]
    assert np.all(np.isnan(kernel[others]))


# -- circuit-faithful kernel --------------------------------------------------


@pytest.mark.parametrize("init", [MaximallyMixed(), Eigenstate(2), "pure"])
def test_faithful_equals_ideal_on_grid(init):
    M = 8
    pair = grid_aligned_pair(16, M, 0.4, seed=7)
    if init == "pure":
        # a state confined to one band keeps the comparison on a single row
        bands = band_index(pair.u_spectral.phases, M)
        weights = np.where(bands == bands[0], 1.0 + np.arange(16), 0.0)
        init = PureState(pair.u_spectral.vectors @ weights)
    faithful = conditional(kernel_circuit_faithful(pair, M, init))
    ideal = kernel_ideal_binning(pair, M, init)
    np.testing.assert_array_equal(np.isnan(faithful), np.isnan(ideal))
    ok = ~np.isnan(ideal)
    assert np.max(np.abs(faithful[ok] - ideal[ok])) <= 1e-10


def test_faithful_single_offgrid_phase():
    M = 8
    phi = 2 * np.pi * 2.37 / M
    u = np.diag(np.exp(-1j * np.array([phi, 0.4, 1.9, 4.2])))
    pair = make_map_pair(u, build_gue_perturbation(4, 3), 0.3)
    joint = kernel_circuit_faithful(pair, M, Eigenstate(int(np.argmin(np.abs(pair.u_spectral.phases - phi)))))
    theta = phi - 2 * np.pi * np.arange(M) / M
    fejer = (np.sin(M * theta / 2) / (M * np.sin(theta / 2))) ** 2
    np.testing.assert_allclose(joint.sum(axis=1), fejer, atol=1e-12)


def test_leakage_amplitude_closed_form():
    M = 16
    phases = np.array([0.0, 0.3, 2.0, 6.1])
    amp = leakage_amplitude(phases, M)
    theta = phases[:, None] - 2 * np.pi * np.arange(M) / M
    with np.errstate(invalid="ignore", divide="ignore"):
        closed = (1 - np.exp(-1j * M * theta)) / (M * (1 - np.exp(-1j * theta)))
    closed[np.isclose(theta, 0)] = 1.0
    np.testing.assert_allclose(amp, closed, atol=1e-12)
    np.testing.assert_allclose((np.abs(amp) ** 2).sum(axis=1), 1.0, atol=1e-12)


def test_faithful_approaches_ideal_near_grid():
    M, N = 8, 16
    rng = np.random.default_rng(4)
    bins = rng.integers(0, M, N)
    jitter = rng.uniform(-1, 1, N)
    w = build_haar_random(N, 10)
    bins_p = rng.integers(0, M, N)
    diffs = []
    for eps in (1e-1, 1e-2, 1e-3, 0.0):
        u = np.diag(np.exp(-1j * (2 * np.pi * bins / M + eps * jitter)))
        up = (w * np.exp(-1j * (2 * np.pi * bins_p / M + eps * jitter))) @ w.conj().T
        # V is fixed by U and U(sigma); take the principal log of their ratio
        ratio = eig_unitary(up @ u.conj().T)
        theta = np.where(ratio.phases > np.pi, ratio.phases - 2 * np.pi, ratio.phases)
        vv = (ratio.vectors * theta) @ ratio.vectors.conj().T
        pair = make_map_pair(u, 0.5 * (vv + vv.conj().T), 1.0, u_perturbed=up)
        f = conditional(kernel_circuit_faithful(pair, M, MaximallyMixed()))
        i = kernel_ideal_binning(pair, M, MaximallyMixed())
        ok = ~np.isnan(i) & ~np.isnan(f)
        diffs.append(np.max(np.abs(f[ok] - i[ok])))
    assert diffs[0] > diffs[1] > diffs[2] > diffs[3]
    assert diffs[3] <= 1e-10


def test_kernels_invariant_under_eigenvector_phases(pair16):
    rng = np.random.default_rng(8)

    def rephase(s):
        return SpectralData(s.phases, s.vectors * np.exp(1j * rng.uniform(0, 2 * np.pi, s.dimension)))

    moved = dataclasses.replace(
        pair16, u_spectral=rephase(pair16.u_spectral), perturbed_spectral=rephase(pair16.perturbed_spectral)
    )
    psi = PureState(np.cos(np.arange(16.0)) + 0.5j)
    for init in (MaximallyMixed(), Eigenstate(4), psi):
        for kernel in (kernel_ideal_binning, kernel_circuit_faithful):
            a, b = kernel(pair16, 8, init), kernel(moved, 8, init)
            np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
            ok = ~np.isnan(a)
            assert np.max(np.abs(a[ok] - b[ok])) <= 1e-9


# -- sum rule ----------------------------------------------------------------


@pytest.mark.parametrize("N,seed", [(8, 0), (8, 1), (16, 2), (16, 3)])
@pytest.mark.parametrize("delta", [1e-3, 2e-4])
def test_mean_phase_sum_rule(N, seed, delta):
    pair = random_pair(N, delta, seed=seed)
    su, sp = pair.u_spectral, pair.perturbed_spectral
    t = transition_matrix(su, sp)
    shift = np.angle(np.exp(1j * (sp.phases[:, None] - su.phases[None, :])))
    lhs = np.sum(t * shift, axis=0)
    first_order = delta * np.einsum("ij,ik,kj->j", su.vectors.conj(), pair.v, su.vectors).real
    assert np.max(np.abs(lhs - first_order)) <= 10 * delta**2


# -- profiles ----------------------------------------------------------------


def test_profile_point_mass_unperturbed():
    M = 8
    pair = make_map_pair(build_diagonal_grid(16, M), build_gue_perturbation(16, 0), 0.0)
    kernel = kernel_ideal_binning(pair, M, MaximallyMixed())
    for m in range(M):
        prof = ldos_from_kernel(kernel, m)
        assert prof.weight_at(0) == 1.0
        assert prof.weights.sum() == 1.0
    assert aggregated_ldos(pair, M).weight_at(0) == 1.0


def test_profile_uniform_row():
    kernel = np.full((4, 4), 0.25)
    prof = ldos_from_kernel(kernel, 1)
    np.testing.assert_array_equal(prof.weights, 0.25)
    np.testing.assert_array_equal(prof.offsets, [-2, -1, 0, 1])
    np.testing.assert_allclose(prof.phi, np.pi / 2 * np.array([-2, -1, 0, 1]))


def test_profile_offsets_wrap():
    kernel = np.zeros((4, 4))
    kernel[3, 0] = 1.0
    # l = 0 seen from m = 3 is one bin up
    assert ldos_from_kernel(kernel, 3).weight_at(1) == 1.0


def test_profile_empty_band():
    kernel = np.full((2, 2), np.nan)
    with pytest.raises(EmptyBandError):
        ldos_from_kernel(kernel, 0)
    with pytest.raises(EmptyBandError):
        ldos_from_joint(np.zeros((2, 2)))


def test_profile_matches_continuous_histogram():
    N, M = 64, 16
    u = build_haar_random(N, 31)
    v = build_gue_perturbation(N, 32)
    su = eig_unitary(u)
    # Gamma = 2 pi sigma**2 N / (2 pi) = 0.5
    delta = np.sqrt(0.5 / N) / effective_strength(su, v, 1.0)
    pair = make_map_pair(u, v, delta)
    assert 2 * np.pi * pair.sigma**2 * pair.level_density == pytest.approx(0.5, rel=1e-9)
    profile = aggregated_ldos(pair, M)

    t = transition_matrix(pair.u_spectral, pair.perturbed_spectral)
    diff = np.angle(np.exp(1j * (pair.perturbed_spectral.phases[:, None] - pair.u_spectral.phases[None, :])))
    k = np.rint(diff * M / (2 * np.pi)).astype(int)
    k[k == M // 2] = -(M // 2)
    hist = np.bincount((k + M // 2).ravel(), weights=t.ravel() / N, minlength=M)

    # every pair's band offset differs from its rounded phase difference by at most one bin
    cdf_p = np.cumsum(profile.weights)
    cdf_h = np.cumsum(hist)
    wrapped = hist[0] + hist[-1]
    for i in range(1, M - 1):
        assert cdf_h[i - 1] - wrapped - 1e-12 <= cdf_p[i] <= cdf_h[i + 1] + wrapped + 1e-12
    assert np.abs(profile.weights - hist).sum() <= 0.5
