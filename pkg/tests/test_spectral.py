import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldos.errors import ConfigurationError, NumericalError
from ldos import spectral
from ldos.models import build_haar_random
from ldos.spectral import (
    apply,
    as_unitary,
    band_index,
    dft,
    eig_unitary,
    hermitian_eig,
    offsets,
    wrap_offset,
)


def random_hermitian(n, rng):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


# -- apply / dft -------------------------------------------------------------


def test_apply_identity():
    v = np.array([1.0, 2j, -0.5, 3.0])
    np.testing.assert_array_equal(apply(np.eye(4), v), v)


def test_apply_diagonal():
    theta = np.array([0.1, 0.7, 2.0])
    u = np.diag(np.exp(-1j * theta))
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1
        np.testing.assert_allclose(apply(u, e), np.exp(-1j * theta[k]) * e, atol=1e-15)


def test_apply_preserves_norm(rng):
    u = build_haar_random(8, 11)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    assert abs(np.linalg.norm(apply(u, v)) - np.linalg.norm(v)) <= 1e-12


def test_apply_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        apply(np.eye(3), np.ones(4))


def test_dft_hadamard():
    np.testing.assert_allclose(dft(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2), atol=1e-15)


def test_dft_square_reverses_index():
    f = dft(4)
    e1 = np.eye(4)[1]
    np.testing.assert_allclose(f @ (f @ e1), np.eye(4)[3], atol=1e-15)


@pytest.mark.parametrize("M", [2, 3, 4, 8, 16, 64])
def test_dft_unitary(M):
    f = dft(M)
    assert np.max(np.abs(f.conj().T @ f - np.eye(M))) <= 1e-12


def test_dft_rejects_small():
    with pytest.raises(ConfigurationError):
        dft(1)


def test_as_unitary_rejects_nonunitary():
    with pytest.raises(ConfigurationError):
        as_unitary(np.array([[1.0, 0.1], [0.0, 1.0]]))


# -- Hermitian solver ----------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 5, 17, 40])
def test_hermitian_eig_matches_lapack(n, rng):
    h = random_hermitian(n, rng)
    vals, vecs = hermitian_eig(h)
    np.testing.assert_allclose(vals, np.linalg.eigvalsh(h), atol=1e-11)
    assert np.max(np.abs(h @ vecs - vecs * vals)) <= 1e-10
    assert np.max(np.abs(vecs.conj().T @ vecs - np.eye(n))) <= 1e-12


def test_hermitian_eig_degenerate():
    q = build_haar_random(6, 4)
    h = (q * np.array([1.0, 1.0, 1.0, -2.0, -2.0, 5.0])) @ q.conj().T
    vals, vecs = hermitian_eig(h)
    np.testing.assert_allclose(vals, [-2, -2, 1, 1, 1, 5], atol=1e-12)
    assert np.max(np.abs(h @ vecs - vecs * vals)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 12), seed=st.integers(0, 2**31))
def test_hermitian_eig_property(n, seed):
    h = random_hermitian(n, np.random.default_rng(seed))
    vals, vecs = hermitian_eig(h)
    assert np.all(np.diff(vals) >= 0)
    assert np.max(np.abs(h @ vecs - vecs * vals)) <= 1e-10 * max(1.0, np.abs(vals).max())


# -- unitary solver ------------------------------------------------------------


def test_eig_identity():
    s = eig_unitary(np.eye(5))
    np.testing.assert_array_equal(s.phases, np.zeros(5))
    assert s.residuals(np.eye(5)).max() <= 1e-12


def test_eig_diagonal():
    u = np.diag(np.exp(-1j * np.array([0.3, 1.7])))
    s = eig_unitary(u)
    np.testing.assert_allclose(s.phases, [0.3, 1.7], atol=1e-14)


def test_eig_haar_residual():
    u = build_haar_random(64, 7)
    s = eig_unitary(u)
    assert s.residuals(u).max() <= 1e-9
    assert np.max(np.abs(s.vectors.conj().T @ s.vectors - np.eye(64))) <= 1e-9
    assert np.all(np.diff(s.phases) >= 0)
    assert np.all((s.phases >= 0) & (s.phases < 2 * np.pi))


def test_round_trip():
    u = build_haar_random(32, 2)
    assert np.max(np.abs(eig_unitary(u).reconstruct() - u)) <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_known_phases_recovered(seed):
    rng = np.random.default_rng(seed)
    basis = build_haar_random(24, 100 + seed)
    phases = rng.uniform(0, 2 * np.pi, 24)
    u = (basis * np.exp(-1j * phases)) @ basis.conj().T
    s = eig_unitary(u)
    np.testing.assert_allclose(s.phases, np.sort(phases), atol=1e-10)
    assert s.residuals(u).max() <= 1e-9


def test_conjugate_pairs_split():
    # real orthogonal matrices have +phi/-phi pairs sharing a cosine
    q, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(10, 10)))
    s = eig_unitary(q)
    assert s.residuals(q).max() <= 1e-9
    assert np.max(np.abs(s.vectors.conj().T @ s.vectors - np.eye(10))) <= 1e-9


def test_degenerate_phases():
    basis = build_haar_random(8, 9)
    phases = np.array([0.5, 0.5, 0.5, 2.0, 2.0, 4.0, 5.9, 5.9])
    u = (basis * np.exp(-1j * phases)) @ basis.conj().T
    s = eig_unitary(u)
    np.testing.assert_allclose(s.phases, phases, atol=1e-10)
    assert s.residuals(u).max() <= 1e-9


def test_eig_deterministic():
    u = build_haar_random(20, 1)
    a, b = eig_unitary(u), eig_unitary(u)
    np.testing.assert_array_equal(a.phases, b.phases)
    np.testing.assert_array_equal(a.vectors, b.vectors)


def test_eig_reports_residual_failure(monkeypatch):
    def broken(u, h_vals, h_vecs, skew, tol):
        return np.zeros(h_vals.shape[0]), h_vecs

    monkeypatch.setattr(spectral, "_split_and_phase", broken)
    with pytest.raises(NumericalError, match="residual"):
        eig_unitary(build_haar_random(6, 0))


# -- bins ---------------------------------------------------------------------


def test_wrap_offset_examples():
    assert wrap_offset(3, 3, 16) == 0
    assert wrap_offset(0, 15, 16) == 1
    assert wrap_offset(8, 0, 16) == -8


@given(M=st.integers(1, 64), data=st.data())
def test_wrap_offset_range(M, data):
    l = data.draw(st.integers(0, M - 1))
    m = data.draw(st.integers(0, M - 1))
    k = int(wrap_offset(l, m, M))
    assert -(M // 2) <= k < (M + 1) // 2
    assert (m + k - l) % M == 0
    assert k in offsets(M)


def test_band_index_edges():
    M = 8
    width = 2 * np.pi / M
    assert band_index(0.0, M) == 0
    # a phase on an edge goes to the higher band
    assert band_index(0.5 * width, M) == 1
    assert band_index(2 * np.pi - 0.5 * width + 1e-9, M) == 0
    assert band_index(2 * np.pi - 0.5 * width - 1e-9, M) == M - 1
    np.testing.assert_array_equal(band_index(width * np.arange(M), M), np.arange(M))
