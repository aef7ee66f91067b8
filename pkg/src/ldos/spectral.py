r"""Dense complex linear algebra used throughout the package.

Operators are plain ``numpy`` arrays; :func:`as_unitary` and
:func:`as_hermitian` validate them on the way in. Eigendecompositions go
through :func:`hermitian_eig`, a self-contained Householder + implicit-shift
QL solver, so results are deterministic and do not depend on the LAPACK build.

Phase convention: an eigenvector :math:`v` of a unitary :math:`U` carries the
eigenphase :math:`\phi \in [0, 2\pi)` with :math:`U v = e^{-i\phi} v`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError

__all__ = [
    "SpectralData",
    "as_unitary",
    "as_hermitian",
    "normalize",
    "apply",
    "dft",
    "hermitian_eig",
    "eig_unitary",
    "wrap_offset",
    "offsets",
    "band_index",
]

TWO_PI = 2.0 * np.pi

UNITARITY_TOL = 1e-10
HERMITICITY_TOL = 1e-12
RESIDUAL_TOL = 1e-9
CLUSTER_TOL = 1e-8


def _square(matrix, what: str) -> np.ndarray:
    a = np.asarray(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ConfigurationError(f"{what} must be a square matrix, got shape {a.shape}")
    return a


def as_unitary(matrix, tol: float = UNITARITY_TOL) -> np.ndarray:
    """Return ``matrix`` as a complex array after checking ``U^H U = 1``.

    Raises
    ------
    ConfigurationError
        If the matrix is not square or ``max|U^H U - 1| > tol``.
    """
    u = _square(matrix, "unitary operator")
    err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if err > tol:
        raise ConfigurationError(f"matrix is not unitary: max|U^H U - 1| = {err:.3e}")
    return u


def as_hermitian(matrix, tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Return ``matrix`` as a complex array after checking ``V = V^H``."""
    v = _square(matrix, "Hermitian operator")
    err = np.max(np.abs(v - v.conj().T))
    if err > tol:
        raise ConfigurationError(f"matrix is not Hermitian: max|V - V^H| = {err:.3e}")
    return v


def normalize(vector) -> np.ndarray:
    """Return a unit-norm complex copy of ``vector``."""
    v = np.asarray(vector, dtype=complex).ravel()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ConfigurationError("cannot normalize the zero vector")
    return v / norm


def apply(u, v) -> np.ndarray:
    """Apply operator ``u`` to vector ``v``."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1 or u.ndim != 2 or u.shape[1] != v.shape[0]:
        raise ConfigurationError(
            f"dimension mismatch: operator {u.shape} cannot act on vector {v.shape}"
        )
    return u @ v


def dft(M: int) -> np.ndarray:
    r"""Unitary Fourier matrix :math:`F_{jk} = M^{-1/2} e^{2\pi i jk/M}`."""
    if M < 2:
        raise ConfigurationError(f"DFT size must be >= 2, got {M}")
    jk = np.outer(np.arange(M), np.arange(M)) % M
    return np.exp(2j * np.pi * jk / M) / np.sqrt(M)


# -- Hermitian eigensolver ---------------------------------------------------


def _tridiagonalize(a: np.ndarray):
    """Householder reduction ``A = Q T Q^H`` with T Hermitian tridiagonal.

    Returns the real diagonal, the complex subdiagonal ``T[k+1, k]`` and ``Q``.
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = a[k + 1 :, k]
        tail = np.linalg.norm(x[1:])
        if tail == 0.0:
            continue
        norm_x = np.hypot(abs(x[0]), tail)
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * norm_x
        v /= np.linalg.norm(v)
        vh = v.conj()
        a[k + 1 :, :] -= 2.0 * np.outer(v, vh @ a[k + 1 :, :])
        a[:, k + 1 :] -= 2.0 * np.outer(a[:, k + 1 :] @ v, vh)
        q[:, k + 1 :] -= 2.0 * np.outer(q[:, k + 1 :] @ v, vh)
    return a.diagonal().real.copy(), a.diagonal(-1).copy(), q


def _tql_implicit(d: np.ndarray, e: np.ndarray, max_iter: int = 60):
    """Implicit-shift QL on a real symmetric tridiagonal matrix.

    ``d`` holds the diagonal, ``e[i]`` the coupling between ``i`` and ``i+1``.
    Returns eigenvalues and a matrix whose *rows* are the eigenvectors.
    """
    n = d.shape[0]
    d = d.astype(float).copy()
    e = np.append(e.astype(float), 0.0)
    zt = np.eye(n)
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise NumericalError(f"QL iteration did not converge for eigenvalue {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + np.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                upper = zt[i + 1].copy()
                zt[i + 1] = s * zt[i] + c * upper
                zt[i] = c * zt[i] - s * upper
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, zt


def hermitian_eig(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.

    Parameters
    ----------
    matrix : array_like
        Hermitian ``(N, N)`` matrix. Only the lower triangle's Hermitian part is
        effectively used; callers should pass a genuinely Hermitian matrix.

    Returns
    -------
    w : ndarray
        ``(N,)`` real eigenvalues in ascending order.
    vecs : ndarray
        ``(N, N)`` complex matrix, column ``j`` is the eigenvector for ``w[j]``.
    """
    a = _square(matrix, "Hermitian operator")
    a = 0.5 * (a + a.conj().T)
    n = a.shape[0]
    if n == 1:
        return a.real.diagonal().copy(), np.ones((1, 1), dtype=complex)
    d, e, q = _tridiagonalize(a)
    # diagonal unitary rescaling makes the subdiagonal real and nonnegative
    mag = np.abs(e)
    unit = np.ones_like(e)
    nz = mag > 0
    unit[nz] = e[nz] / mag[nz]
    phases = np.concatenate(([1.0 + 0j], np.cumprod(unit)))
    w, zt = _tql_implicit(d, mag)
    order = np.argsort(w, kind="stable")
    vecs = q @ (phases[:, None] * zt[order].T)
    return w[order], vecs


# -- unitary spectra -----------------------------------------------------------


@dataclass(frozen=True)
class SpectralData:
    """Eigenphases and eigenvectors of a unitary, sorted by phase.

    ``vectors[:, j]`` satisfies ``U @ vectors[:, j] == exp(-1j * phases[j]) *
    vectors[:, j]``; the first non-negligible component of every vector is
    real and positive.
    """

    phases: np.ndarray
    vectors: np.ndarray

    @property
    def dimension(self) -> int:
        return self.phases.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Rebuild ``sum_j exp(-i phi_j) v_j v_j^H``."""
        return (self.vectors * np.exp(-1j * self.phases)) @ self.vectors.conj().T

    def residuals(self, u) -> np.ndarray:
        """Per-eigenpair residual ``||U v_j - exp(-i phi_j) v_j||_2``."""
        u = np.asarray(u, dtype=complex)
        diff = u @ self.vectors - self.vectors * np.exp(-1j * self.phases)
        return np.linalg.norm(diff, axis=0)


def _clusters(values: np.ndarray, tol: float) -> list[np.ndarray]:
    breaks = np.nonzero(np.diff(values) > tol)[0] + 1
    return np.split(np.arange(values.shape[0]), breaks)


def _lead_index(vectors: np.ndarray) -> np.ndarray:
    mag = np.abs(vectors)
    significant = mag > 1e-8 * mag.max(axis=0, keepdims=True)
    return np.argmax(significant, axis=0)


def _split_and_phase(u, h_vals, h_vecs, skew, tol):
    vecs = h_vecs.copy()
    for idx in _clusters(h_vals, tol):
        if idx.size < 2:
            continue
        sub = vecs[:, idx]
        _, rot = hermitian_eig(sub.conj().T @ skew @ sub)
        vecs[:, idx] = sub @ rot
    rayleigh = np.einsum("ij,ij->j", vecs.conj(), u @ vecs)
    phases = np.mod(-np.angle(rayleigh), TWO_PI)
    # round-off can land a zero phase just below 2*pi
    phases[phases > TWO_PI - 1e-12] = 0.0
    return phases, vecs


def eig_unitary(u, cluster_tol: float = CLUSTER_TOL) -> SpectralData:
    """Eigendecomposition of a unitary matrix.

    The Hermitian part ``(U + U^H)/2`` is diagonalized first. Inside each
    cluster of (near-)equal eigenvalues the skew part ``(U - U^H)/(2i)`` is
    diagonalized on the cluster subspace, which separates the ``+phi``/``-phi``
    pairs sharing a cosine. If the residual check fails the cluster tolerance
    is widened and the split repeated.

    Raises
    ------
    NumericalError
        If no tolerance on the ladder brings every residual below 1e-9.
    """
    u = as_unitary(u)
    h_vals, h_vecs = hermitian_eig(0.5 * (u + u.conj().T))
    skew = (u - u.conj().T) / 2j
    worst = np.inf
    for tol in (cluster_tol, 1e-6, 1e-4, 1e-2):
        phases, vecs = _split_and_phase(u, h_vals, h_vecs, skew, tol)
        lead = _lead_index(vecs)
        lead_vals = vecs[lead, np.arange(vecs.shape[1])]
        vecs = vecs * (np.abs(lead_vals) / lead_vals)
        order = np.lexsort((lead, phases))
        spec = SpectralData(phases=phases[order], vectors=vecs[:, order])
        worst = spec.residuals(u).max()
        if worst <= RESIDUAL_TOL:
            return spec
    raise NumericalError(f"unitary eigensolver residual {worst:.3e} exceeds {RESIDUAL_TOL}")


# -- phase bins ------------------------------------------------------------------


def wrap_offset(l, m, M: int):
    """Offset ``(l - m) mod M`` mapped into ``[-floor(M/2), ceil(M/2))``."""
    half = M // 2
    return (np.asarray(l) - np.asarray(m) + half) % M - half


def offsets(M: int) -> np.ndarray:
    """All wrapped offsets for ``M`` bins, in ascending order."""
    return np.arange(-(M // 2), (M + 1) // 2)


def band_index(phases, M: int) -> np.ndarray:
    """Band ``l`` holding each phase; band ``l`` is ``[2 pi l/M - pi/M, 2 pi l/M + pi/M)``.

    A phase on a band edge belongs to the higher band.
    """
    x = np.asarray(phases, dtype=float) * M / TWO_PI
    return np.floor(x + 0.5).astype(np.int64) % M
