"""Generators for the unperturbed map, the perturbation and the perturbed map.

Every generator is seeded through :func:`numpy.random.default_rng`, so the
same ``(kind, N, seed, params)`` always yields bit-identical matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigurationError, DegenerateInputError
from .spectral import (
    TWO_PI,
    SpectralData,
    as_hermitian,
    as_unitary,
    eig_unitary,
    hermitian_eig,
)

__all__ = [
    "MODEL_KINDS",
    "ModelSpec",
    "MapPair",
    "build_floquet",
    "build_haar_random",
    "build_gue_perturbation",
    "build_banded_perturbation",
    "build_diagonal_grid",
    "build_perturbed",
    "build_unitary",
    "build_perturbation",
    "make_map_pair",
    "grid_aligned_pair",
    "effective_strength",
    "bandwidth",
    "level_density",
]

MODEL_KINDS = ("haar_random", "gue_kick", "diagonal_grid", "floquet_hamiltonian")


def _check_dim(N: int) -> None:
    if int(N) != N or N < 2:
        raise ConfigurationError(f"dimension must be an integer >= 2, got {N}")


def build_floquet(h, tau: float) -> np.ndarray:
    """Return ``exp(-i h tau)`` through the spectral decomposition of ``h``."""
    h = as_hermitian(h)
    w, vecs = hermitian_eig(h)
    return as_unitary((vecs * np.exp(-1j * w * tau)) @ vecs.conj().T)


def build_haar_random(N: int, seed: int) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix.

    The phases of ``diag(R)`` are absorbed into ``Q`` so the result is Haar
    distributed rather than biased by the QR sign convention.
    """
    _check_dim(N)
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def _gue(N: int, rng: np.random.Generator) -> np.ndarray:
    a = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2.0)
    return (a + a.conj().T) / np.sqrt(2.0)


def _unit_offdiagonal(v: np.ndarray) -> np.ndarray:
    N = v.shape[0]
    off = ~np.eye(N, dtype=bool)
    msq = np.mean(np.abs(v[off]) ** 2)
    if msq == 0.0:
        raise DegenerateInputError("perturbation has no off-diagonal elements")
    v = v / np.sqrt(msq)
    return 0.5 * (v + v.conj().T)


def build_gue_perturbation(N: int, seed: int) -> np.ndarray:
    """GUE matrix rescaled so its mean squared off-diagonal element is exactly 1."""
    _check_dim(N)
    return _unit_offdiagonal(_gue(N, np.random.default_rng(seed)))


def build_banded_perturbation(N: int, half_width: int, seed: int, basis=None) -> np.ndarray:
    """GUE entries restricted to ``|j - k| <= half_width`` (circular distance).

    With ``basis`` (columns orthonormal) the band lives in that basis, i.e. the
    returned matrix is ``basis @ B @ basis^H``.
    """
    _check_dim(N)
    if not 1 <= half_width <= N // 2:
        raise ConfigurationError(f"half_width must lie in [1, {N // 2}], got {half_width}")
    j = np.arange(N)
    dist = np.abs(j[:, None] - j[None, :])
    dist = np.minimum(dist, N - dist)
    b = _gue(N, np.random.default_rng(seed))
    b[dist > half_width] = 0.0
    b = _unit_offdiagonal(b)
    if basis is not None:
        basis = np.asarray(basis, dtype=complex)
        b = basis @ b @ basis.conj().T
        b = 0.5 * (b + b.conj().T)
    return b


def build_diagonal_grid(N: int, M: int, seed: int | None = None) -> np.ndarray:
    """Diagonal unitary with every eigenphase on the ``2 pi m / M`` grid.

    Bins are ``j mod M`` when ``seed`` is None, otherwise drawn uniformly.
    """
    _check_dim(N)
    if M < 1:
        raise ConfigurationError(f"M must be positive, got {M}")
    if seed is None:
        bins = np.arange(N) % M
    else:
        bins = np.random.default_rng(seed).integers(0, M, size=N)
    return np.diag(np.exp(-2j * np.pi * bins / M))


def build_perturbed(u, v, delta: float) -> np.ndarray:
    """Perturbed map ``exp(-i delta V) U``; ``delta == 0`` returns ``U`` unchanged."""
    u = as_unitary(u)
    v = as_hermitian(v)
    if u.shape != v.shape:
        raise ConfigurationError(f"shape mismatch: U {u.shape} vs V {v.shape}")
    if delta < 0:
        raise ConfigurationError(f"delta must be >= 0, got {delta}")
    if delta == 0:
        return u.copy()
    return as_unitary(build_floquet(v, delta) @ u)


# -- derived physical parameters ------------------------------------------------------


def _offdiag_weights(u_spectral: SpectralData, v) -> np.ndarray:
    vecs = u_spectral.vectors
    elements = vecs.conj().T @ np.asarray(v, dtype=complex) @ vecs
    w = np.abs(elements) ** 2
    np.fill_diagonal(w, 0.0)
    return w


def effective_strength(
    u_spectral: SpectralData, v, delta: float, coupling_threshold: float = 0.01
) -> float:
    """Effective perturbation strength ``sigma``.

    ``sigma**2`` is ``delta**2`` times the mean of ``|<phi_j|V|phi_j'>|**2``
    over directly coupled pairs: ``j != j'`` with squared element at least
    ``coupling_threshold`` times the largest off-diagonal one.
    """
    if not 0.0 < coupling_threshold < 1.0:
        raise ConfigurationError(f"coupling_threshold must lie in (0, 1), got {coupling_threshold}")
    if delta == 0:
        return 0.0
    w = _offdiag_weights(u_spectral, v)
    peak = w.max()
    if peak == 0.0:
        raise DegenerateInputError("no directly coupled eigenstate pairs")
    off = ~np.eye(w.shape[0], dtype=bool)
    coupled = off & (w >= coupling_threshold * peak)
    return float(abs(delta) * np.sqrt(w[coupled].mean()))


def bandwidth(u_spectral: SpectralData, v, mass_fraction: float = 0.95) -> int:
    """Half-width of the band carrying ``mass_fraction`` of the off-diagonal weight.

    Distances are circular index distances in the phase-ordered eigenbasis.
    """
    if not 0.0 < mass_fraction <= 1.0:
        raise ConfigurationError(f"mass_fraction must lie in (0, 1], got {mass_fraction}")
    w = _offdiag_weights(u_spectral, v)
    N = w.shape[0]
    total = w.sum()
    if total == 0.0:
        return 1
    j = np.arange(N)
    dist = np.abs(j[:, None] - j[None, :])
    dist = np.minimum(dist, N - dist)
    mass = np.bincount(dist.ravel(), weights=w.ravel(), minlength=N // 2 + 1)
    cum = np.cumsum(mass[1:])
    target = mass_fraction * total * (1.0 - 1e-12)
    width = int(np.searchsorted(cum, target, side="left")) + 1
    return min(max(width, 1), N - 1)


def level_density(N: int) -> float:
    """Uniform eigenphase density ``N / (2 pi)`` in states per radian."""
    _check_dim(N)
    return N / TWO_PI


# -- model specs and map pairs ------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Recipe for one operator.

    ``params`` carries kind-specific settings: ``tau`` for ``gue_kick`` and
    ``floquet_hamiltonian``, ``m_bins`` for ``diagonal_grid`` and optionally
    ``energies`` for ``floquet_hamiltonian``.
    """

    kind: str
    dimension: int
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        _check_dim(self.dimension)


def build_unitary(spec: ModelSpec) -> np.ndarray:
    """Construct the unperturbed map described by ``spec``."""
    N, p = spec.dimension, spec.params
    if spec.kind == "haar_random":
        return build_haar_random(N, spec.seed)
    if spec.kind == "gue_kick":
        return build_floquet(build_gue_perturbation(N, spec.seed), p.get("tau", 1.0))
    if spec.kind == "diagonal_grid":
        if "m_bins" not in p:
            raise ConfigurationError("diagonal_grid model requires params.m_bins")
        seed = spec.seed if p.get("random_bins") else None
        return build_diagonal_grid(N, int(p["m_bins"]), seed)
    h = _hamiltonian(spec)
    return build_floquet(h, p.get("tau", 1.0))


def _hamiltonian(spec: ModelSpec) -> np.ndarray:
    energies = spec.params.get("energies")
    if energies is None:
        return build_gue_perturbation(spec.dimension, spec.seed)
    energies = np.asarray(energies, dtype=float)
    if energies.shape != (spec.dimension,):
        raise ConfigurationError(f"energies must have length {spec.dimension}")
    return np.diag(energies).astype(complex)


def build_perturbation(spec: ModelSpec) -> np.ndarray:
    """Construct the Hermitian perturbation described by ``spec``."""
    if spec.kind == "gue_kick":
        half_width = spec.params.get("half_width")
        if half_width is None:
            return build_gue_perturbation(spec.dimension, spec.seed)
        return build_banded_perturbation(spec.dimension, int(half_width), spec.seed)
    if spec.kind == "floquet_hamiltonian":
        return _hamiltonian(spec)
    raise ConfigurationError(f"model kind {spec.kind!r} cannot be used as a perturbation")


@dataclass(frozen=True)
class MapPair:
    """Unperturbed map, perturbation and perturbed map with derived parameters."""

    u: np.ndarray
    v: np.ndarray
    delta: float
    u_perturbed: np.ndarray
    sigma: float
    bandwidth: int
    level_density: float
    u_spectral: SpectralData
    perturbed_spectral: SpectralData

    @property
    def dimension(self) -> int:
        return self.u.shape[0]


def make_map_pair(
    u,
    v,
    delta: float,
    coupling_threshold: float = 0.01,
    mass_fraction: float = 0.95,
    u_perturbed=None,
) -> MapPair:
    """Build the perturbed map and every derived quantity for ``(U, V, delta)``.

    ``u_perturbed`` may be supplied when it is known more accurately than the
    matrix exponential would give; it is checked against ``exp(-i delta V) U``.
    """
    u = as_unitary(u)
    v = as_hermitian(v)
    computed = build_perturbed(u, v, delta)
    if u_perturbed is None:
        u_perturbed = computed
    else:
        u_perturbed = as_unitary(u_perturbed)
        err = np.max(np.abs(u_perturbed - computed))
        if err > 1e-9:
            raise ConfigurationError(f"u_perturbed differs from exp(-i delta V) U by {err:.3e}")
    su = eig_unitary(u)
    sp = su if delta == 0 and u_perturbed is computed else eig_unitary(u_perturbed)
    N = u.shape[0]
    sigma = effective_strength(su, v, delta, coupling_threshold) if delta else 0.0
    return MapPair(
        u=u,
        v=v,
        delta=float(delta),
        u_perturbed=u_perturbed,
        sigma=sigma,
        bandwidth=bandwidth(su, v, mass_fraction),
        level_density=level_density(N),
        u_spectral=su,
        perturbed_spectral=sp,
    )


def grid_aligned_pair(N: int, M: int, delta: float, seed: int) -> MapPair:
    """Pair whose unperturbed and perturbed eigenphases all sit on the 2 pi/M grid.

    ``U`` is diagonal with grid phases, ``U(sigma) = W D W^H`` uses a Haar
    basis ``W`` and fresh grid phases, and ``V = (i/delta) log(U(sigma) U^H)``
    is the principal logarithm, so ``U(sigma) = exp(-i delta V) U`` holds.
    This is the zero-leakage regime in which phase estimation is exact.
    """
    if delta <= 0:
        raise ConfigurationError("grid_aligned_pair needs delta > 0")
    rng = np.random.default_rng(seed)
    bins_u = rng.integers(0, M, size=N)
    bins_p = rng.integers(0, M, size=N)
    u = np.diag(np.exp(-2j * np.pi * bins_u / M))
    w = build_haar_random(N, int(rng.integers(2**32)))
    up = (w * np.exp(-2j * np.pi * bins_p / M)) @ w.conj().T
    ratio = eig_unitary(up @ u.conj().T)
    theta = np.where(ratio.phases > np.pi, ratio.phases - TWO_PI, ratio.phases)
    v = (ratio.vectors * (theta / delta)) @ ratio.vectors.conj().T
    v = 0.5 * (v + v.conj().T)
    return make_map_pair(u, v, delta, u_perturbed=up)
