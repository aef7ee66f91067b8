r"""Exact LDOS quantities from full diagonalization of both maps.

Layout conventions used below:

* ``transition_matrix`` is indexed ``[k, j]`` (perturbed ``k``, unperturbed ``j``).
* ``coarse_grain`` is indexed ``[l, j]`` and ``band_average`` ``[l, m]``, so
  columns are the conditioning index as in the defining sums.
* every *kernel* is indexed ``[m, l]``: rows condition on the first outcome.
  Rows of a conditional kernel that cannot be formed are filled with NaN.

The circuit-faithful kernel uses the phase-estimation amplitude

.. math:: a_M(\phi, m) = \frac{1}{M} \sum_{t=0}^{M-1} e^{-i(\phi - 2\pi m/M) t},

which is what controlled powers of ``U`` followed by the Fourier step produce
when ``U v = e^{-i\phi} v``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigurationError, EmptyBandError
from .circuit import Eigenstate, InitMode, MaximallyMixed, PureState
from .models import MapPair
from .spectral import TWO_PI, SpectralData, band_index, offsets, wrap_offset

__all__ = [
    "LdosProfile",
    "BandAverage",
    "transition_matrix",
    "coarse_grain",
    "band_average",
    "leakage_amplitude",
    "kernel_ideal_binning",
    "kernel_circuit_faithful",
    "conditional",
    "ldos_from_kernel",
    "ldos_from_joint",
    "aggregated_ldos",
]


@dataclass(frozen=True)
class LdosProfile:
    """Normalized weights over wrapped bin offsets ``-floor(M/2) .. ceil(M/2) - 1``.

    ``anchor`` is the first-stage band the profile belongs to, or
    ``"aggregated"`` when it pools all bands.
    """

    weights: np.ndarray
    anchor: Union[int, str]

    @property
    def M(self) -> int:
        return self.weights.shape[0]

    @property
    def offsets(self) -> np.ndarray:
        return offsets(self.M)

    @property
    def phi(self) -> np.ndarray:
        return TWO_PI * self.offsets / self.M

    def weight_at(self, offset: int) -> float:
        return float(self.weights[offset + self.M // 2])


@dataclass(frozen=True)
class BandAverage:
    """Band-averaged kernel ``P(Delta_l | Delta_m)`` indexed ``[l, m]``.

    ``occupancy[m]`` is the number of unperturbed eigenphases in band ``m``;
    columns of empty bands are NaN and flagged in ``empty``.
    """

    kernel: np.ndarray
    occupancy: np.ndarray

    @property
    def empty(self) -> np.ndarray:
        return self.occupancy == 0

    def empirical_density(self) -> np.ndarray:
        """Per-band level density ``N_m / (2 pi / M)`` in states per radian."""
        M = self.occupancy.shape[0]
        return self.occupancy * M / TWO_PI


def transition_matrix(su: SpectralData, sp: SpectralData) -> np.ndarray:
    """``p[k, j] = |<phi_k(sigma)|phi_j>|**2``; doubly stochastic."""
    if su.dimension != sp.dimension:
        raise ConfigurationError("spectral data have different dimensions")
    return np.abs(sp.vectors.conj().T @ su.vectors) ** 2


def coarse_grain(t: np.ndarray, perturbed_phases, M: int) -> np.ndarray:
    """Sum transition probabilities over perturbed phases falling in each band."""
    bands = band_index(perturbed_phases, M)
    out = np.zeros((M, t.shape[1]))
    np.add.at(out, bands, t)
    return out


def band_average(cg: np.ndarray, unperturbed_phases, M: int) -> BandAverage:
    """Average coarse-grained columns over unperturbed phases in each band."""
    bands = band_index(unperturbed_phases, M)
    occupancy = np.bincount(bands, minlength=M)
    sums = np.zeros((cg.shape[0], M))
    np.add.at(sums.T, bands, cg.T)
    with np.errstate(invalid="ignore", divide="ignore"):
        kernel = sums / occupancy
    kernel[:, occupancy == 0] = np.nan
    return BandAverage(kernel=kernel, occupancy=occupancy)


def leakage_amplitude(phases, M: int) -> np.ndarray:
    """Phase-estimation amplitudes ``a_M(phi, m)``, shape ``(len(phases), M)``."""
    phases = np.asarray(phases, dtype=float)
    t = np.arange(M)
    theta = phases[:, None] - TWO_PI * np.arange(M)[None, :] / M
    return np.exp(-1j * theta[:, :, None] * t).sum(axis=2) / M


def _initial_coefficients(pair: MapPair, init: InitMode) -> np.ndarray:
    N = pair.dimension
    if isinstance(init, Eigenstate):
        if not 0 <= init.index < N:
            raise ConfigurationError(f"eigenstate index {init.index} outside [0, {N})")
        c = np.zeros(N, dtype=complex)
        c[init.index] = 1.0
        return c
    if isinstance(init, PureState):
        if init.amplitudes.shape != (N,):
            raise ConfigurationError(f"initial state must have length {N}")
        return pair.u_spectral.vectors.conj().T @ init.amplitudes
    raise ConfigurationError(f"unsupported init mode {init!r}")


def _overlap(pair: MapPair) -> np.ndarray:
    # G[k, j] = <phi_k(sigma)|phi_j>
    return pair.perturbed_spectral.vectors.conj().T @ pair.u_spectral.vectors


def kernel_ideal_binning(pair: MapPair, M: int, init: InitMode, floor: float = 1e-14) -> np.ndarray:
    """Conditional kernel ``P(l|m)`` with hard phase bins (no leakage).

    Eigenstate input returns the coarse-grained column in row ``m_j``; the
    maximally mixed input returns the band average; a general pure state keeps
    the coherent sum over the rescaled coefficients of band ``m``. Bands whose
    share of the initial state is at most ``floor`` stay NaN, matching
    :func:`conditional`.
    """
    su, sp = pair.u_spectral, pair.perturbed_spectral
    kernel = np.full((M, M), np.nan)
    if isinstance(init, MaximallyMixed):
        ba = band_average(coarse_grain(transition_matrix(su, sp), sp.phases, M), su.phases, M)
        return ba.kernel.T.copy()
    if isinstance(init, Eigenstate):
        _initial_coefficients(pair, init)
        cg = coarse_grain(transition_matrix(su, sp), sp.phases, M)
        kernel[band_index(su.phases[init.index], M)] = cg[:, init.index]
        return kernel
    c = _initial_coefficients(pair, init)
    g = _overlap(pair)
    bands_u = band_index(su.phases, M)
    bands_p = band_index(sp.phases, M)
    for m in range(M):
        inband = bands_u == m
        weight = np.sum(np.abs(c[inband]) ** 2)
        if weight <= floor:
            continue
        ct = np.where(inband, c, 0.0) / np.sqrt(weight)
        probs = np.abs(g @ ct) ** 2
        kernel[m] = np.bincount(bands_p, weights=probs, minlength=M)
    return kernel


def kernel_circuit_faithful(pair: MapPair, M: int, init: InitMode) -> np.ndarray:
    """Joint outcome distribution ``P(m, l)`` of the two-stage circuit, with leakage.

    Returns the joint (not conditional) matrix; use :func:`conditional` for
    ``P(l|m)``.
    """
    su, sp = pair.u_spectral, pair.perturbed_spectral
    a1 = leakage_amplitude(su.phases, M)
    l2 = np.abs(leakage_amplitude(sp.phases, M)) ** 2
    if isinstance(init, MaximallyMixed):
        # averaging over a basis removes cross terms between different j
        t = transition_matrix(su, sp)
        return (np.abs(a1) ** 2).T @ t.T @ l2 / pair.dimension
    c = _initial_coefficients(pair, init)
    gamma = _overlap(pair) @ (c[:, None] * a1)
    return (np.abs(gamma) ** 2).T @ l2


def conditional(joint: np.ndarray, floor: float = 1e-14) -> np.ndarray:
    """Row-normalize a joint ``P(m, l)``; rows with marginal <= ``floor`` become NaN."""
    marginal = joint.sum(axis=1)
    out = np.full(joint.shape, np.nan)
    ok = marginal > floor
    out[ok] = joint[ok] / marginal[ok, None]
    return out


def _profile_weights(row: np.ndarray, m: int) -> np.ndarray:
    M = row.shape[0]
    w = np.zeros(M)
    w[wrap_offset(np.arange(M), m, M) + M // 2] = row
    return w


def ldos_from_kernel(kernel: np.ndarray, m: int) -> LdosProfile:
    """LDOS profile anchored at band ``m``: ``eta_m(k) = P(l = m + k | m)``."""
    row = np.asarray(kernel[m], dtype=float)
    if np.any(np.isnan(row)) or row.sum() <= 0.0:
        raise EmptyBandError(f"band {m} has no kernel row")
    w = _profile_weights(row, m)
    return LdosProfile(weights=w / w.sum(), anchor=int(m))


def ldos_from_joint(joint: np.ndarray) -> LdosProfile:
    """Aggregate LDOS pooled over all first-stage bands of a joint distribution."""
    joint = np.asarray(joint, dtype=float)
    M = joint.shape[0]
    w = np.zeros(M)
    for m in range(M):
        w += _profile_weights(joint[m], m)
    if w.sum() <= 0.0:
        raise EmptyBandError("joint distribution is empty")
    return LdosProfile(weights=w / w.sum(), anchor="aggregated")


def aggregated_ldos(pair: MapPair, M: int) -> LdosProfile:
    """Band-averaged LDOS pooled over bands, weighted by band occupancy.

    This is the ideal-binning profile a maximally mixed input produces when
    every first-stage outcome is kept.
    """
    kernel = kernel_ideal_binning(pair, M, MaximallyMixed())
    weight = np.bincount(band_index(pair.u_spectral.phases, M), minlength=M) / pair.dimension
    return ldos_from_joint(np.nan_to_num(kernel) * weight[:, None])
