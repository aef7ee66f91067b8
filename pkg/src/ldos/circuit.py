"""Statevector simulation of the two-stage phase-estimation circuit.

The lower register holds ``N`` amplitudes, the ancilla register ``M = 2**m_q``
values. One stage prepares the ancilla in uniform superposition, applies
``U**(2**k)`` controlled on ancilla qubit ``k``, Fourier-transforms the ancilla
and measures it. The first stage uses ``U``, the second (after an ancilla
reset) the perturbed map, acting on the collapsed register state.

Intermediate measurements are kept as exact branch bookkeeping: every outcome
is recorded with its probability and post-measurement state, and shots sample
from those recorded distributions.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .errors import ConfigurationError, NumericalError, PreconditionError
from .models import MapPair
from .spectral import as_unitary, dft, normalize

__all__ = [
    "MaximallyMixed",
    "Eigenstate",
    "PureState",
    "InitMode",
    "CircuitConfig",
    "ShotRecord",
    "PhaseEstimate",
    "PhaseEstimationCircuit",
    "pe_measure",
    "run_shot",
    "sample_shots",
    "exact_joint_distribution",
    "BATCH_SIZE",
]

NORM_TOL = 1e-10
# shots per independent RNG stream; fixed so output does not depend on threading
BATCH_SIZE = 4096


@dataclass(frozen=True)
class MaximallyMixed:
    """Register starts in the uniform mixture over all basis states."""


@dataclass(frozen=True)
class Eigenstate:
    """Register starts in eigenvector ``index`` of ``U`` (phase-sorted order)."""

    index: int


@dataclass(frozen=True, eq=False)
class PureState:
    """Register starts in the given pure state (normalized on construction)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", normalize(self.amplitudes))


InitMode = Union[MaximallyMixed, Eigenstate, PureState]


@dataclass(frozen=True)
class CircuitConfig:
    m_bins: int
    init_mode: InitMode = MaximallyMixed()
    shots: int = 0
    seed: int = 0

    def __post_init__(self):
        M = self.m_bins
        if int(M) != M or M < 2 or M & (M - 1):
            raise ConfigurationError(f"m_bins must be a power of two >= 2, got {M}")
        if self.shots < 0:
            raise ConfigurationError(f"shots must be >= 0, got {self.shots}")
        if not isinstance(self.init_mode, (MaximallyMixed, Eigenstate, PureState)):
            raise ConfigurationError(f"unsupported init mode {self.init_mode!r}")

    @property
    def ancilla_qubits(self) -> int:
        return self.m_bins.bit_length() - 1


class ShotRecord(NamedTuple):
    m: int
    l: int
    shot_index: int


@dataclass(frozen=True)
class PhaseEstimate:
    """Outcome distribution of one phase-estimation stage.

    ``states[m]`` is the normalized register state after observing ``m``; rows
    with zero probability are left zero.
    """

    probabilities: np.ndarray
    states: np.ndarray


def _binary_powers(u: np.ndarray, M: int) -> list[np.ndarray]:
    powers = [u]
    while 2 ** len(powers) < M:
        powers.append(powers[-1] @ powers[-1])
    return powers


def _pe_branches(powers: list[np.ndarray], states: np.ndarray) -> np.ndarray:
    """Joint ancilla/register amplitudes after controlled powers and Fourier step.

    ``states`` is ``(N, B)``, a batch of register states; the result is
    ``(M, N, B)`` indexed by ancilla outcome.
    """
    M = 2 ** len(powers)
    joint = np.repeat(states[None, :, :], M, axis=0) / np.sqrt(M)
    t = np.arange(M)
    for k, power in enumerate(powers):
        on = (t >> k) & 1 == 1
        joint[on] = np.einsum("ij,tjb->tib", power, joint[on])
    joint = np.tensordot(dft(M), joint, axes=(1, 0))
    norms = np.sum(np.abs(joint) ** 2, axis=(0, 1))
    expected = np.sum(np.abs(states) ** 2, axis=0)
    if np.max(np.abs(norms - expected)) > NORM_TOL:
        raise NumericalError("joint state lost normalization during phase estimation")
    return joint


def _collapse(joint: np.ndarray):
    probs = np.sum(np.abs(joint) ** 2, axis=1)  # (M, B)
    scale = np.zeros_like(probs)
    np.divide(1.0, np.sqrt(probs), out=scale, where=probs > 0.0)
    return probs, joint * scale[:, None, :]


def pe_measure(u, state, M: int, powers: list[np.ndarray] | None = None) -> PhaseEstimate:
    """Run one phase-estimation stage on ``state`` and resolve the ancilla measurement.

    Parameters
    ----------
    u : array_like
        Unitary ``(N, N)`` operator.
    state : array_like
        Normalized register state of length ``N``.
    M : int
        Number of ancilla outcomes, a power of two.
    powers : list of ndarray, optional
        Precomputed ``U**(2**k)``; computed from ``u`` when omitted.

    Returns
    -------
    PhaseEstimate
        Exact outcome probabilities (summing to 1) and post-measurement states.
    """
    state = np.asarray(state, dtype=complex)
    if abs(np.linalg.norm(state) - 1.0) > NORM_TOL:
        raise PreconditionError("pe_measure needs a normalized input state")
    if M < 2 or M & (M - 1):
        raise ConfigurationError(f"M must be a power of two >= 2, got {M}")
    if powers is None:
        powers = _binary_powers(as_unitary(u), M)
    if state.shape != (powers[0].shape[0],):
        raise ConfigurationError(f"state of shape {state.shape} does not match operator")
    probs, post = _collapse(_pe_branches(powers, state[:, None]))
    return PhaseEstimate(probabilities=probs[:, 0], states=post[:, :, 0])


def _cdf(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    last = c[..., -1:]
    c = c / np.where(last > 0, last, 1.0)
    c[..., -1] = 1.0
    return c


def _draw(cdf: np.ndarray, u) -> np.ndarray:
    """Inverse-CDF draw; ``cdf`` rows broadcast against uniforms ``u``."""
    return np.sum(cdf <= np.asarray(u)[..., None], axis=-1)


class PhaseEstimationCircuit:
    """Two-stage circuit bound to one map pair and configuration.

    Binary powers of both maps are computed once. ``tables()`` propagates
    every initial basis state through both stages and caches the resulting
    first-stage distributions ``p1[x, m]`` and second-stage distributions
    ``p2[x, m, l]``; sampling and the exact joint distribution both read them.
    """

    def __init__(self, pair: MapPair, cfg: CircuitConfig):
        self.pair = pair
        self.cfg = cfg
        M, N = cfg.m_bins, pair.dimension
        if M > N:
            warnings.warn(f"M = {M} exceeds the register dimension N = {N}", stacklevel=2)
        self.powers_u = _binary_powers(pair.u, M)
        self.powers_p = _binary_powers(pair.u_perturbed, M)
        self._tables = None
        self._starts = None

    @property
    def M(self) -> int:
        return self.cfg.m_bins

    def initial_states(self) -> np.ndarray:
        """Columns are the pure states the register may start in (uniformly)."""
        if self._starts is None:
            self._starts = self._build_initial_states()
        return self._starts

    def _build_initial_states(self) -> np.ndarray:
        init, N = self.cfg.init_mode, self.pair.dimension
        if isinstance(init, MaximallyMixed):
            return np.eye(N, dtype=complex)
        if isinstance(init, Eigenstate):
            if not 0 <= init.index < N:
                raise ConfigurationError(f"eigenstate index {init.index} outside [0, {N})")
            return self.pair.u_spectral.vectors[:, [init.index]].copy()
        if init.amplitudes.shape != (N,):
            raise ConfigurationError(f"initial state must have length {N}")
        return init.amplitudes[:, None].copy()

    def tables(self):
        if self._tables is None:
            start = self.initial_states()
            p1, post = _collapse(_pe_branches(self.powers_u, start))
            p2 = np.empty((start.shape[1], self.M, self.M))
            for m in range(self.M):
                probs, _ = _collapse(_pe_branches(self.powers_p, post[m]))
                p2[:, m, :] = probs.T
            self._tables = (p1.T.copy(), p2)
        return self._tables

    def exact_joint_distribution(self) -> np.ndarray:
        """``P(m, l)`` averaged over the initial-state ensemble."""
        p1, p2 = self.tables()
        joint = np.einsum("xm,xml->ml", p1, p2) / p1.shape[0]
        if abs(joint.sum() - 1.0) > NORM_TOL:
            raise NumericalError(f"joint distribution sums to {joint.sum()!r}")
        return joint

    def _pick_initial(self, u0) -> np.ndarray:
        count = self.initial_states().shape[1]
        return np.minimum((np.asarray(u0) * count).astype(np.int64), count - 1)

    def run_shot(self, rng: np.random.Generator, shot_index: int = 0) -> ShotRecord:
        """Simulate one repetition literally, stage by stage.

        Three uniforms are consumed: initial basis state, ``m`` and ``l``.
        """
        u = rng.random(3)
        x = int(self._pick_initial(u[0]))
        state = self.initial_states()[:, x]
        first = pe_measure(None, state, self.M, powers=self.powers_u)
        m = int(_draw(_cdf(first.probabilities), u[1]))
        second = pe_measure(None, first.states[m], self.M, powers=self.powers_p)
        l = int(_draw(_cdf(second.probabilities), u[2]))
        return ShotRecord(m, l, shot_index)

    def _sample_batch(self, batch: int, count: int) -> tuple[np.ndarray, np.ndarray]:
        p1, p2 = self.tables()
        u = np.random.default_rng([self.cfg.seed, batch]).random((count, 3))
        x = self._pick_initial(u[:, 0])
        m = _draw(_cdf(p1[x]), u[:, 1])
        l = _draw(_cdf(p2[x, m]), u[:, 2])
        return m, l

    def sample(self, shots: int | None = None, threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``shots`` outcome pairs; returns arrays ``(m, l)``.

        Shot ``i`` uses row ``i % BATCH_SIZE`` of the stream seeded by
        ``(seed, i // BATCH_SIZE)``, so the result is independent of ``threads``.
        """
        shots = self.cfg.shots if shots is None else shots
        if shots == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        self.tables()
        sizes = [min(BATCH_SIZE, shots - b * BATCH_SIZE) for b in range(-(-shots // BATCH_SIZE))]
        jobs = list(enumerate(sizes))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda job: self._sample_batch(*job), jobs))
        else:
            parts = [self._sample_batch(*job) for job in jobs]
        return (np.concatenate([p[0] for p in parts]).astype(np.int64),
                np.concatenate([p[1] for p in parts]).astype(np.int64))


def run_shot(pair: MapPair, cfg: CircuitConfig, rng: np.random.Generator, shot_index: int = 0) -> ShotRecord:
    """One circuit repetition; see :meth:`PhaseEstimationCircuit.run_shot`."""
    return PhaseEstimationCircuit(pair, cfg).run_shot(rng, shot_index)


def sample_shots(pair: MapPair, cfg: CircuitConfig, threads: int = 1) -> list[ShotRecord]:
    m, l = PhaseEstimationCircuit(pair, cfg).sample(threads=threads)
    return [ShotRecord(int(a), int(b), i) for i, (a, b) in enumerate(zip(m, l))]


def exact_joint_distribution(pair: MapPair, cfg: CircuitConfig) -> np.ndarray:
    """Exact ``P(m, l)`` from propagating every measurement branch."""
    return PhaseEstimationCircuit(pair, cfg).exact_joint_distribution()
