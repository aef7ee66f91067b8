"""Shot statistics, profile fitting and two-hypothesis testing.

Profiles and count vectors passed to the fitting and testing routines are
indexed by wrapped offset in ascending order, ``-floor(M/2) .. ceil(M/2) - 1``
(the layout of :class:`ldos.oracle.LdosProfile`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy import stats as sps

from .errors import ConfigurationError, DataError, PreconditionError
from .oracle import LdosProfile
from .spectral import TWO_PI, offsets, wrap_offset

__all__ = [
    "FAMILIES",
    "JointCounts",
    "KernelEstimate",
    "ProfileHypothesis",
    "FitResult",
    "TestReport",
    "accumulate",
    "estimate_kernel",
    "offset_counts",
    "discretize_profile",
    "fit_width",
    "predicted_gamma",
    "regime_check",
    "chernoff_lambda",
    "bhattacharyya",
    "required_samples",
    "log_likelihood_ratio",
    "decide",
    "total_variation",
    "chi_square_pvalue",
    "golden_section",
]

FAMILIES = ("breit_wigner", "gaussian")
DEFAULT_THRESHOLD = math.log(20.0)
PROB_FLOOR = 1e-12


# -- counting ----------------------------------------------------------------------


@dataclass(frozen=True)
class JointCounts:
    """Multiplicities of observed ``(m, l)`` pairs, indexed ``[m, l]``."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def M(self) -> int:
        return self.counts.shape[0]

    def __add__(self, other: "JointCounts") -> "JointCounts":
        if other.counts.shape != self.counts.shape:
            raise ConfigurationError("cannot merge counts with different M")
        return JointCounts(self.counts + other.counts)

    @classmethod
    def from_arrays(cls, m, l, M: int) -> "JointCounts":
        m = np.asarray(m, dtype=np.int64)
        l = np.asarray(l, dtype=np.int64)
        if m.shape != l.shape:
            raise DataError("outcome arrays differ in length")
        if m.size and (m.min() < 0 or l.min() < 0 or m.max() >= M or l.max() >= M):
            raise DataError(f"outcome outside [0, {M})")
        counts = np.zeros((M, M), dtype=np.int64)
        np.add.at(counts, (m, l), 1)
        return cls(counts)


def accumulate(shots: Iterable, M: int) -> JointCounts:
    """Tally shot records (anything with ``.m`` and ``.l``) into a count matrix."""
    ms, ls = [], []
    for rec in shots:
        if not (0 <= rec.m < M and 0 <= rec.l < M):
            raise DataError(f"record {rec!r} outside [0, {M})")
        ms.append(rec.m)
        ls.append(rec.l)
    return JointCounts.from_arrays(ms, ls, M)


@dataclass(frozen=True)
class KernelEstimate:
    """Row-normalized counts with binomial standard errors; empty rows are NaN."""

    p: np.ndarray
    stderr: np.ndarray
    row_totals: np.ndarray

    @property
    def empty(self) -> np.ndarray:
        return self.row_totals == 0


def estimate_kernel(counts: JointCounts) -> KernelEstimate:
    """Estimate ``P(l|m)`` as row frequencies.

    The standard error of each cell is ``sqrt(p(1-p)/K_m)``. A row backed by a
    single count gets the largest possible binomial error, ``sqrt(1/4)``, on
    every cell, since the plug-in formula would report zero uncertainty.
    """
    c = counts.counts.astype(float)
    totals = counts.counts.sum(axis=1)
    p = np.full(c.shape, np.nan)
    se = np.full(c.shape, np.nan)
    ok = totals > 0
    p[ok] = c[ok] / totals[ok, None]
    se[ok] = np.sqrt(p[ok] * (1.0 - p[ok]) / totals[ok, None])
    se[totals == 1] = 0.5
    return KernelEstimate(p=p, stderr=se, row_totals=totals)


def offset_counts(counts: JointCounts, m: Optional[int] = None) -> np.ndarray:
    """Counts re-indexed by wrapped offset ``l - m``; pooled over ``m`` when omitted."""
    M = counts.M
    out = np.zeros(M, dtype=np.int64)
    rows = range(M) if m is None else [m]
    for r in rows:
        out[wrap_offset(np.arange(M), r, M) + M // 2] += counts.counts[r]
    return out


# -- hypotheses and fitting --------------------------------------------------------------


@dataclass(frozen=True)
class ProfileHypothesis:
    """Candidate LDOS shape: Breit-Wigner width ``Gamma`` or Gaussian std ``s`` (radians)."""

    family: str
    width: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not self.width > 0:
            raise ConfigurationError(f"width must be > 0, got {self.width}")


def discretize_profile(h: ProfileHypothesis, M: int) -> np.ndarray:
    """Profile density sampled at bin centers ``2 pi k / M`` and normalized over offsets."""
    phi = TWO_PI * offsets(M) / M
    if h.family == "breit_wigner":
        w = h.width / (phi**2 + h.width**2 / 4.0)
    else:
        w = np.exp(-(phi**2) / (2.0 * h.width**2))
    return w / w.sum()


def golden_section(f, a: float, b: float, tol: float) -> tuple[float, float]:
    """Minimize a unimodal ``f`` on ``[a, b]`` to interval width ``tol``."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


@dataclass(frozen=True)
class FitResult:
    family: str
    width: float
    log_likelihood: float
    degenerate: bool = False


def _multinomial_ll(data: np.ndarray, probs: np.ndarray) -> float:
    nz = data > 0
    return float(np.sum(data[nz] * np.log(np.maximum(probs[nz], PROB_FLOOR))))


def fit_width(data, family: str = "breit_wigner", grid_points: int = 48) -> FitResult:
    """Maximum-likelihood width of a profile family under the multinomial model.

    Parameters
    ----------
    data : LdosProfile or array_like
        Profile weights or counts in offset order. Weights act as fractional
        counts.
    family : {"breit_wigner", "gaussian"}
    grid_points : int
        Size of the coarse log-width scan that brackets the golden-section
        search, which guards against a multimodal likelihood.

    Returns
    -------
    FitResult
        With ``degenerate=True`` and the lower search bound when fewer than two
        bins are populated.
    """
    if isinstance(data, LdosProfile):
        data = data.weights
    data = np.asarray(data, dtype=float)
    M = data.shape[0]
    lo, hi = math.log(TWO_PI / (10 * M)), math.log(10 * TWO_PI)

    def nll(log_w):
        return -_multinomial_ll(data, discretize_profile(ProfileHypothesis(family, math.exp(log_w)), M))

    if np.count_nonzero(data) < 2:
        return FitResult(family, math.exp(lo), -nll(lo), degenerate=True)
    grid = np.linspace(lo, hi, grid_points)
    values = [nll(g) for g in grid]
    best = int(np.argmin(values))
    a, b = grid[max(best - 1, 0)], grid[min(best + 1, grid_points - 1)]
    x, fx = golden_section(nll, a, b, 1e-7)
    return FitResult(family, math.exp(x), -fx)


def predicted_gamma(sigma: float, rho_e: float) -> float:
    """Golden-rule width ``2 pi sigma**2 rho_E``."""
    if sigma < 0:
        raise ConfigurationError(f"sigma must be >= 0, got {sigma}")
    return TWO_PI * sigma**2 * rho_e


def regime_check(sigma: float, rho_e: float, b: int, c_lo: float = 3.0, c_hi: float = 1.0 / 3.0) -> str:
    """Classify ``sigma * rho_E`` against ``c_lo < sigma rho_E < c_hi sqrt(b)``."""
    x = sigma * rho_e
    if x <= c_lo:
        return "perturbative"
    if x < c_hi * math.sqrt(b):
        return "bw_valid"
    return "saturated"


# -- Chernoff machinery ---------------------------------------------------------------


def _check_distribution(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise PreconditionError(f"{name} is not a normalized probability vector")
    return p


def chernoff_lambda(p1, p2) -> tuple[float, float]:
    """Chernoff coefficient ``min_a sum p1**a p2**(1-a)`` and its minimizer."""
    p1 = _check_distribution(p1, "P1")
    p2 = _check_distribution(p2, "P2")
    if p1.shape != p2.shape:
        raise PreconditionError("distributions have different supports")

    def f(a):
        return float(np.sum(p1**a * p2 ** (1.0 - a)))

    a, fa = golden_section(f, 0.0, 1.0, 1e-8)
    # endpoints evaluate to 1 under 0**0 = 1; the interior minimum is never larger
    lam = min(fa, 1.0)
    return max(lam, 0.0), a


def bhattacharyya(p1, p2) -> float:
    return float(np.sum(np.sqrt(np.asarray(p1) * np.asarray(p2))))


def required_samples(lam: float, epsilon: float) -> float:
    """Samples ``ceil(log eps / log lambda)`` for error probability ``epsilon``.

    Returns 1 when ``lambda == 0`` (a single sample separates the hypotheses)
    and ``math.inf`` when ``lambda == 1`` (indistinguishable).
    """
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if lam <= 0.0:
        return 1
    if lam >= 1.0:
        return math.inf
    # guard ceil against log-ratio round-off, e.g. epsilon == lambda
    return max(1, math.ceil(math.log(epsilon) / math.log(lam) - 1e-9))


# -- decision ---------------------------------------------------------------------


@dataclass(frozen=True)
class TestReport:
    """Outcome of testing ``h1`` against ``h2`` on one count vector."""

    __test__ = False  # not a pytest class

    lambda_: float
    alpha_star: float
    k_required: Optional[int]
    k_used: int
    log_likelihood_ratio: float
    decision: str
    fitted_width: Optional[float]
    predicted_width: Optional[float]
    regime: Optional[str]
    threshold: float
    floored: bool = False

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_,
            "alpha_star": self.alpha_star,
            "k_required": self.k_required,
            "k_used": self.k_used,
            "log_likelihood_ratio": self.log_likelihood_ratio,
            "decision": self.decision,
            "fitted_width": self.fitted_width,
            "predicted_width": self.predicted_width,
            "regime": self.regime,
            "threshold": self.threshold,
            "floored": self.floored,
        }


def log_likelihood_ratio(data, p1, p2) -> tuple[float, bool]:
    """``sum n_x log(P1(x)/P2(x))`` over observed bins, and whether the floor was hit."""
    data = np.asarray(data, dtype=float)
    obs = data > 0
    q1 = np.asarray(p1, dtype=float)[obs]
    q2 = np.asarray(p2, dtype=float)[obs]
    floored = bool(np.any(q1 < PROB_FLOOR) or np.any(q2 < PROB_FLOOR))
    llr = np.sum(data[obs] * (np.log(np.maximum(q1, PROB_FLOOR)) - np.log(np.maximum(q2, PROB_FLOOR))))
    return float(llr), floored


def decide(
    data,
    h1: ProfileHypothesis,
    h2: ProfileHypothesis,
    threshold: float = DEFAULT_THRESHOLD,
    epsilon: float = 0.05,
    predicted_width: Optional[float] = None,
    regime: Optional[str] = None,
) -> TestReport:
    """Likelihood-ratio test between two discretized profiles with equal priors.

    ``data`` are counts per offset. The decision is ``h1`` when the
    log-likelihood ratio exceeds ``threshold``, ``h2`` below ``-threshold`` and
    ``inconclusive`` otherwise.
    """
    data = np.asarray(data, dtype=float)
    M = data.shape[0]
    p1, p2 = discretize_profile(h1, M), discretize_profile(h2, M)
    lam, alpha = chernoff_lambda(p1, p2)
    k_req = required_samples(lam, epsilon)
    llr, floored = log_likelihood_ratio(data, p1, p2)
    if llr > threshold:
        decision = "h1"
    elif llr < -threshold:
        decision = "h2"
    else:
        decision = "inconclusive"
    fitted = None
    if np.count_nonzero(data) >= 2:
        fitted = fit_width(data, h1.family).width
    return TestReport(
        lambda_=lam,
        alpha_star=alpha,
        k_required=None if math.isinf(k_req) else int(k_req),
        k_used=int(round(data.sum())),
        log_likelihood_ratio=llr,
        decision=decision,
        fitted_width=fitted,
        predicted_width=predicted_width,
        regime=regime,
        threshold=threshold,
        floored=floored,
    )


# -- goodness of fit ----------------------------------------------------------------


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p, float) - np.asarray(q, float))))


def chi_square_pvalue(observed, probs, min_expected: float = 5.0) -> float:
    """Pearson chi-square p-value of counts against expected probabilities.

    Cells with zero probability are dropped (an observation there gives
    p = 0); cells expecting fewer than ``min_expected`` counts are pooled.
    """
    observed = np.asarray(observed, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    impossible = probs <= 0
    if np.any(observed[impossible] > 0):
        return 0.0
    observed, probs = observed[~impossible], probs[~impossible]
    expected = probs / probs.sum() * observed.sum()
    small = expected < min_expected
    if np.any(small):
        obs = np.append(observed[~small], observed[small].sum())
        exp = np.append(expected[~small], expected[small].sum())
    else:
        obs, exp = observed, expected
    dof = obs.size - 1
    if dof < 1:
        return 1.0
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return float(sps.chi2.sf(stat, dof))
