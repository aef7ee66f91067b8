"""Experiment configuration, end-to-end pipeline and artifact writers.

A configuration is a JSON document::

    {
      "model":        {"kind": "haar_random", "dimension": 64, "seed": 1},
      "perturbation": {"kind": "gue_kick", "seed": 2},
      "delta": 0.05,
      "circuit":  {"m_bins": 16, "shots": 50000, "seed": 42,
                   "init_mode": "maximally_mixed"},
      "analysis": {"hypotheses": [{"family": "breit_wigner", "width": "predicted"},
                                  {"family": "gaussian", "width": "predicted"}],
                   "epsilon": 0.05},
      "output":   {"directory": "out", "formats": ["csv", "json"]}
    }

Unknown keys are rejected. ``init_mode`` is ``"maximally_mixed"``,
``{"eigenstate_index": j}`` or ``{"pure_state": [[re, im], ...]}``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .circuit import (
    BATCH_SIZE,
    CircuitConfig,
    Eigenstate,
    MaximallyMixed,
    PhaseEstimationCircuit,
    PureState,
)
from .errors import ConfigurationError, LdosError
from .models import MODEL_KINDS, ModelSpec, build_perturbation, build_unitary, make_map_pair
from .oracle import (
    LdosProfile,
    aggregated_ldos,
    conditional,
    kernel_circuit_faithful,
    kernel_ideal_binning,
    ldos_from_joint,
    ldos_from_kernel,
)
from .stats import (
    DEFAULT_THRESHOLD,
    FAMILIES,
    JointCounts,
    ProfileHypothesis,
    decide,
    estimate_kernel,
    fit_width,
    offset_counts,
    predicted_gamma,
    regime_check,
)

__all__ = [
    "AnalysisConfig",
    "OutputConfig",
    "ExperimentConfig",
    "RunManifest",
    "StageError",
    "load_config",
    "parse_config",
    "run_experiment",
    "emit_plotdata",
    "format_float",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_IO",
    "EXIT_STAGE",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_STAGE = 4

_REQUIRED = object()

_MODEL_KEYS = {"kind": _REQUIRED, "dimension": _REQUIRED, "seed": 0, "params": {}}
_SCHEMA: dict[str, Any] = {
    "model": _MODEL_KEYS,
    "perturbation": {"kind": "gue_kick", "dimension": None, "seed": 1, "params": {}},
    "delta": _REQUIRED,
    "circuit": {"m_bins": _REQUIRED, "init_mode": "maximally_mixed", "shots": 0, "seed": 0},
    "analysis": {
        "hypotheses": [
            {"family": "breit_wigner", "width": "predicted"},
            {"family": "gaussian", "width": "predicted"},
        ],
        "epsilon": 0.05,
        "threshold": DEFAULT_THRESHOLD,
        "coupling_threshold": 0.01,
        "mass_fraction": 0.95,
        "c_lo": 3.0,
        "c_hi": 1.0 / 3.0,
    },
    "output": {"directory": "ldos-out", "formats": ["csv", "json"], "save_matrices": False},
}


class StageError(LdosError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class AnalysisConfig:
    hypotheses: list
    epsilon: float = 0.05
    threshold: float = DEFAULT_THRESHOLD
    coupling_threshold: float = 0.01
    mass_fraction: float = 0.95
    c_lo: float = 3.0
    c_hi: float = 1.0 / 3.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "ldos-out"
    formats: tuple = ("csv", "json")
    save_matrices: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    perturbation: ModelSpec
    delta: float
    circuit: CircuitConfig
    analysis: AnalysisConfig
    output: OutputConfig
    document: dict = field(repr=False, default_factory=dict)

    def config_hash(self) -> str:
        canon = json.dumps(self.document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


# -- loading -------------------------------------------------------------------------


def _line_of(text: Optional[str], key: str) -> Optional[int]:
    if not text:
        return None
    pos = text.find(f'"{key}"')
    return None if pos < 0 else text.count("\n", 0, pos) + 1


def _fail(path: str, msg: str, text: Optional[str] = None) -> ConfigurationError:
    line = _line_of(text, path.rsplit(".", 1)[-1])
    where = f" (line {line})" if line else ""
    return ConfigurationError(f"{path}: {msg}{where}")


def _merge(doc: Any, schema: dict, path: str, text: Optional[str]) -> dict:
    if not isinstance(doc, dict):
        raise _fail(path or "<root>", "expected an object", text)
    for key in doc:
        if key not in schema:
            raise _fail(f"{path}.{key}" if path else key, "unknown key", text)
    out = {}
    for key, default in schema.items():
        sub = f"{path}.{key}" if path else key
        if key in doc:
            value = doc[key]
            if isinstance(default, dict) and key != "params":
                value = _merge(value, default, sub, text)
            out[key] = value
        elif default is _REQUIRED:
            raise _fail(sub, "required key missing", text)
        elif isinstance(default, dict) and key != "params":
            out[key] = _merge({}, default, sub, text)
        else:
            out[key] = copy.deepcopy(default)
    return out


def _number(doc: dict, key: str, path: str, text, kind=float, lo=None, hi=None, lo_open=False, hi_open=False):
    value = doc[key]
    sub = f"{path}.{key}" if path else key
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(sub, f"expected a number, got {value!r}", text)
    if kind is int and int(value) != value:
        raise _fail(sub, f"expected an integer, got {value!r}", text)
    value = kind(value)
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise _fail(sub, f"must be {'>' if lo_open else '>='} {lo}, got {value}", text)
    if hi is not None and (value > hi or (hi_open and value == hi)):
        raise _fail(sub, f"must be {'<' if hi_open else '<='} {hi}, got {value}", text)
    return value


def _model_spec(doc: dict, path: str, text, dimension=None) -> ModelSpec:
    if doc["kind"] not in MODEL_KINDS:
        raise _fail(f"{path}.kind", f"must be one of {MODEL_KINDS}, got {doc['kind']!r}", text)
    if doc["dimension"] is None:
        doc["dimension"] = dimension
    dim = _number(doc, "dimension", path, text, int, lo=2)
    if dimension is not None and dim != dimension:
        raise _fail(f"{path}.dimension", f"must equal model.dimension ({dimension})", text)
    seed = _number(doc, "seed", path, text, int, lo=0)
    if not isinstance(doc["params"], dict):
        raise _fail(f"{path}.params", "expected an object", text)
    return ModelSpec(doc["kind"], dim, seed, dict(doc["params"]))


def _init_mode(value, text):
    path = "circuit.init_mode"
    if value == "maximally_mixed":
        return MaximallyMixed()
    if isinstance(value, dict) and len(value) == 1:
        if "eigenstate_index" in value:
            return Eigenstate(_number(value, "eigenstate_index", path, text, int, lo=0))
        if "pure_state" in value:
            amps = np.asarray(value["pure_state"], dtype=float)
            if amps.ndim == 2 and amps.shape[1] == 2:
                amps = amps[:, 0] + 1j * amps[:, 1]
            if amps.ndim != 1:
                raise _fail(path, "pure_state must be a list of numbers or [re, im] pairs", text)
            return PureState(amps)
    raise _fail(path, f"unrecognized init mode {value!r}", text)


def parse_config(doc: dict, text: Optional[str] = None) -> ExperimentConfig:
    """Validate a configuration document and apply defaults."""
    merged = _merge(doc, _SCHEMA, "", text)
    model = _model_spec(merged["model"], "model", text)
    pert = _model_spec(merged["perturbation"], "perturbation", text, model.dimension)
    delta = _number(merged, "delta", "", text, float, lo=0.0)
    c = merged["circuit"]
    m_bins = _number(c, "m_bins", "circuit", text, int, lo=2)
    if m_bins & (m_bins - 1):
        raise _fail("circuit.m_bins", f"must be a power of two, got {m_bins}", text)
    init = _init_mode(c["init_mode"], text)
    if isinstance(init, Eigenstate) and init.index >= model.dimension:
        raise _fail("circuit.init_mode", f"eigenstate_index must be < {model.dimension}", text)
    if isinstance(init, PureState) and init.amplitudes.shape != (model.dimension,):
        raise _fail("circuit.init_mode", f"pure_state must have {model.dimension} amplitudes", text)
    circuit = CircuitConfig(
        m_bins=m_bins,
        init_mode=init,
        shots=_number(c, "shots", "circuit", text, int, lo=0),
        seed=_number(c, "seed", "circuit", text, int, lo=0),
    )
    a = merged["analysis"]
    if not isinstance(a["hypotheses"], list):
        raise _fail("analysis.hypotheses", "expected a list", text)
    for i, h in enumerate(a["hypotheses"]):
        sub = f"analysis.hypotheses[{i}]"
        if not isinstance(h, dict) or set(h) != {"family", "width"}:
            raise _fail(sub, "expected {family, width}", text)
        if h["family"] not in FAMILIES:
            raise _fail(f"{sub}.family", f"must be one of {FAMILIES}", text)
        if h["width"] != "predicted":
            _number(h, "width", sub, text, float, lo=0.0, lo_open=True)
    analysis = AnalysisConfig(
        hypotheses=[dict(h) for h in a["hypotheses"]],
        epsilon=_number(a, "epsilon", "analysis", text, float, lo=0.0, hi=1.0, lo_open=True, hi_open=True),
        threshold=_number(a, "threshold", "analysis", text, float, lo=0.0),
        coupling_threshold=_number(a, "coupling_threshold", "analysis", text, float, 0.0, 1.0, True, True),
        mass_fraction=_number(a, "mass_fraction", "analysis", text, float, 0.0, 1.0, True, True),
        c_lo=_number(a, "c_lo", "analysis", text, float, lo=0.0),
        c_hi=_number(a, "c_hi", "analysis", text, float, lo=0.0, lo_open=True),
    )
    o = merged["output"]
    formats = o["formats"]
    if not isinstance(formats, list) or not formats or not set(formats) <= {"csv", "json"}:
        raise _fail("output.formats", "must be a non-empty subset of ['csv', 'json']", text)
    if not isinstance(o["directory"], str):
        raise _fail("output.directory", "expected a string", text)
    output = OutputConfig(o["directory"], tuple(f for f in ("csv", "json") if f in formats),
                          bool(o["save_matrices"]))
    return ExperimentConfig(model, pert, delta, circuit, analysis, output, document=merged)


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON configuration file.

    Raises
    ------
    ConfigurationError
        On a parse error (with line and column) or a validation error (with
        the dotted field path and, where found, the line).
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(doc, text)


# -- output -------------------------------------------------------------------------


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def _rows(obj, stderr=None):
    if isinstance(obj, LdosProfile):
        header = ("offset", "phi", "weight")
        rows = [(int(k), float(p), float(w)) for k, p, w in zip(obj.offsets, obj.phi, obj.weights)]
        return header, rows
    if isinstance(obj, JointCounts):
        M = obj.M
        return ("m", "l", "count"), [(m, l, int(obj.counts[m, l])) for m in range(M) for l in range(M)]
    kernel = np.asarray(obj, dtype=float)
    se = np.zeros_like(kernel) if stderr is None else np.asarray(stderr, dtype=float)
    M = kernel.shape[0]
    rows = [
        (m, l, float(kernel[m, l]), float(se[m, l]))
        for m in range(M)
        if not np.any(np.isnan(kernel[m]))
        for l in range(M)
    ]
    return ("m", "l", "p", "stderr"), rows


def emit_plotdata(obj, path, fmt: str = "csv", stderr=None) -> Path:
    """Write a profile, conditional kernel or count matrix as CSV or JSON.

    CSV headers are ``offset,phi,weight`` (profiles), ``m,l,p,stderr``
    (kernels; rows of empty bands are skipped) and ``m,l,count`` (counts).
    The JSON form maps each column name to its list of values.
    """
    header, rows = _rows(obj, stderr)
    path = Path(path)
    if fmt == "csv":
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(format_float(v) if isinstance(v, float) else str(v) for v in row))
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        doc = {name: [row[i] for row in rows] for i, name in enumerate(header)}
        if isinstance(obj, LdosProfile):
            doc = {"anchor": obj.anchor, "M": obj.M, **doc}
        text = json.dumps(doc, indent=1) + "\n"
    else:
        raise ConfigurationError(f"unknown format {fmt!r}")
    path.write_text(text)
    return path


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _dump_json(doc, path: Path) -> Path:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


# -- pipeline -----------------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    status: str = "running"
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    timings: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "timings_seconds": self.timings,
            "derived": self.derived,
            "seeds": self.seeds,
            "artifacts": self.artifacts,
        }


def _hypothesis(template: dict, gamma: float) -> Optional[ProfileHypothesis]:
    width = template["width"]
    if width == "predicted":
        if gamma <= 0:
            return None
        # a Gaussian matched to the predicted Breit-Wigner full width at half maximum
        width = gamma if template["family"] == "breit_wigner" else gamma / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return ProfileHypothesis(template["family"], float(width))


class _Stages:
    def __init__(self, manifest: RunManifest):
        self.manifest = manifest
        self.name = None

    def __call__(self, name: str):
        self.name = name
        return self

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.manifest.timings[self.name] = time.perf_counter() - self.start
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def run_experiment(
    cfg: ExperimentConfig,
    out_dir=None,
    threads: int = 1,
    shots: Optional[int] = None,
) -> RunManifest:
    """Build the models, sample the circuit, evaluate the oracles and write artifacts.

    ``shots`` overrides ``cfg.circuit.shots`` (``0`` gives an oracle-only run).
    All data files are written after every computation has finished; if any
    stage fails the files written so far are removed, ``manifest.json``
    records the failing stage and :class:`StageError` is raised.
    """
    out = Path(out_dir if out_dir is not None else cfg.output.directory)
    K = cfg.circuit.shots if shots is None else shots
    M = cfg.circuit.m_bins
    manifest = RunManifest(config_hash=cfg.config_hash(), tool_version=__version__)
    manifest.seeds = {
        "model": cfg.model.seed,
        "perturbation": cfg.perturbation.seed,
        "circuit": cfg.circuit.seed,
        "shots": K,
        "shot_streams": -(-K // BATCH_SIZE),
        "shots_per_stream": BATCH_SIZE,
    }
    stage = _Stages(manifest)
    written: list[Path] = []
    try:
        with stage("build_models"):
            u = build_unitary(cfg.model)
            v = build_perturbation(cfg.perturbation)
            pair = make_map_pair(u, v, cfg.delta, cfg.analysis.coupling_threshold, cfg.analysis.mass_fraction)
            gamma = predicted_gamma(pair.sigma, pair.level_density)
            regime = regime_check(pair.sigma, pair.level_density, pair.bandwidth,
                                  cfg.analysis.c_lo, cfg.analysis.c_hi)
            manifest.derived = {
                "dimension": pair.dimension,
                "m_bins": M,
                "delta": pair.delta,
                "sigma": pair.sigma,
                "bandwidth": pair.bandwidth,
                "level_density": pair.level_density,
                "predicted_gamma": gamma,
                "regime": regime,
            }
        counts = None
        if K > 0:
            with stage("sampling"):
                circuit = PhaseEstimationCircuit(pair, cfg.circuit)
                m, l = circuit.sample(K, threads=threads)
                counts = JointCounts.from_arrays(m, l, M)
        with stage("oracle"):
            init = cfg.circuit.init_mode
            ideal = kernel_ideal_binning(pair, M, init)
            faithful_joint = kernel_circuit_faithful(pair, M, init)
            faithful = conditional(faithful_joint)
            profiles = {
                f"profile_ideal_m{m:02d}": ldos_from_kernel(ideal, m)
                for m in range(M)
                if not np.any(np.isnan(ideal[m]))
            }
            if isinstance(init, MaximallyMixed):
                profiles["profile_ideal_aggregated"] = aggregated_ldos(pair, M)
            profiles["profile_faithful_aggregated"] = ldos_from_joint(faithful_joint)
        with stage("analysis"):
            report: dict[str, Any] = {"predicted_gamma": gamma, "regime": regime, "fits": {}, "tests": []}
            fit_sources = {"faithful": profiles["profile_faithful_aggregated"]}
            if "profile_ideal_aggregated" in profiles:
                fit_sources["ideal"] = profiles["profile_ideal_aggregated"]
            estimate = None
            data = None
            if counts is not None:
                estimate = estimate_kernel(counts)
                data = offset_counts(counts)
                profiles["profile_sampled_aggregated"] = LdosProfile(data / data.sum(), "aggregated")
                for m in range(M):
                    if estimate.row_totals[m] > 0:
                        profiles[f"profile_sampled_m{m:02d}"] = ldos_from_kernel(estimate.p, m)
                fit_sources["sampled"] = data
            for source, values in sorted(fit_sources.items()):
                for family in FAMILIES:
                    fit = fit_width(values, family)
                    report["fits"][f"{source}/{family}"] = {
                        "width": fit.width,
                        "log_likelihood": fit.log_likelihood,
                        "degenerate": fit.degenerate,
                    }
            hyps = [_hypothesis(t, gamma) for t in cfg.analysis.hypotheses]
            for i in range(1, len(hyps)):
                entry: dict[str, Any] = {"h1": cfg.analysis.hypotheses[0], "h2": cfg.analysis.hypotheses[i]}
                if hyps[0] is None or hyps[i] is None:
                    entry["skipped"] = "predicted width is zero"
                else:
                    test_data = data if data is not None else np.zeros(M)
                    entry["h1_width"] = hyps[0].width
                    entry["h2_width"] = hyps[i].width
                    entry["report"] = decide(
                        test_data, hyps[0], hyps[i], cfg.analysis.threshold, cfg.analysis.epsilon,
                        predicted_width=gamma, regime=regime,
                    ).to_dict()
                report["tests"].append(entry)
        with stage("write"):
            out.mkdir(parents=True, exist_ok=True)
            tables: list[tuple[str, Any, Any]] = []
            if counts is not None:
                tables.append(("counts", counts, None))
                tables.append(("kernel_estimate", estimate.p, estimate.stderr))
            tables.append(("kernel_ideal", ideal, None))
            tables.append(("kernel_faithful", faithful, None))
            tables.extend((name, prof, None) for name, prof in sorted(profiles.items()))
            for name, obj, se in tables:
                for fmt in cfg.output.formats:
                    path = out / f"{name}.{fmt}"
                    written.append(path)
                    emit_plotdata(obj, path, fmt, stderr=se)
            written.append(out / "report.json")
            _dump_json(report, out / "report.json")
            if cfg.output.save_matrices:
                for name, arr in (("u", pair.u), ("v", pair.v), ("u_perturbed", pair.u_perturbed)):
                    written.append(out / f"{name}.npy")
                    np.save(out / f"{name}.npy", arr)
    except StageError as exc:
        for path in written:
            if path.exists():
                path.unlink()
        manifest.status = "failed"
        manifest.failed_stage = exc.stage
        manifest.error = str(exc.cause)
        manifest.artifacts = []
        try:
            out.mkdir(parents=True, exist_ok=True)
            _dump_json(manifest.to_dict(), out / "manifest.json")
        except OSError:
            pass
        raise
    manifest.status = "ok"
    manifest.artifacts = sorted(os.path.basename(p) for p in written)
    _dump_json(manifest.to_dict(), out / "manifest.json")
    return manifest
