"""Command-line entry point ``ldos``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

import numpy as np

from .errors import ConfigurationError, LdosError
from .runner import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_STAGE, StageError, load_config, run_experiment
from .stats import bhattacharyya, chernoff_lambda, fit_width, required_samples

FAMILY_ALIASES = {"bw": "breit_wigner", "gauss": "gaussian"}


def _read_profile(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "offset" not in rows[0] or "weight" not in rows[0]:
        raise ConfigurationError(f"{path}: expected a profile CSV with offset,phi,weight columns")
    rows.sort(key=lambda r: int(r["offset"]))
    return np.array([float(r["weight"]) for r in rows])


def _run(args, shots=None) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, circuit=dataclasses.replace(cfg.circuit, seed=args.seed))
    manifest = run_experiment(cfg, out_dir=args.out_dir, threads=args.threads, shots=shots)
    print(json.dumps({"status": manifest.status, "derived": manifest.derived}, indent=2))
    return EXIT_OK


def _fit(args) -> int:
    weights = _read_profile(args.profile)
    fit = fit_width(weights, FAMILY_ALIASES[args.family])
    print(json.dumps(dataclasses.asdict(fit), indent=2))
    return EXIT_OK


def _chernoff(args) -> int:
    p1, p2 = _read_profile(args.p1), _read_profile(args.p2)
    p1, p2 = p1 / p1.sum(), p2 / p2.sum()
    lam, alpha = chernoff_lambda(p1, p2)
    k = required_samples(lam, args.epsilon)
    print(json.dumps({
        "lambda": lam,
        "alpha_star": alpha,
        "bhattacharyya": bhattacharyya(p1, p2),
        "epsilon": args.epsilon,
        "k_required": None if k == float("inf") else int(k),
    }, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldos", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "sample the circuit and evaluate the oracles"),
                            ("oracle", "oracle-only run (zero shots)")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")
        p.add_argument("--seed", type=int, default=None, help="override circuit.seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out-dir", default=None, help="override output.directory")
    p = sub.add_parser("fit", help="maximum-likelihood width of a profile CSV")
    p.add_argument("profile")
    p.add_argument("--family", choices=sorted(FAMILY_ALIASES), default="bw")
    p = sub.add_parser("chernoff", help="Chernoff coefficient between two profile CSVs")
    p.add_argument("p1")
    p.add_argument("p2")
    p.add_argument("--epsilon", type=float, default=0.05)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "oracle":
            return _run(args, shots=0)
        if args.command == "fit":
            return _fit(args)
        return _chernoff(args)
    except StageError as exc:
        print(f"ldos: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc.cause, OSError) else EXIT_STAGE
    except (ConfigurationError, LdosError) as exc:
        print(f"ldos: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"ldos: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
