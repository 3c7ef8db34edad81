"""Experiment harness: JSON configs, subcommands, seeded runs, CSV/JSON output.

Subcommands: ``learn`` (run the full subset learner), ``partition`` (emit the
cells at one cap), ``select`` (reduce a learned subset to one parameter),
``evaluate`` (empirical loss CDF at one parameter).  Every output file is
schema-stable and byte-identical across reruns with the same config and
seed; timing is reported on stdout only.

Exit codes: 0 success, 1 config or usage error, 2 runtime failure.  The
``FRUGAL_LOG`` environment variable (error, info, debug) controls stderr
logging.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bnb import BnbProblem, load_milp
from .clustering import ClusteringProblem, load_instance
from .core import ConfigProblem, ParamPoint
from .learner import (
    LearnerConfig,
    LearnerError,
    estimate_capped_tail_means,
    learn_subset,
    measure_loss,
)
from .synthetic import SyntheticFamily, SyntheticProblem

__all__ = ["main", "entry", "UsageError", "RunConfig", "load_config"]

log = logging.getLogger("frugal")

_FAMILY_KEYS = {"a": "a", "b": "b", "L_mid": "loss_mid", "L_low": "loss_low", "L_high": "loss_high"}


class UsageError(Exception):
    """Bad command line or config; maps to exit code 1."""


@dataclass
class RunConfig:
    domain: str
    epsilon: float
    delta: float
    zeta: float
    seed: int
    max_rounds: int
    max_samples_per_round: int
    out: Path
    family: SyntheticFamily | None = None
    instances_dir: Path | None = None

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(
            epsilon=self.epsilon,
            delta=self.delta,
            zeta=self.zeta,
            seed=self.seed,
            max_rounds=self.max_rounds,
            max_samples_per_round=self.max_samples_per_round,
        )


def load_config(path: str | Path, seed_override=None, out_override=None) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    domain = raw.get("domain")
    if domain not in ("synthetic", "bnb", "clustering"):
        raise UsageError("config 'domain' must be synthetic, bnb, or clustering")
    family = None
    instances_dir = None
    if domain == "synthetic":
        spec = raw.get("family", {})
        kwargs = {dest: spec[key] for key, dest in _FAMILY_KEYS.items() if key in spec}
        try:
            family = SyntheticFamily(**kwargs)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad family spec: {exc}") from exc
    else:
        if "instances_dir" not in raw:
            raise UsageError(f"domain {domain} needs 'instances_dir'")
        instances_dir = Path(raw["instances_dir"])
        if not instances_dir.is_dir():
            raise UsageError(f"instances_dir {instances_dir} is not a directory")
    try:
        cfg = RunConfig(
            domain=domain,
            epsilon=float(raw.get("epsilon", 15.0)),
            delta=float(raw.get("delta", 0.25)),
            zeta=float(raw.get("zeta", 0.05)),
            seed=int(raw.get("seed", 0)) if seed_override is None else int(seed_override),
            max_rounds=int(raw.get("max_rounds", 40)),
            max_samples_per_round=int(raw.get("max_samples_per_round", 2_000_000)),
            out=Path(out_override if out_override is not None else raw.get("out", "frugal_out")),
            family=family,
            instances_dir=instances_dir,
        )
        cfg.learner_config()  # validate ranges eagerly
    except ValueError as exc:
        raise UsageError(f"bad config value: {exc}") from exc
    return cfg


def build_problem(cfg: RunConfig, threads: int = 1) -> ConfigProblem:
    if cfg.domain == "synthetic":
        return SyntheticProblem(cfg.family)
    files = sorted(p for p in cfg.instances_dir.iterdir() if p.is_file())
    if not files:
        raise UsageError(f"no instance files in {cfg.instances_dir}")
    try:
        if cfg.domain == "bnb":
            return BnbProblem([load_milp(p) for p in files], threads=threads)
        return ClusteringProblem([load_instance(p) for p in files], threads=threads)
    except ValueError as exc:
        raise UsageError(f"bad instance file: {exc}") from exc


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _subset_payload(cfg: RunConfig, result) -> dict:
    return {
        "domain": cfg.domain,
        "epsilon": cfg.epsilon,
        "delta": cfg.delta,
        "zeta": cfg.zeta,
        "seed": cfg.seed,
        "terminal_round": result.terminal_round,
        "threshold": result.threshold,
        "parameters": [
            {
                "rho": float(point.scalar),
                "intervals": [[float(lo), float(hi)] for lo, hi in region.cell.intervals],
                "round": region.round_added,
                "tau_cell": region.tau_cell,
                "estimate": region.capped_estimate,
                "z": region.z,
            }
            for point, region in zip(result.parameters, result.regions)
        ],
    }


def cmd_learn(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    problem = build_problem(cfg, args.threads)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    result = learn_subset(problem, cfg.learner_config())
    elapsed = time.perf_counter() - started
    _write_csv(
        out / "trace.csv",
        ["t", "cap", "samples", "cells", "admitted", "T"],
        [
            [r.round_index, r.cap, r.samples, r.cells, r.admitted, r.threshold]
            for r in result.trace
        ],
    )
    _write_json(out / "subset.json", _subset_payload(cfg, result))
    _write_json(
        out / "report.json",
        {
            "config": {
                "domain": cfg.domain,
                "epsilon": cfg.epsilon,
                "delta": cfg.delta,
                "zeta": cfg.zeta,
                "seed": cfg.seed,
                "max_rounds": cfg.max_rounds,
                "max_samples_per_round": cfg.max_samples_per_round,
            },
            "counters": {
                "instance_draws": result.instance_draws,
                "loss_evaluations": result.loss_evaluations,
            },
            "terminal_round": result.terminal_round,
            "threshold": result.threshold,
            "trace_rows": len(result.trace),
            "subset_size": len(result.parameters),
        },
    )
    print(
        f"learned {len(result.parameters)} parameters in {result.terminal_round} rounds "
        f"(threshold {result.threshold}, {result.instance_draws} draws, {elapsed:.2f}s) -> {out}"
    )
    return 0


def cmd_partition(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    if args.tau is None or args.tau < 1:
        raise UsageError("partition needs --tau >= 1")
    problem = build_problem(cfg, args.threads)
    if cfg.domain == "synthetic":
        if args.samples < 1:
            raise UsageError("--samples must be positive")
        rng = np.random.default_rng(cfg.seed)
        instances = problem.sample_many(rng, args.samples)
    else:
        instances = problem.all_instances()
    cells = problem.get_partition(instances, args.tau)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for index, cell in enumerate(cells):
        if len(cell.cell.intervals) != 1:
            raise RuntimeError("expected single-interval cells from shipped domains")
        lo, hi = cell.cell.intervals[0]
        losses = ";".join(str(int(v)) for v in cell.capped_losses)
        rows.append([index, float(lo), float(hi), cell.z, losses])
    _write_csv(out / "cells.csv", ["cell", "lo", "hi", "z", "capped_losses"], rows)
    print(f"{len(cells)} cells at cap {args.tau} over {len(instances)} instances -> {out / 'cells.csv'}")
    return 0


def cmd_select(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    subset_path = Path(args.subset) if args.subset else cfg.out / "subset.json"
    try:
        subset = json.loads(subset_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read subset {subset_path}: {exc}") from exc
    entries = subset.get("parameters", [])
    if not entries:
        log.error("subset %s is empty", subset_path)
        print("error: empty subset", file=sys.stderr)
        return 2
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    problem = build_problem(cfg, args.threads)
    candidates = [ParamPoint((entry["rho"],)) for entry in entries]
    eps_prime = math.sqrt(1.0 + cfg.epsilon) - 1.0
    delta_prime = cfg.delta / 2.0
    ceiling = args.ceiling
    if ceiling is None:
        terminal = subset.get("terminal_round")
        ceiling = 2 ** (int(terminal) + 4) if terminal is not None else 2**20
    rng = np.random.default_rng(cfg.seed)
    estimates = estimate_capped_tail_means(
        problem, candidates, delta_prime, args.samples, rng, ceiling
    )
    best = min(range(len(candidates)), key=lambda i: (estimates[i], i))
    chosen = candidates[best]
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "selected.json",
        {
            "rho": float(chosen.scalar),
            "estimate": estimates[best],
            "candidate_index": best,
            "eps_prime": eps_prime,
            "delta_prime": delta_prime,
            "n_samples": args.samples,
            "cap_ceiling": ceiling,
        },
    )
    print(f"selected rho={float(chosen.scalar)} estimate={estimates[best]}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    if args.rho is None or not 0.0 <= args.rho <= 1.0:
        raise UsageError("evaluate needs --rho in [0, 1]")
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    problem = build_problem(cfg, args.threads)
    rng = np.random.default_rng(cfg.seed)
    ceiling = args.ceiling if args.ceiling is not None else 2**20
    losses = np.empty(args.samples, dtype=np.int64)
    for i in range(args.samples):
        instance = problem.sample(rng)
        losses[i] = measure_loss(problem, args.rho, instance, ceiling)
    values, counts = np.unique(losses, return_counts=True)
    fractions = np.cumsum(counts) / args.samples
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "cdf.csv",
        ["tau", "fraction_le"],
        [[int(v), float(f)] for v, f in zip(values, fractions)],
    )
    print(f"{args.samples} losses at rho={args.rho} -> {out / 'cdf.csv'}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="frugal", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run config")
    common.add_argument("--seed", type=int, default=None, help="override config seed")
    common.add_argument("--out", default=None, help="override output directory")
    common.add_argument("--threads", type=int, default=1, help="oracle evaluation pool size")
    sub = parser.add_subparsers(dest="command", required=True)
    p_learn = sub.add_parser("learn", parents=[common], help="learn a parameter subset")
    p_learn.set_defaults(func=cmd_learn)
    p_part = sub.add_parser("partition", parents=[common], help="emit cells at one cap")
    p_part.add_argument("--tau", type=int, default=None, help="loss cap")
    p_part.add_argument("--samples", type=int, default=32, help="instances to draw (synthetic)")
    p_part.set_defaults(func=cmd_partition)
    p_sel = sub.add_parser("select", parents=[common], help="pick one parameter from a subset")
    p_sel.add_argument("--subset", default=None, help="subset.json path (default <out>/subset.json)")
    p_sel.add_argument("--samples", type=int, default=2000, help="instances per candidate")
    p_sel.add_argument("--ceiling", type=int, default=None, help="doubling-cap ceiling")
    p_sel.set_defaults(func=cmd_select)
    p_eval = sub.add_parser("evaluate", parents=[common], help="empirical loss CDF at one rho")
    p_eval.add_argument("--rho", type=float, default=None, help="parameter to evaluate")
    p_eval.add_argument("--samples", type=int, default=2000, help="number of instances")
    p_eval.add_argument("--ceiling", type=int, default=None, help="doubling-cap ceiling")
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("FRUGAL_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LearnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
