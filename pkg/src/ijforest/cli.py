"""Command-line entry point: ``ijforest {train,predict,simulate,experiment,report}``.

Exit codes: 0 success, 1 invalid flags or incompatible inputs, 2 failure
while running. Every command writes one JSON manifest next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import math
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .data import DataError, format_real, load_csv, read_table, save_csv
from .experiment import ExperimentConfig, read_results, run_experiment, sha256_file
from .forest import ForestConfig, default_mtry, default_tree_count, fit_forest, load_forest, save_forest
from .ij_variance import BIAS_CORRECTIONS, predict_with_variance
from .report import write_figure_tables
from .resampling import default_subsample_size
from .simgen import SPEC_NAMES, WIDE_SD, SimulationSpec, gen_dataset

log = logging.getLogger("ijforest")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

PRESETS = {
    "desk": dict(specs=SPEC_NAMES, n_values=(200,), mtry_levels=(1, 2, 3),
                 tree_types=("cart", "ci"), resample_modes=("bootstrap", "subsample"),
                 R=25, K=25, master_seed=2017),
    "paper": dict(specs=SPEC_NAMES, n_values=(200, 1000, 5000), mtry_levels=(1, 2, 3),
                  tree_types=("cart", "ci"), resample_modes=("bootstrap", "subsample"),
                  R=100, K=100, master_seed=2017),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(path: Path, command: str, config: dict, seed, started: str,
                   outputs: Sequence[Path], extra: Optional[dict] = None) -> Path:
    doc = {
        "command": command,
        "config": config,
        "seed": seed,
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    return path


def _positive(name: str, minimum: int = 1):
    def conv(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer, got {text!r}") from None
        if v < minimum:
            raise argparse.ArgumentTypeError(f"{name} must be >= {minimum}, got {v}")
        return v
    return conv


def _unit_interval(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--alpha must be a number, got {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"--alpha must lie in (0, 1), got {v}")
    return v


def _positive_real(name: str):
    def conv(text: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not (math.isfinite(v) and v > 0):
            raise argparse.ArgumentTypeError(f"{name} must be positive, got {text!r}")
        return v
    return conv


def _csv_list(conv, choices=None, name=""):
    def parse(text: str):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError(f"{name} needs at least one value")
        out = []
        for t in items:
            try:
                v = conv(t)
            except ValueError:
                raise argparse.ArgumentTypeError(f"{name}: bad value {t!r}") from None
            if choices is not None and v not in choices:
                raise argparse.ArgumentTypeError(
                    f"{name}: {t!r} is not one of {', '.join(map(str, choices))}")
            out.append(v)
        return tuple(out)
    return parse


def _threads_arg(p):
    p.add_argument("--threads", type=_positive("--threads"), default=os.cpu_count() or 1,
                   help="worker threads for tree fitting (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ijforest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a forest to a CSV dataset")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--response", required=True)
    p.add_argument("--tree-type", required=True, choices=("cart", "ci"))
    p.add_argument("--resample", required=True, choices=("bootstrap", "subsample"))
    p.add_argument("--mtry", type=_positive("--mtry"))
    p.add_argument("--b", dest="B", type=_positive("--b"), help="number of trees (default 5n)")
    p.add_argument("--s", type=_positive("--s"), help="subsample size (default round(n^0.7))")
    p.add_argument("--min-node-size", type=_positive("--min-node-size"), default=5)
    p.add_argument("--alpha", type=_unit_interval, default=0.05)
    p.add_argument("--seed", type=_positive("--seed", 0), default=0)
    p.add_argument("--out", type=Path, default=Path("forest.json"))
    _threads_arg(p)

    p = sub.add_parser("predict", help="predictions with IJ variance for each CSV row")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--bias-correction", choices=BIAS_CORRECTIONS,
                   help="default: bootstrap for bootstrap forests, eq5 for subsampled ones")
    p.add_argument("--floor-variance", action="store_true", help="clip corrected variance at 0")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--n", required=True, type=_positive("--n", 2))
    p.add_argument("--seed", required=True, type=_positive("--seed", 0))
    p.add_argument("--wide-sd", type=_positive_real("--wide-sd"), default=WIDE_SD,
                   help="standard deviation of x6..x10 (default sqrt(5))")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("experiment", help="run the simulation study")
    p.add_argument("--preset", choices=tuple(PRESETS))
    p.add_argument("--specs", type=_csv_list(str, SPEC_NAMES, "--specs"))
    p.add_argument("--n", dest="n_values", type=_csv_list(int, None, "--n"))
    p.add_argument("--mtry-levels", type=_csv_list(int, (1, 2, 3), "--mtry-levels"))
    p.add_argument("--tree-types", type=_csv_list(str, ("cart", "ci"), "--tree-types"))
    p.add_argument("--resample-modes", type=_csv_list(str, ("bootstrap", "subsample"), "--resample-modes"))
    p.add_argument("--replicates", dest="R", type=_positive("--replicates", 2))
    p.add_argument("--test-points", dest="K", type=_positive("--test-points"))
    p.add_argument("--seed", dest="master_seed", type=_positive("--seed", 0))
    p.add_argument("--b", dest="B_override", type=_positive("--b", 2))
    p.add_argument("--s", dest="s_override", type=_positive("--s"))
    p.add_argument("--min-node-size", type=_positive("--min-node-size"))
    p.add_argument("--alpha", type=_unit_interval)
    p.add_argument("--bias-correction", choices=BIAS_CORRECTIONS)
    p.add_argument("--floor-variance", action="store_true", default=None)
    p.add_argument("--zero-variance", dest="zero_variance_points", choices=("exclude", "error"),
                   help="test points with zero empirical variance and all-zero estimates: "
                        "drop them from MAPB (default) or fail the cell")
    p.add_argument("--wide-sd", dest="wide_sd", type=_positive_real("--wide-sd"),
                   help="standard deviation of x6..x10 (default sqrt(5))")
    p.add_argument("--out", type=Path)
    p.add_argument("--resume", type=Path, help="checkpoint.json of an interrupted run")
    p.add_argument("--stop-after", type=_positive("--stop-after"), help=argparse.SUPPRESS)
    _threads_arg(p)

    p = sub.add_parser("report", help="per-sample-size MAPB plot data from results.csv")
    p.add_argument("--results", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    return parser


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def cmd_train(args) -> int:
    started = _now()
    if args.s is not None and args.resample != "subsample":
        raise UsageError("--s only applies with --resample subsample")
    try:
        data = load_csv(args.data, args.response)
    except (OSError, DataError) as exc:
        raise UsageError(str(exc)) from None
    cfg = ForestConfig(
        tree_type=args.tree_type, resample=args.resample,
        B=args.B or default_tree_count(data.n),
        s=(args.s or default_subsample_size(data.n)) if args.resample == "subsample" else None,
        mtry=args.mtry or default_mtry(data.p, 1), min_node_size=args.min_node_size,
        alpha=args.alpha, seed=args.seed,
    )
    try:
        cfg = cfg.validate(data.n, data.p)
    except ValueError as exc:
        flag = {"mtry": "--mtry", "subsample size": "--s"}
        hint = next((f for k, f in flag.items() if k in str(exc)), None)
        raise UsageError(f"{hint}: {exc}" if hint else str(exc)) from None
    forest = fit_forest(data, cfg, threads=args.threads)
    save_forest(forest, args.out)
    write_manifest(_manifest_path(args.out), "train", asdict(cfg), cfg.seed, started, [args.out],
                   {"data": str(args.data), "data_sha256": sha256_file(args.data), "n": data.n, "p": data.p})
    log.info("wrote %s (%d trees)", args.out, forest.B)
    return EXIT_OK


def _prediction_matrix(forest, path: Path) -> np.ndarray:
    header, table = read_table(path)
    names = forest.column_names
    if names and all(c in header for c in names):
        return table[:, [header.index(c) for c in names]]
    if names:
        missing = [c for c in names if c not in header]
        raise UsageError(f"{path}: missing model columns {missing}")
    if table.shape[1] != forest.p:
        raise UsageError(f"{path}: {table.shape[1]} columns but the model expects {forest.p}")
    return table


def cmd_predict(args) -> int:
    started = _now()
    try:
        forest = load_forest(args.model)
        X = _prediction_matrix(forest, args.data)
    except (OSError, DataError, ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    batch = predict_with_variance(forest, X, args.bias_correction, args.floor_variance)
    with args.out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "prediction", "variance_raw", "variance_correction", "variance_corrected"])
        for i in range(len(batch)):
            w.writerow([i, format_real(batch.prediction[i]), format_real(batch.raw[i]),
                        format_real(batch.correction[i]), format_real(batch.corrected[i])])
    cfg = {"model": str(args.model), "data": str(args.data),
           "bias_correction": args.bias_correction, "floor_variance": args.floor_variance}
    write_manifest(_manifest_path(args.out), "predict", cfg, forest.config.seed, started, [args.out],
                   {"model_sha256": sha256_file(args.model), "data_sha256": sha256_file(args.data)})
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = _now()
    try:
        spec = SimulationSpec(args.spec, args.n, args.seed, args.wide_sd)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_csv(gen_dataset(spec), args.out)
    write_manifest(_manifest_path(args.out), "simulate", asdict(spec), spec.seed, started, [args.out])
    return EXIT_OK


def _experiment_config(args) -> tuple[ExperimentConfig, Path]:
    if args.resume is not None:
        if not args.resume.is_file():
            raise UsageError(f"--resume: no such checkpoint {args.resume}")
        state = json.loads(args.resume.read_text(encoding="utf-8"))
        try:
            cfg = ExperimentConfig(**state["config"])
        except (KeyError, TypeError) as exc:
            raise UsageError(f"--resume: unreadable checkpoint ({exc})") from None
        return cfg.validate(), args.resume.parent
    if args.preset is None and args.specs is None:
        raise UsageError("give --preset {desk,paper} or at least --specs")
    base = dict(PRESETS[args.preset or "desk"])
    for key in ("specs", "n_values", "mtry_levels", "tree_types", "resample_modes", "R", "K",
                "master_seed", "B_override", "s_override", "min_node_size", "alpha",
                "bias_correction", "floor_variance", "zero_variance_points", "wide_sd"):
        value = getattr(args, key)
        if value is not None:
            base[key] = value
    try:
        cfg = ExperimentConfig(**base).validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = args.out or Path(f"experiment_{args.preset or 'custom'}")
    return cfg, out


def cmd_experiment(args) -> int:
    started = _now()
    cfg, out = _experiment_config(args)

    def progress(res, i, total):
        log.info("[%d/%d] %s mapb=%.3f", i, total, res.cell.id, res.mapb)

    result = run_experiment(cfg, out, threads=args.threads, stop_after=args.stop_after,
                            progress=progress)
    done = len(result.cells)
    outputs = [out / "results.csv", out / "checkpoint.json"]
    outputs += [out / f"detail_{c.cell.id}.csv" for c in result.cells]
    outputs = [p for p in outputs if p.exists()]
    write_manifest(out / "manifest.json", "experiment", cfg.to_json(), cfg.master_seed, started, outputs,
                   {"cells_completed": done, "result_digest": result.digest()})
    return EXIT_OK


def cmd_report(args) -> int:
    started = _now()
    try:
        rows = read_results(args.results)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    paths = write_figure_tables(rows, args.out)
    write_manifest(args.out / "manifest.json", "report", {"results": str(args.results)}, None,
                   started, paths, {"results_sha256": sha256_file(args.results)})
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
