"""Simulation study: replicate forests per configuration cell, then score the IJ estimates.

For every cell (outcome function, n, mtry, tree type, resampling) the same
K test points are predicted by forests trained on R independent training
sets. The spread of those R predictions is the empirical variance; MAPB
compares each IJ estimate against it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .data import format_real
from .forest import ForestConfig, default_mtry, default_tree_count, fit_forest
from .ij_variance import BIAS_CORRECTIONS, predict_with_variance
from .resampling import MODES, default_subsample_size
from .simgen import P, SPEC_NAMES, WIDE_SD, dataset_from_rng, gen_predictors

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = "ijforest-checkpoint/1"
RESULT_FIELDS = (
    "spec", "n", "mtry", "tree_type", "resample", "B", "s", "R", "K",
    "median_empirical_variance", "mapb", "excluded_points", "runtime_seconds",
)
DEGENERATE_POLICIES = ("exclude", "error")
DETAIL_FIELDS = (
    "test_point", "replicate", "prediction", "variance_raw", "variance_correction",
    "variance_corrected", "empirical_variance",
)
# Rough single-core throughput used only for the up-front cost estimate.
_NODE_VISITS_PER_SECOND = 1.5e8


class ZeroEmpiricalVarianceError(ValueError):
    def __init__(self, index: int):
        super().__init__(f"empirical variance is zero at test point {index}; MAPB is undefined")
        self.index = index


class CostWarning(UserWarning):
    pass


def empirical_variance(preds) -> float:
    """Sample variance (denominator ``R - 1``) of one test point's predictions."""
    preds = np.asarray(preds, dtype=np.float64)
    if preds.ndim != 1 or preds.size < 2:
        raise ValueError("need at least 2 predictions")
    d = preds - preds.mean()
    return float(np.dot(d, d) / (preds.size - 1))


def degenerate_points(estimates, empiricals) -> np.ndarray:
    """Test points where the bias ratio is 0/0.

    Every replicate forest predicted the same value and every variance
    estimate is exactly zero. Typical for indicator outcomes far from the
    threshold, where all leaves reached are pure.
    """
    est = np.asarray(estimates, dtype=np.float64)
    emp = np.asarray(empiricals, dtype=np.float64)
    return (emp == 0) & np.all(est == 0, axis=1)


def mapb(estimates, empiricals) -> float:
    """Mean absolute predictive bias.

    ``estimates`` is ``(K, R)`` variance estimates and ``empiricals`` the
    ``K`` empirical variances; each test point's mean absolute error is
    divided by its empirical variance before averaging over test points.
    """
    est = np.asarray(estimates, dtype=np.float64)
    emp = np.asarray(empiricals, dtype=np.float64)
    if est.ndim != 2 or emp.shape != (est.shape[0],):
        raise ValueError(f"shape mismatch: estimates {est.shape}, empiricals {emp.shape}")
    zero = np.flatnonzero(emp <= 0)
    if zero.size:
        raise ZeroEmpiricalVarianceError(int(zero[0]))
    per_point = np.abs(est - emp[:, None]).mean(axis=1) / emp
    return float(per_point.mean())


@dataclass(frozen=True)
class ExperimentConfig:
    specs: tuple[str, ...] = SPEC_NAMES
    n_values: tuple[int, ...] = (200,)
    mtry_levels: tuple[int, ...] = (1, 2, 3)
    tree_types: tuple[str, ...] = ("cart", "ci")
    resample_modes: tuple[str, ...] = ("bootstrap", "subsample")
    R: int = 25
    K: int = 25
    master_seed: int = 2017
    B_override: Optional[int] = None
    s_override: Optional[int] = None
    min_node_size: int = 5
    alpha: float = 0.05
    bias_correction: Optional[str] = None
    floor_variance: bool = False
    zero_variance_points: str = "exclude"
    wide_sd: float = WIDE_SD

    def __post_init__(self) -> None:
        for name in ("specs", "n_values", "mtry_levels", "tree_types", "resample_modes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def validate(self) -> "ExperimentConfig":
        if self.R < 2:
            raise ValueError("R must be >= 2")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        for name in ("specs", "n_values", "mtry_levels", "tree_types", "resample_modes"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        bad = [s for s in self.specs if s not in SPEC_NAMES]
        if bad:
            raise ValueError(f"unknown simulation {bad[0]!r}; valid names: {', '.join(SPEC_NAMES)}")
        if any(n < 2 for n in self.n_values):
            raise ValueError("every n must be >= 2")
        if any(m not in (1, 2, 3) for m in self.mtry_levels):
            raise ValueError("mtry levels must be drawn from {1, 2, 3}")
        if any(t not in ("cart", "ci") for t in self.tree_types):
            raise ValueError("tree types must be drawn from {cart, ci}")
        if any(r not in MODES for r in self.resample_modes):
            raise ValueError(f"resample modes must be drawn from {MODES}")
        if self.B_override is not None and self.B_override < 2:
            raise ValueError("B override must be >= 2")
        if self.s_override is not None and any(not 1 <= self.s_override <= n for n in self.n_values):
            raise ValueError("s override must satisfy 1 <= s <= n for every n")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.bias_correction is not None and self.bias_correction not in BIAS_CORRECTIONS:
            raise ValueError(f"bias correction must be one of {BIAS_CORRECTIONS}")
        if self.zero_variance_points not in DEGENERATE_POLICIES:
            raise ValueError(f"zero_variance_points must be one of {DEGENERATE_POLICIES}")
        if not (np.isfinite(self.wide_sd) and self.wide_sd > 0):
            raise ValueError("wide_sd must be positive")
        return self

    def to_json(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class Cell:
    spec: str
    n: int
    mtry: int
    tree_type: str
    resample: str

    @property
    def id(self) -> str:
        return f"{self.spec}_n{self.n}_m{self.mtry}_{self.tree_type}_{self.resample}"


@dataclass
class CellResult:
    cell: Cell
    B: int
    s: int
    R: int
    K: int
    median_empirical_variance: float
    mapb: float
    runtime_seconds: float
    empirical: np.ndarray = field(repr=False)
    predictions: np.ndarray = field(repr=False)
    raw: np.ndarray = field(repr=False)
    correction: np.ndarray = field(repr=False)
    corrected: np.ndarray = field(repr=False)
    excluded_points: int = 0

    def row(self) -> dict:
        c = self.cell
        return {
            "spec": c.spec, "n": c.n, "mtry": c.mtry, "tree_type": c.tree_type,
            "resample": c.resample, "B": self.B, "s": self.s, "R": self.R, "K": self.K,
            "median_empirical_variance": self.median_empirical_variance,
            "mapb": self.mapb, "excluded_points": self.excluded_points,
            "runtime_seconds": self.runtime_seconds,
        }

    def mean_abs_bias(self) -> np.ndarray:
        return np.abs(self.corrected - self.empirical[:, None]).mean(axis=1)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    cells: list[CellResult]

    def rows(self) -> list[dict]:
        return [c.row() for c in self.cells]

    def get(self, spec: str, n: int, mtry: int, tree_type: str, resample: str) -> CellResult:
        want = Cell(spec, n, mtry, tree_type, resample)
        for c in self.cells:
            if c.cell == want:
                return c
        raise KeyError(want.id)

    def digest(self) -> str:
        """SHA-256 over every deterministic number (runtimes excluded)."""
        h = hashlib.sha256()
        for c in self.cells:
            h.update(c.cell.id.encode())
            for arr in (c.predictions, c.raw, c.correction, c.corrected, c.empirical):
                h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
            h.update(np.float64(c.mapb).tobytes())
        return h.hexdigest()


def iter_cells(config: ExperimentConfig) -> list[Cell]:
    return [
        Cell(spec, n, default_mtry(P, level), tt, rs)
        for spec in config.specs
        for n in config.n_values
        for level in config.mtry_levels
        for tt in config.tree_types
        for rs in config.resample_modes
    ]


def _spec_index(spec: str) -> int:
    return SPEC_NAMES.index(spec)


def make_test_points(config: ExperimentConfig, spec: str) -> np.ndarray:
    ss = np.random.SeedSequence(config.master_seed, spawn_key=(0, _spec_index(spec)))
    return gen_predictors(config.K, np.random.default_rng(ss), config.wide_sd)


def training_set(config: ExperimentConfig, spec: str, n: int, r: int):
    ss = np.random.SeedSequence(config.master_seed, spawn_key=(1, _spec_index(spec), n, r))
    return dataset_from_rng(spec, n, np.random.default_rng(ss), config.wide_sd)


def forest_seed(config: ExperimentConfig, cell: Cell, r: int) -> int:
    key = (2, _spec_index(cell.spec), cell.n, cell.mtry,
           ("cart", "ci").index(cell.tree_type), MODES.index(cell.resample), r)
    ss = np.random.SeedSequence(config.master_seed, spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def cell_forest_config(config: ExperimentConfig, cell: Cell, r: int) -> ForestConfig:
    B = config.B_override or default_tree_count(cell.n)
    s = config.s_override or default_subsample_size(cell.n)
    return ForestConfig(
        tree_type=cell.tree_type, resample=cell.resample, B=B,
        s=s if cell.resample == "subsample" else None, mtry=cell.mtry,
        min_node_size=config.min_node_size, alpha=config.alpha,
        seed=forest_seed(config, cell, r),
    )


def estimate_cost_seconds(config: ExperimentConfig) -> float:
    """Crude projection of fitting time from n, B and the cell count."""
    total = 0.0
    for cell in iter_cells(config):
        B = config.B_override or default_tree_count(cell.n)
        m = cell.n if cell.resample == "bootstrap" else (config.s_override or default_subsample_size(cell.n))
        depth = max(np.log2(max(m / config.min_node_size, 2.0)), 1.0)
        total += config.R * B * cell.mtry * m * depth * np.log2(max(m, 2))
    return total / _NODE_VISITS_PER_SECOND


def run_cell(config: ExperimentConfig, cell: Cell, threads: int = 1) -> CellResult:
    t0 = time.perf_counter()
    X_test = make_test_points(config, cell.spec)
    K, R = config.K, config.R
    preds = np.empty((K, R))
    raw = np.empty((K, R))
    corr = np.empty((K, R))
    corrected = np.empty((K, R))
    fc = None
    for r in range(R):
        data = training_set(config, cell.spec, cell.n, r)
        fc = cell_forest_config(config, cell, r)
        forest = fit_forest(data, fc, threads=threads)
        bv = predict_with_variance(forest, X_test, config.bias_correction, config.floor_variance)
        preds[:, r] = bv.prediction
        raw[:, r] = bv.raw
        corr[:, r] = bv.correction
        corrected[:, r] = bv.corrected
    emp = np.array([empirical_variance(preds[k]) for k in range(K)])
    keep = np.ones(K, dtype=bool)
    if config.zero_variance_points == "exclude":
        keep = ~degenerate_points(corrected, emp)
        if not keep.any():
            raise ZeroEmpiricalVarianceError(0)
    value = mapb(corrected[keep], emp[keep])
    s = fc.s if (fc.resample == "subsample" and fc.s is not None) else cell.n
    return CellResult(cell, fc.B, int(s), R, K, float(np.median(emp)), value,
                      time.perf_counter() - t0, emp, preds, raw, corr, corrected,
                      int(K - keep.sum()))


def write_detail(result: CellResult, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETAIL_FIELDS)
        for k in range(result.K):
            for r in range(result.R):
                w.writerow([k, r, format_real(result.predictions[k, r]), format_real(result.raw[k, r]),
                            format_real(result.correction[k, r]), format_real(result.corrected[k, r]),
                            format_real(result.empirical[k])])


def read_detail(path: Path, cell: Cell, meta: dict) -> CellResult:
    K, R = int(meta["K"]), int(meta["R"])
    arrs = {f: np.empty((K, R)) for f in DETAIL_FIELDS[2:6]}
    emp = np.empty(K)
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            k, r = int(row["test_point"]), int(row["replicate"])
            for f in arrs:
                arrs[f][k, r] = float(row[f])
            emp[k] = float(row["empirical_variance"])
    return CellResult(cell, int(meta["B"]), int(meta["s"]), R, K,
                      float(meta["median_empirical_variance"]), float(meta["mapb"]),
                      float(meta["runtime_seconds"]), emp, arrs["prediction"],
                      arrs["variance_raw"], arrs["variance_correction"], arrs["variance_corrected"],
                      int(meta.get("excluded_points", 0)))


def write_results(rows: Sequence[dict], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: format_real(v) if isinstance(v, float) else v for k, v in row.items()})


def read_results(path: Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"spec", "n", "mtry", "tree_type", "resample", "mapb"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: results file lacks columns {sorted(missing)}")
        rows = []
        for i, row in enumerate(reader, start=1):
            try:
                rows.append({**row, "n": int(row["n"]), "mtry": int(row["mtry"]),
                             "mapb": float(row["mapb"])})
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed row {i}: {exc}") from None
    return rows


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_checkpoint(path: Path, config: ExperimentConfig) -> dict:
    if not path.exists():
        return {"schema": CHECKPOINT_SCHEMA, "config": config.to_json(),
                "config_digest": config.digest(), "completed": {}}
    state = json.loads(path.read_text(encoding="utf-8"))
    if state.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"{path}: unrecognised checkpoint schema {state.get('schema')!r}")
    if state.get("config_digest") != config.digest():
        raise ValueError(f"{path}: checkpoint belongs to a different experiment configuration")
    return state


def _save_checkpoint(path: Path, state: dict) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(state, indent=1, sort_keys=True), encoding="utf-8")
    tmp.replace(path)


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None,
                   threads: int = 1, stop_after: Optional[int] = None,
                   progress: Optional[Callable[[CellResult, int, int], None]] = None) -> ExperimentResult:
    """Run every cell, writing ``detail_<cell>.csv``, ``results.csv`` and ``checkpoint.json``.

    With ``out_dir`` set, cells already recorded in the checkpoint are
    reloaded rather than recomputed, so an interrupted run can be resumed by
    calling again with the same configuration and directory. ``stop_after``
    computes at most that many new cells and then returns (used to simulate
    interruption).
    """
    config.validate()
    projected = estimate_cost_seconds(config)
    if projected > 6 * 3600 or ("ci" in config.tree_types and max(config.n_values) >= 5000):
        warnings.warn(f"projected fitting cost is about {projected / 3600:.1f} h on one core "
                      f"(conditional-inference cells at large n are the expensive part)",
                      CostWarning, stacklevel=2)
    cells = iter_cells(config)
    out = Path(out_dir) if out_dir is not None else None
    state = None
    ckpt = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / "checkpoint.json"
        state = _load_checkpoint(ckpt, config)

    results: list[CellResult] = []
    computed = 0
    for i, cell in enumerate(cells):
        if state is not None and cell.id in state["completed"]:
            meta = state["completed"][cell.id]
            detail = out / meta["detail_file"]
            if sha256_file(detail) != meta["detail_sha256"]:
                raise ValueError(f"{detail}: contents do not match the checkpoint digest")
            results.append(read_detail(detail, cell, meta))
            continue
        if stop_after is not None and computed >= stop_after:
            return ExperimentResult(config, results)
        res = run_cell(config, cell, threads)
        computed += 1
        log.info("%s: mapb=%.4f median var=%.4g excluded=%d (%.1fs)", cell.id, res.mapb,
                 res.median_empirical_variance, res.excluded_points, res.runtime_seconds)
        if out is not None:
            detail = out / f"detail_{cell.id}.csv"
            write_detail(res, detail)
            state["completed"][cell.id] = {**res.row(), "detail_file": detail.name,
                                           "detail_sha256": sha256_file(detail)}
            _save_checkpoint(ckpt, state)
            write_results([r.row() for r in results + [res]], out / "results.csv")
        results.append(res)
        if progress is not None:
            progress(res, i + 1, len(cells))
    if out is not None:
        write_results([r.row() for r in results], out / "results.csv")
    return ExperimentResult(config, results)
