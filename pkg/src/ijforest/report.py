"""Plot-data tables for the per-sample-size MAPB bar charts."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

from .data import format_real
from .simgen import SPEC_NAMES

FIGURE_FIELDS = ("distribution", "mtry", "tree_type", "resample", "mapb")


def _dist_rank(name: str) -> tuple[int, str]:
    return (SPEC_NAMES.index(name), name) if name in SPEC_NAMES else (len(SPEC_NAMES), name)


def figure_rows(rows: Iterable[dict]) -> dict[int, list[dict]]:
    """Group result rows by n; within a distribution, bars sort by (resample, tree_type, mtry)."""
    by_n: dict[int, list[dict]] = {}
    for row in rows:
        by_n.setdefault(int(row["n"]), []).append({
            "distribution": row["spec"], "mtry": int(row["mtry"]),
            "tree_type": row["tree_type"], "resample": row["resample"],
            "mapb": float(row["mapb"]),
        })
    for n, items in by_n.items():
        items.sort(key=lambda r: (_dist_rank(r["distribution"]), r["resample"], r["tree_type"], r["mtry"]))
    return dict(sorted(by_n.items()))


def write_figure_tables(rows: Iterable[dict], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for n, items in figure_rows(rows).items():
        path = out / f"figure_mapb_n{n}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=FIGURE_FIELDS, lineterminator="\n")
            w.writeheader()
            for r in items:
                w.writerow({**r, "mapb": format_real(r["mapb"])})
        paths.append(path)
    return paths
