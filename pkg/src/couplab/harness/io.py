"""Results CSV, run manifests and per-run trace files.

Floats are written with ``repr`` so that a value round-trips exactly and
two runs with identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

RESULT_COLUMNS = ("experiment", "lambda", "c", "t_star", "step", "trials", "metric", "value", "ci_half_width", "seed")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    lam: float
    c: float
    t_star: float
    step: float
    trials: int
    metric: str
    value: float
    ci_half_width: float | None
    seed: int

    def cells(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v) if math.isfinite(v) else str(v)
            return str(v)

        return [fmt(v) for v in (
            self.experiment, float(self.lam), float(self.c), float(self.t_star), float(self.step),
            int(self.trials), self.metric, float(self.value),
            None if self.ci_half_width is None else float(self.ci_half_width), int(self.seed),
        )]


def format_rows(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow(row.cells())
    return buf.getvalue()


def write_rows(path, rows):
    Path(path).write_text(format_rows(rows), encoding="utf-8")


def read_rows(path) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"unexpected header in {path}: {reader.fieldnames}")
        return [
            ResultRow(
                r["experiment"], float(r["lambda"]), float(r["c"]), float(r["t_star"]), float(r["step"]),
                int(r["trials"]), r["metric"], float(r["value"]),
                float(r["ci_half_width"]) if r["ci_half_width"] else None, int(r["seed"]),
            )
            for r in reader
        ]


@dataclass(frozen=True)
class RunManifest:
    config_digest: str
    master_seed: int
    version: str
    duration_s: float
    command: str = ""

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def manifest_path(results_path) -> Path:
    p = Path(results_path)
    return p.with_name(p.name + ".manifest.json")


def format_trace(times, states, p_true, p_adv) -> str:
    """Trace CSV with columns ``time, x0..x{d-1}, p_true, p_adv``."""
    states = np.asarray(states, dtype=np.float64).reshape(len(times), -1)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time", *(f"x{i}" for i in range(states.shape[1])), "p_true", "p_adv"])
    for t, s, a, b in zip(times, states, p_true, p_adv):
        writer.writerow([repr(float(v)) for v in (t, *s, a, b)])
    return buf.getvalue()
