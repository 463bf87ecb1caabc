"""CSV/JSON writers for solutions, prices, designs and sweeps, plus the run manifest."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, costs

GRID_POINTS = 2001


def fmt(v) -> str:
    """12 significant digits, '.' decimal separator; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    v = float(v)
    if not np.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return format(v, ".12g")


def _clean(obj):
    """Make values JSON-serializable, rounding floats to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(format(v, ".12g")) if np.isfinite(v) else str(v)
    return obj


def write_json(path: Path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return path


def _class_columns(sol, xs):
    """n, S, c, P for one class on a common grid; None beyond its span."""
    out = [[None] * len(xs) for _ in range(4)]
    if sol is None or len(sol.xs) < 2:
        return out
    cols = (sol.n, costs.search_profile(sol), costs.cruising_profile(sol), costs.generalized_profile(sol))
    inside = xs <= sol.span * (1 + 1e-12)
    for k, prof in enumerate(cols):
        vals = np.interp(xs, sol.xs, prof)
        out[k] = [float(v) if ok else None for v, ok in zip(vals, inside)]
    return out


def solution_grid(sol_a, sol_c, points: int = GRID_POINTS) -> np.ndarray:
    span = max((s.span for s in (sol_a, sol_c) if s is not None), default=0.0)
    return np.linspace(0.0, span, points)


def write_solution_csv(path: Path, sol_a, sol_c, points: int = GRID_POINTS) -> Path:
    xs = solution_grid(sol_a, sol_c, points)
    na, sa, ca, pa = _class_columns(sol_a, xs)
    nc, s_c, cc, pc = _class_columns(sol_c, xs)
    rows = zip(xs, na, nc, sa, s_c, ca, cc, pa, pc)
    return write_csv(path, ["x", "n_a", "n_c", "S_a", "S_c", "c_a", "c_c", "P_a", "P_c"], rows)


def solution_summary(sol_a, sol_c) -> dict:
    out = {}
    for tag, sol in (("a", sol_a), ("c", sol_c)):
        if sol is None:
            continue
        d = dict(sol.diagnostics)
        out[tag] = {
            "mode": sol.mode,
            "span": sol.span,
            "level": sol.level,
            "mass": sol.mass,
            "diagnostics": d,
        }
    return out


def write_pricing(out_dir: Path, schedule, points: int = GRID_POINTS):
    out_dir = Path(out_dir)
    span = max(schedule.xs_a[-1] if len(schedule.xs_a) else 0.0, schedule.xs_c[-1] if len(schedule.xs_c) else 0.0)
    xs = np.linspace(0.0, span, points)
    ta, tc = schedule.on_grid(xs)
    csv_path = write_csv(out_dir / "pricing.csv", ["x", "tau_a", "tau_c"], zip(xs, ta, tc))
    return csv_path


def sweep_rows(result):
    return result.rows()


def write_sweep_csv(path: Path, result) -> Path:
    return write_csv(path, ["theta", "k", "TC", "NP", "feasible", "reduction"], result.rows())


@dataclass
class RunManifest:
    command: str
    scenario_path: str
    parameters: dict
    outputs: list = field(default_factory=list)
    version: str = __version__
    wall_time_s: float = 0.0

    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def finish(self, out_dir: Optional[Path] = None) -> Optional[Path]:
        self.wall_time_s = time.perf_counter() - self._t0
        if out_dir is None:
            return None
        d = asdict(self)
        d.pop("_t0")
        d["outputs"] = sorted(str(Path(p).name) for p in self.outputs)
        return write_json(Path(out_dir) / "manifest.json", d)
