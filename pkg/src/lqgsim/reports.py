"""Estimate records and their serialized forms (JSON reports, CSV tail curves)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

__all__ = ["EstimateReport", "write_reports", "read_reports", "write_tail_curve", "fit_loglog_slope"]


@dataclass
class EstimateReport:
    """One Monte Carlo estimate: value, uncertainty, and provenance.

    `inconclusive` marks estimators that could not produce a defensible fit
    (e.g. too few tail hits); callers should distinguish that state from failure.
    """

    name: str
    estimate: float
    stderr: float
    n: int
    seed: int
    params: dict[str, Any] = field(default_factory=dict)
    inconclusive: bool = False

    def to_json_dict(self) -> dict[str, Any]:
        d = {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n": self.n,
            "seed": self.seed,
            "params": self.params,
        }
        if self.inconclusive:
            d["inconclusive"] = True
        return d


def write_reports(path: str | Path, reports: list[EstimateReport]) -> None:
    payload = [r.to_json_dict() for r in reports]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_reports(path: str | Path) -> list[EstimateReport]:
    out = []
    for d in json.loads(Path(path).read_text()):
        out.append(
            EstimateReport(
                name=d["name"],
                estimate=d["estimate"],
                stderr=d["stderr"],
                n=d["n"],
                seed=d["seed"],
                params=d.get("params", {}),
                inconclusive=d.get("inconclusive", False),
            )
        )
    return out


def write_tail_curve(path: str | Path, xs, counts, total: int) -> None:
    """Raw tail curve rows (x, count, total)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "count", "total"])
        for x, c in zip(xs, counts):
            w.writerow([f"{float(x):.10g}", int(c), int(total)])


def fit_loglog_slope(xs, ys) -> tuple[float, float, float]:
    """Least-squares slope of log ys vs log xs.

    Returns (slope, stderr, r_squared); points with y <= 0 are dropped by the
    caller beforehand.
    """
    import numpy as np

    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    if lx.size < 2:
        raise ValueError("need at least two points for a slope fit")
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    slope = float(coef[0])
    fitted = A @ coef
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    dof = lx.size - 2
    if dof > 0:
        sigma2 = ss_res / dof
        sxx = float(np.sum((lx - lx.mean()) ** 2))
        stderr = math.sqrt(sigma2 / sxx) if sxx > 0 else math.inf
    else:
        stderr = math.inf
    return slope, stderr, r2
