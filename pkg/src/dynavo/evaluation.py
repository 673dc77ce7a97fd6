"""Trajectory evaluation: ATE, RPE, improvement percentages, result tables.

ATE aligns estimate to ground truth with a rigid closed-form fit on the
translation components (the TUM convention) and reports statistics of the
residual norms. RPE compares relative motions over a fixed time delta and
reports translational drift in m/s and rotational drift in deg/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .odometry import umeyama_align
from .pose import PoseSE3
from .tum_io import Trajectory, associate_streams


class InsufficientOverlapError(ValueError):
    pass


class ImprovementDomainError(ValueError):
    pass


@dataclass(frozen=True)
class MetricStats:
    rmse: float
    mean: float
    median: float
    sd: float

    @classmethod
    def from_series(cls, errors: np.ndarray) -> "MetricStats":
        e = np.asarray(errors, dtype=float).ravel()
        if len(e) == 0:
            raise InsufficientOverlapError("empty error series")
        rmse = float(np.sqrt(np.mean(e**2)))
        mean = float(np.mean(e))
        median = float(np.sort(e)[(len(e) - 1) // 2])  # lower interpolation
        sd = float(np.sqrt(np.mean((e - mean) ** 2)))  # population S.D.
        return cls(rmse, mean, median, sd)


def _associated_poses(
    est: Trajectory, gt: Trajectory, max_diff: float
) -> tuple[list[PoseSE3], list[PoseSE3], np.ndarray]:
    a = list(zip(est.timestamps, est.poses))
    b = list(zip(gt.timestamps, gt.poses))
    pairs = associate_streams(a, b, max_diff)
    est_p = [pa[1] for pa, pb in pairs]
    gt_p = [pb[1] for pa, pb in pairs]
    stamps = np.array([pa[0] for pa, pb in pairs])
    return est_p, gt_p, stamps


def absolute_trajectory_error(
    est: Trajectory, gt: Trajectory, max_diff: float = 0.02
) -> MetricStats:
    """ATE in meters after rigid alignment of the estimated translations."""
    series, _ = ate_error_series(est, gt, max_diff)
    return MetricStats.from_series(series)


def ate_error_series(
    est: Trajectory, gt: Trajectory, max_diff: float = 0.02
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pose translational ATE errors and their timestamps."""
    est_p, gt_p, stamps = _associated_poses(est, gt, max_diff)
    if len(est_p) < 3:
        raise InsufficientOverlapError(
            f"only {len(est_p)} associated pose pairs (need >= 3)"
        )
    est_t = np.array([p.translation for p in est_p])
    gt_t = np.array([p.translation for p in gt_p])
    align = umeyama_align(est_t, gt_t, allow_degenerate=True)
    errors = np.linalg.norm(gt_t - align.apply(est_t), axis=1)
    return errors, stamps


def relative_pose_error(
    est: Trajectory, gt: Trajectory, delta: float = 1.0,
    max_diff: float = 0.02, pair_tolerance: float | None = None,
) -> tuple[MetricStats, MetricStats]:
    """(translational m/s, rotational deg/s) drift statistics over `delta` seconds."""
    (trans, rot), _ = rpe_error_series(est, gt, delta, max_diff, pair_tolerance)
    return MetricStats.from_series(trans), MetricStats.from_series(rot)


def rpe_error_series(
    est: Trajectory, gt: Trajectory, delta: float = 1.0,
    max_diff: float = 0.02, pair_tolerance: float | None = None,
) -> tuple[tuple[np.ndarray, np.ndarray], np.ndarray]:
    """Per-interval RPE error series ((translational, rotational), timestamps)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if pair_tolerance is None:
        pair_tolerance = max_diff
    est_p, gt_p, stamps = _associated_poses(est, gt, max_diff)
    trans_err, rot_err, used = [], [], []
    for i, t in enumerate(stamps):
        j = int(np.searchsorted(stamps, t + delta))
        best = None
        for cand in (j - 1, j):
            if 0 <= cand < len(stamps) and cand != i:
                dt = abs(stamps[cand] - (t + delta))
                if dt <= pair_tolerance and (best is None or dt < best[1]):
                    best = (cand, dt)
        if best is None:
            continue
        j = best[0]
        gt_rel = gt_p[i].inverse().compose(gt_p[j])
        est_rel = est_p[i].inverse().compose(est_p[j])
        err = gt_rel.inverse().compose(est_rel)
        trans_err.append(np.linalg.norm(err.translation) / delta)
        rot_err.append(math.degrees(err.rotation_angle()) / delta)
        used.append(t)
    if not trans_err:
        raise InsufficientOverlapError("no valid (t, t+delta) pose pairs")
    return (np.array(trans_err), np.array(rot_err)), np.array(used)


def improvement_percent(o: float, r: float) -> float:
    """Percentage improvement of r over baseline o: (o - r) / o * 100."""
    if o <= 0:
        raise ImprovementDomainError(f"baseline must be positive, got {o}")
    return (o - r) / o * 100.0


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    baseline: MetricStats
    improved: MetricStats


_STATS = ("rmse", "mean", "median", "sd")
_STAT_HEADERS = ("RMSE", "Mean", "Median", "S.D.")


def render_results_table(rows: list[ComparisonRow], title: str = "") -> str:
    """Aligned text table: baseline / improved / improvement column groups."""
    header_groups = ["Baseline", "Improved", "Improvement"]
    cols = ["Sequence"]
    for group in header_groups:
        for stat in _STAT_HEADERS:
            cols.append(f"{group} {stat}")
    lines = []
    table_rows = []
    for row in rows:
        cells = [row.name]
        for stat in _STATS:
            cells.append(f"{getattr(row.baseline, stat):.4f}")
        for stat in _STATS:
            cells.append(f"{getattr(row.improved, stat):.4f}")
        for stat in _STATS:
            eta = improvement_percent(getattr(row.baseline, stat), getattr(row.improved, stat))
            cells.append(f"{eta:.2f}%")
        table_rows.append(cells)
    widths = [max(len(c), *(len(r[i]) for r in table_rows)) if table_rows else len(c)
              for i, c in enumerate(cols)]
    if title:
        lines.append(title)
    lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for cells in table_rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines) + "\n"


def render_results_csv(rows: list[ComparisonRow]) -> str:
    cols = ["sequence"]
    for group in ("baseline", "improved", "improvement_pct"):
        cols += [f"{group}_{s}" for s in _STATS]
    lines = [",".join(cols)]
    for row in rows:
        cells = [row.name]
        cells += [f"{getattr(row.baseline, s):.6f}" for s in _STATS]
        cells += [f"{getattr(row.improved, s):.6f}" for s in _STATS]
        cells += [
            f"{improvement_percent(getattr(row.baseline, s), getattr(row.improved, s)):.4f}"
            for s in _STATS
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_error_series(stamps: np.ndarray, errors: np.ndarray, path: str) -> None:
    """Emit "timestamp error" lines for external plotting."""
    with open(path, "w") as fh:
        fh.write("# timestamp error\n")
        for t, e in zip(stamps, errors):
            fh.write(f"{t:.6f} {e:.6f}\n")
