"""Social-force field and potential-landscape reconstruction.

Two force proxies are sampled from a run:

* realized shift: the per-step opinion displacement divided by the influence
  parameter (and by the snapshot stride when snapshots are strided);
* followee deviation: the mean opinion offset of an agent's concordant
  followee posts.

Samples (x, F, t_n) are smoothed into a force field F(x) with a
Nadaraya-Watson Gaussian-kernel estimator and integrated (trapezoidal,
negated, zero-mean over the covered span) into a potential V(x). Slicing the
samples by normalized time yields the time-varying landscape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics, records
from .core import RunRecord

GRID_POINTS = 401
DEFAULT_BANDWIDTH = 0.1
NO_DATA_WEIGHT = 1e-12
SPARSE_BIN_SAMPLES = 50

DEFAULT_TIME_BINS: tuple[tuple[float, float], ...] = tuple(
    (round(lo, 1), round(lo + 0.1, 1) if lo < 0.89 else math.inf)
    for lo in np.arange(0.0, 1.0, 0.1)
)


def default_grid() -> np.ndarray:
    return np.linspace(-1.0, 1.0, GRID_POINTS)


@dataclass(frozen=True)
class ForceSamples:
    """Columnar (x, F, t_n) force observations."""

    x: np.ndarray
    f: np.ndarray
    t_n: np.ndarray

    def __post_init__(self):
        if not (len(self.x) == len(self.f) == len(self.t_n)):
            raise ValueError("misaligned sample columns")

    def __len__(self) -> int:
        return len(self.x)

    @staticmethod
    def concatenate(parts: list["ForceSamples"]) -> "ForceSamples":
        return ForceSamples(
            np.concatenate([p.x for p in parts]) if parts else np.empty(0),
            np.concatenate([p.f for p in parts]) if parts else np.empty(0),
            np.concatenate([p.t_n for p in parts]) if parts else np.empty(0),
        )


@dataclass(frozen=True)
class PotentialCurve:
    """Potential over the opinion grid for one normalized-time bin.

    NaN rows mark grid points without kernel support; ``sparse`` bins had too
    few samples for a trustworthy curve and carry no values at all.
    """

    grid: np.ndarray
    f_smooth: np.ndarray
    v: np.ndarray
    time_bin: tuple[float, float]
    n_samples: int
    sparse: bool = False


# ---------------------------------------------------------------------------
# samples from runs
# ---------------------------------------------------------------------------

def _activity_scale(record: RunRecord) -> int:
    return max(metrics.activity_time(record.i_s, record.stop_step), 1)


def nod_samples(record: RunRecord, alpha: float,
                budget: int | None = None) -> ForceSamples:
    """Realized opinion shifts per (agent, snapshot pair), scaled by
    1 / (alpha * stride). Ragged trailing snapshot gaps are skipped."""
    if alpha <= 0:
        raise ValueError("realized-shift forces are undefined for alpha = 0")
    if budget is None:
        steps, stride = records.snapshot_steps(record.stop_step)
    else:
        steps, stride = records.snapshot_steps(record.stop_step, budget)
    rows = record.opinions[steps].astype(np.float64)
    t_eff = _activity_scale(record)
    xs, fs, ts = [], [], []
    for k in range(len(steps) - 1):
        if steps[k + 1] - steps[k] != stride:
            continue
        xs.append(rows[k])
        fs.append((rows[k + 1] - rows[k]) / (alpha * stride))
        ts.append(np.full(rows.shape[1], steps[k] / t_eff))
    if not xs:
        return ForceSamples(np.empty(0), np.empty(0), np.empty(0))
    return ForceSamples(np.concatenate(xs), np.concatenate(fs), np.concatenate(ts))


def fod_samples(record: RunRecord) -> ForceSamples:
    """Mean concordant-followee deviation per (agent, snapshot step); agents
    with no concordant followee post that step contribute nothing."""
    steps, _ = records.snapshot_steps(record.stop_step)
    t_eff = _activity_scale(record)
    xs, fs, ts = [], [], []
    for step in steps:
        if step >= record.fod.shape[0]:
            continue
        row = record.fod[step].astype(np.float64)
        ok = ~np.isnan(row)
        if not np.any(ok):
            continue
        xs.append(record.opinions[step, ok].astype(np.float64))
        fs.append(row[ok])
        ts.append(np.full(int(ok.sum()), step / t_eff))
    if not xs:
        return ForceSamples(np.empty(0), np.empty(0), np.empty(0))
    return ForceSamples(np.concatenate(xs), np.concatenate(fs), np.concatenate(ts))


def samples_from_run_dir(run_dir: Path, source: str = "nod") -> ForceSamples:
    """Force samples from a persisted run's samples.csv."""
    table = records.load_samples(run_dir)
    if source not in ("nod", "fod"):
        raise ValueError(f"unknown force source {source!r}")
    col = np.asarray(table[source], dtype=np.float64)
    ok = ~np.isnan(col)
    return ForceSamples(
        np.asarray(table["x"], dtype=np.float64)[ok],
        col[ok],
        np.asarray(table["t_n"], dtype=np.float64)[ok],
    )


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------

def kernel_regression(
    x_samples: np.ndarray,
    f_samples: np.ndarray,
    grid: np.ndarray,
    h: float = DEFAULT_BANDWIDTH,
) -> np.ndarray:
    """Nadaraya-Watson estimate of F on the grid with a Gaussian kernel.

    Grid points whose total kernel weight falls below 1e-12 come back NaN
    (no data nearby); it is an error for the whole grid to be uncovered.
    """
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(x_samples, dtype=np.float64)
    f = np.asarray(f_samples, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("need at least one sample")
    grid = np.asarray(grid, dtype=np.float64)
    norm = 1.0 / (math.sqrt(2.0 * math.pi) * h)
    num = np.zeros(len(grid))
    den = np.zeros(len(grid))
    chunk = max(1, int(4_000_000 / max(len(grid), 1)))
    for start in range(0, len(x), chunk):
        xs = x[start:start + chunk]
        fs = f[start:start + chunk]
        w = norm * np.exp(-0.5 * ((grid[:, None] - xs[None, :]) / h) ** 2)
        num += w @ fs
        den += w.sum(axis=1)
    covered = den >= NO_DATA_WEIGHT
    if not np.any(covered):
        raise ValueError("no grid point has kernel support")
    out = np.full(len(grid), np.nan)
    out[covered] = num[covered] / den[covered]
    return out


def potential(f_smooth: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """V = -(cumulative trapezoidal integral of F), shifted to zero mean over
    the covered span. NaN edges pass through; interior gaps are an error."""
    f = np.asarray(f_smooth, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    covered = np.nonzero(~np.isnan(f))[0]
    if len(covered) < 2:
        raise ValueError("need at least two covered grid points")
    lo, hi = covered[0], covered[-1]
    if np.any(np.isnan(f[lo:hi + 1])):
        raise ValueError("no-data gap inside the covered interval; restrict the grid")
    seg_f = f[lo:hi + 1]
    seg_x = grid[lo:hi + 1]
    dx = np.diff(seg_x)
    v = np.empty_like(seg_f)
    v[0] = 0.0
    v[1:] = -np.cumsum(0.5 * (seg_f[1:] + seg_f[:-1]) * dx)
    mean = np.trapezoid(v, seg_x) / (seg_x[-1] - seg_x[0])
    out = np.full(len(grid), np.nan)
    out[lo:hi + 1] = v - mean
    return out


def landscape_over_time(
    samples: ForceSamples,
    bins: tuple[tuple[float, float], ...] = DEFAULT_TIME_BINS,
    grid: np.ndarray | None = None,
    h: float = DEFAULT_BANDWIDTH,
    min_samples: int = SPARSE_BIN_SAMPLES,
) -> list[PotentialCurve]:
    """One potential curve per normalized-time bin; bins with fewer than
    ``min_samples`` observations are marked sparse and carry no curve."""
    if grid is None:
        grid = default_grid()
    curves = []
    nan = np.full(len(grid), np.nan)
    for lo, hi in bins:
        mask = (samples.t_n >= lo) & (samples.t_n < hi)
        count = int(mask.sum())
        if count < min_samples:
            curves.append(PotentialCurve(grid, nan, nan, (lo, hi), count, sparse=True))
            continue
        f_smooth = kernel_regression(samples.x[mask], samples.f[mask], grid, h)
        v = potential(f_smooth, grid)
        curves.append(PotentialCurve(grid, f_smooth, v, (lo, hi), count, sparse=False))
    return curves


def local_minima(curve: PotentialCurve) -> list[float]:
    """Grid locations of the covered interior local minima of V."""
    v = curve.v
    ok = ~np.isnan(v)
    mins = []
    for i in range(1, len(v) - 1):
        if ok[i - 1] and ok[i] and ok[i + 1] and v[i] < v[i - 1] and v[i] <= v[i + 1]:
            mins.append(float(curve.grid[i]))
    return mins


def write_landscape_csv(curves: list[PotentialCurve], path: Path) -> None:
    """Export: time_bin_lo, time_bin_hi, x, F_smooth, V, n_samples."""
    def fmt(v: float) -> str:
        return "" if np.isnan(v) else repr(float(v))

    with Path(path).open("w") as fh:
        fh.write("time_bin_lo,time_bin_hi,x,F_smooth,V,n_samples\n")
        for curve in curves:
            lo, hi = curve.time_bin
            hi_text = "inf" if math.isinf(hi) else repr(float(hi))
            if curve.sparse:
                continue
            for i, x in enumerate(curve.grid):
                fh.write(
                    f"{float(lo)!r},{hi_text},{float(x)!r},"
                    f"{fmt(curve.f_smooth[i])},{fmt(curve.v[i])},{curve.n_samples}\n"
                )
