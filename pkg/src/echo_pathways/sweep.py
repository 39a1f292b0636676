"""Scenario grids: expansion, seeding, parallel execution, aggregation.

A sweep is the Cartesian product of four axes - strategy variant, repost
probability, influence parameter, rewiring probability - times a trial
count (trials innermost). Every job derives its own seed from the base seed
and its identity, runs independently, and persists a full run directory
under ``output_root/<cell>/<trial>/``. A terminal marker makes execution
resumable: completed jobs are skipped byte-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import gaussian_kde

from . import records
from .config import ConfigError, ScenarioConfig
from .core import run


@dataclass(frozen=True)
class StrategyVariant:
    strategy: str
    k_h: int = 0

    @property
    def tag(self) -> str:
        if self.strategy == "opinion":
            return f"opinion-kh{self.k_h}"
        return self.strategy


@dataclass(frozen=True)
class SweepConfig:
    """Axes in declaration order: variants, p, alpha, q; trials innermost."""

    variants: tuple[StrategyVariant, ...]
    p_values: tuple[float, ...]
    alpha_values: tuple[float, ...]
    q_values: tuple[float, ...]
    trials: int
    base_seed: int
    n: int = 500
    k_o: float = 15.0
    epsilon: float = 0.45
    k_R: int = 10
    max_steps: int = 20_000
    quiet_steps: int = 60
    opinion_tol: float = 1e-7
    baseline_formula: str = "paper"
    parallelism: int = 1
    write_samples: bool = True

    def validate(self) -> "SweepConfig":
        for name in ("variants", "p_values", "alpha_values", "q_values"):
            if not getattr(self, name):
                raise ConfigError(name, "axis must not be empty")
        if self.trials < 1:
            raise ConfigError("trials", "need at least 1 trial per cell")
        self.scenario(self.variants[0], self.p_values[0],
                      self.alpha_values[0], self.q_values[0], 0)
        return self

    def scenario(self, variant: StrategyVariant, p: float, alpha: float,
                 q: float, seed: int) -> ScenarioConfig:
        return ScenarioConfig(
            n=self.n, k_o=self.k_o, epsilon=self.epsilon, alpha=alpha, q=q,
            p=p, k_R=self.k_R, k_h=variant.k_h, strategy=variant.strategy,
            max_steps=self.max_steps, quiet_steps=self.quiet_steps,
            opinion_tol=self.opinion_tol, seed=seed,
            baseline_formula=self.baseline_formula,
        ).validate()

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "variants": [{"strategy": v.strategy, "k_h": v.k_h} for v in self.variants],
            "p_values": list(self.p_values),
            "alpha_values": list(self.alpha_values),
            "q_values": list(self.q_values),
            "trials": self.trials,
            "base_seed": self.base_seed,
            "n": self.n,
            "k_o": self.k_o,
            "epsilon": self.epsilon,
            "k_R": self.k_R,
            "max_steps": self.max_steps,
            "quiet_steps": self.quiet_steps,
            "opinion_tol": self.opinion_tol,
            "baseline_formula": self.baseline_formula,
            "parallelism": self.parallelism,
            "write_samples": self.write_samples,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SweepConfig":
        data = dict(data)
        data.pop("schema_version", None)
        variants = tuple(
            StrategyVariant(v["strategy"], int(v.get("k_h", 0)))
            for v in data.pop("variants")
        )
        for axis in ("p_values", "alpha_values", "q_values"):
            data[axis] = tuple(data[axis])
        return cls(variants=variants, **data).validate()

    @classmethod
    def load(cls, path: Path) -> "SweepConfig":
        data = json.loads(Path(path).read_text())
        return cls.from_json_dict(data)


@dataclass(frozen=True)
class Job:
    variant: StrategyVariant
    p: float
    alpha: float
    q: float
    trial: int
    config: ScenarioConfig

    @property
    def cell_name(self) -> str:
        return f"{self.variant.tag}_p{self.p!r}_a{self.alpha!r}_q{self.q!r}"

    def run_dir(self, output_root: Path) -> Path:
        return Path(output_root) / self.cell_name / f"trial{self.trial:03d}"


def derive_seed(base_seed: int, variant: StrategyVariant, p: float,
                alpha: float, q: float, trial: int) -> int:
    """Collision-resistant 64-bit job seed: the first 8 bytes (little-endian)
    of SHA-256 over the canonical job-identity string
    ``{base}|strategy={s}|k_h={k}|p={p!r}|alpha={a!r}|q={q!r}|trial={t}``."""
    identity = (
        f"{base_seed}|strategy={variant.strategy}|k_h={variant.k_h}"
        f"|p={float(p)!r}|alpha={float(alpha)!r}|q={float(q)!r}|trial={trial}"
    )
    digest = hashlib.sha256(identity.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


def expand_grid(sweep: SweepConfig) -> list[Job]:
    """All jobs in deterministic order: axes in declaration order, trials
    innermost."""
    sweep.validate()
    jobs = []
    for variant in sweep.variants:
        for p in sweep.p_values:
            for alpha in sweep.alpha_values:
                for q in sweep.q_values:
                    for trial in range(sweep.trials):
                        seed = derive_seed(sweep.base_seed, variant, p, alpha, q, trial)
                        jobs.append(Job(
                            variant, p, alpha, q, trial,
                            sweep.scenario(variant, p, alpha, q, seed),
                        ))
    return jobs


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _run_job(args: tuple) -> tuple[str, str | None]:
    job, output_root, write_samples = args
    run_dir = job.run_dir(output_root)
    try:
        record = run(job.config)
        records.persist(record, run_dir, write_samples=write_samples)
        return str(run_dir), None
    except Exception:
        return str(run_dir), traceback.format_exc()


def execute(
    jobs: list[Job],
    output_root: Path,
    parallelism: int = 1,
    write_samples: bool = True,
    progress=None,
) -> list[tuple[str, str]]:
    """Run all incomplete jobs; returns (run_dir, traceback) per failure.

    Completed jobs (terminal marker present) are skipped, so an interrupted
    sweep resumes where it stopped.
    """
    output_root = Path(output_root)
    output_root.mkdir(parents=True, exist_ok=True)
    pending = [j for j in jobs if not records.is_complete(j.run_dir(output_root))]
    failures: list[tuple[str, str]] = []
    done = len(jobs) - len(pending)
    if progress:
        progress(done, len(jobs), "resume-skip")
    payloads = [(job, output_root, write_samples) for job in pending]
    if parallelism <= 1:
        results = map(_run_job, payloads)
        for run_dir, error in results:
            done += 1
            if error:
                failures.append((run_dir, error))
            if progress:
                progress(done, len(jobs), run_dir)
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for run_dir, error in pool.map(_run_job, payloads):
                done += 1
                if error:
                    failures.append((run_dir, error))
                if progress:
                    progress(done, len(jobs), run_dir)
    return failures


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

TRIAL_COLUMNS = (
    "strategy", "k_h", "p", "alpha", "q", "trial", "seed",
    "stop_step", "stop_reason", "t_a", "i_w", "classification",
    "i_p_trajectory", "i_h_trajectory",
    "final_rho", "final_i_h", "final_i_p", "final_i_s",
    "auc_i_s", "rewire_count", "rewire_mean_time",
    "closed_triads", "opinion_peaks", "community_count",
    "final_state", "regime_d", "regime_label",
)


@dataclass
class Aggregate:
    rows: list[dict] = field(default_factory=list)

    @property
    def variants(self) -> list[str]:
        return sorted({r["variant_tag"] for r in self.rows})

    def axis(self, name: str) -> list[float]:
        return sorted({r[name] for r in self.rows})

    def cell_rows(self, variant_tag: str, p: float, alpha: float, q: float) -> list[dict]:
        return [
            r for r in self.rows
            if r["variant_tag"] == variant_tag and r["p"] == p
            and r["alpha"] == alpha and r["q"] == q
        ]

    def heatmap(self, metric: str, variant_tag: str, p: float,
                consensual_only: bool = False) -> np.ndarray:
        """Mean of a per-trial metric over each (alpha, q) cell; rows follow
        ascending alpha, columns ascending q. Cells with no usable trials
        (e.g. no consensual run for trajectory metrics) come back NaN."""
        alphas, qs = self.axis("alpha"), self.axis("q")
        out = np.full((len(alphas), len(qs)), np.nan)
        for i, a in enumerate(alphas):
            for j, qv in enumerate(qs):
                rows = self.cell_rows(variant_tag, p, a, qv)
                if consensual_only:
                    rows = [r for r in rows if r["final_state"] == "consensual"]
                vals = [r[metric] for r in rows if r[metric] is not None]
                if vals:
                    out[i, j] = float(np.mean(vals))
        return out


def _find_completed(output_root: Path) -> list[Path]:
    import os

    hits = []
    for dirpath, _dirnames, filenames in os.walk(output_root, followlinks=True):
        if records.DONE_MARKER in filenames:
            hits.append(Path(dirpath))
    return sorted(hits)


def aggregate(output_root: Path) -> Aggregate:
    """Fold all completed run directories under a sweep root into per-trial
    rows (disjoint roots aggregate to the union of their rows)."""
    output_root = Path(output_root)
    agg = Aggregate()
    for run_dir in _find_completed(output_root):
        summary = records.load_summary(run_dir)
        config = records.load_config(run_dir)
        variant = StrategyVariant(config.strategy, config.k_h)
        row = {
            "run_dir": str(run_dir),
            "variant_tag": variant.tag,
            "strategy": config.strategy,
            "k_h": config.k_h,
            "p": config.p,
            "alpha": config.alpha,
            "q": config.q,
            "seed": config.seed,
            "trial": _trial_from_name(run_dir.name),
        }
        for key in ("stop_step", "stop_reason", "t_a", "i_w", "classification",
                    "i_p_trajectory", "i_h_trajectory", "final_rho", "final_i_h",
                    "final_i_p", "final_i_s", "auc_i_s", "rewire_count",
                    "rewire_mean_time", "closed_triads", "opinion_peaks",
                    "community_count", "final_state", "regime_d", "regime_label"):
            row[key] = summary.get(key)
        agg.rows.append(row)
    return agg


def _trial_from_name(name: str) -> int | None:
    if name.startswith("trial"):
        try:
            return int(name[len("trial"):])
        except ValueError:
            return None
    return None


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def write_cells_csv(agg: Aggregate, path: Path) -> None:
    columns = ("variant_tag",) + TRIAL_COLUMNS
    with Path(path).open("w") as fh:
        fh.write(",".join(columns) + "\n")
        ordered = sorted(
            agg.rows,
            key=lambda r: (r["variant_tag"], r["p"], r["alpha"], r["q"], r["trial"] or 0),
        )
        for row in ordered:
            fh.write(",".join(_csv_cell(row.get(c)) for c in columns) + "\n")


def write_heatmap_csv(matrix: np.ndarray, alphas: list[float], qs: list[float],
                      path: Path) -> None:
    with Path(path).open("w") as fh:
        fh.write("alpha\\q," + ",".join(repr(float(q)) for q in qs) + "\n")
        for i, a in enumerate(alphas):
            cells = ",".join(_csv_cell(float(v)) for v in matrix[i])
            fh.write(f"{float(a)!r},{cells}\n")


def write_aggregate_outputs(agg: Aggregate, out_dir: Path) -> list[Path]:
    """cells.csv, per-slice heatmaps (+ pairwise differences), kde_iw.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    cells = out_dir / "cells.csv"
    write_cells_csv(agg, cells)
    written.append(cells)

    alphas, qs = agg.axis("alpha"), agg.axis("q")
    metrics_spec = (("iw", "i_w", False), ("ipt", "i_p_trajectory", True))
    slices = {}
    for tag in agg.variants:
        for p in agg.axis("p"):
            for short, metric, consensual in metrics_spec:
                m = agg.heatmap(metric, tag, p, consensual_only=consensual)
                slices[(short, tag, p)] = m
                path = out_dir / f"heatmap_{short}_{tag}_p{p!r}.csv"
                write_heatmap_csv(m, alphas, qs, path)
                written.append(path)
    tags = agg.variants
    for i, tag_a in enumerate(tags):
        for tag_b in tags[i + 1:]:
            for p in agg.axis("p"):
                for short, _, _ in metrics_spec:
                    diff = slices[(short, tag_a, p)] - slices[(short, tag_b, p)]
                    path = out_dir / f"heatmap_{short}_diff_{tag_a}_minus_{tag_b}_p{p!r}.csv"
                    write_heatmap_csv(diff, alphas, qs, path)
                    written.append(path)

    iw_all = [r["i_w"] for r in agg.rows if r["i_w"] is not None]
    if len(iw_all) >= 2:
        grid, dens_all = kde_pdf(iw_all)
        columns = {"density": dens_all}
        for state in ("consensual", "polarized"):
            vals = [r["i_w"] for r in agg.rows
                    if r["final_state"] == state and r["i_w"] is not None]
            if len(vals) >= 2:
                columns[f"density_{state}"] = kde_pdf(vals, grid)[1]
        path = out_dir / "kde_iw.csv"
        with path.open("w") as fh:
            fh.write("iw," + ",".join(columns) + "\n")
            for k in range(len(grid)):
                vals = ",".join(repr(float(columns[c][k])) for c in columns)
                fh.write(f"{float(grid[k])!r},{vals}\n")
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# density of the pathway index
# ---------------------------------------------------------------------------

def kde_pdf(values, grid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE (Scott's rule) on a 201-point grid over
    [0, max(1.2, max value)], renormalized so the trapezoidal integral over
    the grid is exactly 1 (plain KDE leaks boundary mass off-grid)."""
    vals = np.asarray(values, dtype=np.float64)
    if len(vals) < 2:
        raise ValueError("degenerate sample: need at least 2 values")
    if grid is None:
        grid = np.linspace(0.0, max(1.2, float(vals.max())), 201)
    if float(np.ptp(vals)) < 1e-12:
        # all-equal sample: a narrow spike at the common value
        h = 0.01
        density = np.exp(-0.5 * ((grid - vals[0]) / h) ** 2)
    else:
        density = gaussian_kde(vals)(grid)
    density = density / np.trapezoid(density, grid)
    return grid, density


def kde_modes(grid: np.ndarray, density: np.ndarray,
              floor_fraction: float = 0.05) -> list[float]:
    """Locations of interior local maxima above a fraction of the peak."""
    floor = floor_fraction * float(density.max())
    modes = []
    for i in range(1, len(density) - 1):
        if density[i] >= density[i - 1] and density[i] >= density[i + 1] \
                and (density[i] > density[i - 1] or density[i] > density[i + 1]) \
                and density[i] >= floor:
            modes.append(float(grid[i]))
    return modes


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _log_axis(count: int) -> tuple[float, ...]:
    return tuple(float(v) for v in np.geomspace(0.005, 1.0, count))


PRESETS = {
    # desk-scale grid: fits CI budgets while spanning all balance regimes
    "paper-mini": SweepConfig(
        variants=(StrategyVariant("structure"), StrategyVariant("opinion", 2)),
        p_values=(0.0, 0.1),
        alpha_values=_log_axis(4),
        q_values=_log_axis(4),
        trials=5,
        base_seed=20_240_501,
        n=200,
        max_steps=5_000,
    ),
    # escalation stage between mini and full: a few hours on 8 cores
    "paper-medium": SweepConfig(
        variants=(
            StrategyVariant("structure"),
            StrategyVariant("opinion", 0),
            StrategyVariant("opinion", 2),
        ),
        p_values=(0.0, 0.1),
        alpha_values=_log_axis(6),
        q_values=_log_axis(6),
        trials=8,
        base_seed=20_240_501,
        n=300,
        max_steps=10_000,
        write_samples=False,
    ),
    # the full grid: 4 variants x 4 p x 8 alpha x 8 q = 1,024 scenarios,
    # 20 trials each
    "paper-full": SweepConfig(
        variants=(
            StrategyVariant("structure"),
            StrategyVariant("opinion", 0),
            StrategyVariant("opinion", 2),
            StrategyVariant("opinion", 6),
        ),
        p_values=(0.0, 0.1, 0.25, 0.5),
        alpha_values=_log_axis(8),
        q_values=_log_axis(8),
        trials=20,
        base_seed=20_240_501,
        n=500,
        max_steps=20_000,
        write_samples=False,
    ),
}
