"""Command line entry point.

Subcommands: ``run`` (one scenario), ``sweep`` (a grid or preset),
``analyze`` (tables and figures for a run or sweep root), ``landscape``
(potential curves for one run), ``serve`` (live session service).

Exit codes: 0 success, 1 runtime failure, 2 configuration/validation
failure. CSV tables are the normative outputs; PNG figures are a
convenience layer over them. ``ECHO_PATHWAYS_OUT`` provides the default
output root.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import landscape as landscape_mod
from . import records, sweep as sweep_mod
from .config import ConfigError, ScenarioConfig, parse_override
from .core import run

_PNG_META = {"metadata": {"Software": None}}  # byte-identical reruns

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _default_out() -> Path:
    return Path(os.environ.get("ECHO_PATHWAYS_OUT", "out"))


def _overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs or []:
        key, value = parse_override(pair)
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = ScenarioConfig.load(Path(args.config))
        overrides = _overrides(args.override)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if overrides:
            config = config.with_overrides(overrides)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else _default_out() / "run"
    record = run(config, engine=args.engine)
    summary = records.persist(record, out)
    print(
        f"T={record.stop_step} stop={record.stop_reason} "
        f"I_w={summary['i_w']:.4f} t_a={summary['t_a']} "
        f"class={summary['classification']} out={out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        if args.preset:
            if args.preset not in sweep_mod.PRESETS:
                raise ConfigError("preset", f"unknown preset {args.preset!r}")
            config = sweep_mod.PRESETS[args.preset]
        elif args.config:
            config = sweep_mod.SweepConfig.load(Path(args.config))
        else:
            raise ConfigError("config", "need --config or --preset")
        jobs = sweep_mod.expand_grid(config)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"error: invalid sweep configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else _default_out() / "sweep"
    parallelism = args.parallelism or config.parallelism or 1
    write_samples = config.write_samples and not args.no_samples

    def progress(done: int, total: int, what: str) -> None:
        if args.verbose:
            print(f"[{done}/{total}] {what}")

    failures = sweep_mod.execute(
        jobs, out, parallelism=parallelism,
        write_samples=write_samples, progress=progress,
    )
    print(f"sweep: {len(jobs)} jobs, {len(failures)} failures, out={out}")
    for run_dir, error in failures:
        print(f"FAILED {run_dir}\n{error}", file=sys.stderr)
    return EXIT_RUNTIME if failures else EXIT_OK


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _analyze_single(run_dir: Path, out: Path) -> int:
    series = records.load_series(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    steps = series["step"].astype(int)
    with (out / "phase_plane.csv").open("w") as fh:
        fh.write("step,I_p,I_h\n")
        for k in range(len(steps)):
            fh.write(f"{steps[k]},{series['I_p'][k]!r},{series['I_h'][k]!r}\n")
    summary = records.load_summary(run_dir)
    (out / "pathway_summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n"
    )

    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for name in ("rho", "I_h", "I_p", "I_s"):
        axes[0].plot(steps, series[name], label=name)
    axes[0].set_xlabel("step")
    axes[0].legend()
    axes[0].set_title("index time series")
    axes[1].plot(series["I_p"], series["I_h"], "-", lw=1)
    axes[1].scatter([series["I_p"][-1]], [series["I_h"][-1]], c="red", zorder=3)
    axes[1].set_xlabel("I_p")
    axes[1].set_ylabel("I_h")
    axes[1].set_title(f"phase plane (I_w={summary['i_w']:.3f})")
    fig.tight_layout()
    fig.savefig(out / "phase_plane.png", **_PNG_META)
    plt.close(fig)
    print(f"analyze: run {run_dir} -> {out}")
    return EXIT_OK


def _analyze_sweep(root: Path, out: Path) -> int:
    agg = sweep_mod.aggregate(root)
    if not agg.rows:
        print(f"error: no completed runs under {root}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    written = sweep_mod.write_aggregate_outputs(agg, out)

    alphas, qs = agg.axis("alpha"), agg.axis("q")
    for tag in agg.variants:
        for p in agg.axis("p"):
            matrix = agg.heatmap("i_w", tag, p)
            fig, ax = plt.subplots(figsize=(5, 4))
            im = ax.imshow(matrix, origin="lower", aspect="auto",
                           vmin=0, vmax=max(1.0, np.nanmax(matrix)))
            ax.set_xticks(range(len(qs)), [f"{v:.3g}" for v in qs], rotation=45)
            ax.set_yticks(range(len(alphas)), [f"{v:.3g}" for v in alphas])
            ax.set_xlabel("q")
            ax.set_ylabel("alpha")
            ax.set_title(f"pathway index: {tag}, p={p:g}")
            fig.colorbar(im)
            fig.tight_layout()
            fig.savefig(out / f"heatmap_iw_{tag}_p{p!r}.png", **_PNG_META)
            plt.close(fig)

    kde_path = out / "kde_iw.csv"
    if kde_path.exists():
        table = np.genfromtxt(kde_path, delimiter=",", names=True)
        fig, ax = plt.subplots(figsize=(6, 4))
        for name in table.dtype.names[1:]:
            ax.plot(table["iw"], table[name], label=name)
        ax.set_xlabel("pathway index")
        ax.set_ylabel("density")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "kde_iw.png", **_PNG_META)
        plt.close(fig)
    print(f"analyze: sweep {root} -> {out} ({len(written)} tables)")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    target = Path(args.input)
    if not target.exists():
        print(f"error: no such input {target}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else _default_out() / "analysis"
    if (target / "config.json").is_file():
        if not records.is_complete(target):
            print(f"error: run at {target} is incomplete", file=sys.stderr)
            return EXIT_CONFIG
        return _analyze_single(target, out)
    return _analyze_sweep(target, out)


# ---------------------------------------------------------------------------
# landscape
# ---------------------------------------------------------------------------

def cmd_landscape(args: argparse.Namespace) -> int:
    run_dir = Path(args.input)
    if not (run_dir / "samples.csv").is_file():
        print(f"error: {run_dir} has no samples.csv", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else _default_out() / "landscape"
    samples = landscape_mod.samples_from_run_dir(run_dir, source=args.source)
    out.mkdir(parents=True, exist_ok=True)
    if len(samples) == 0:
        print(f"warning: no {args.source} samples in {run_dir}; nothing to fit")
        landscape_mod.write_landscape_csv([], out / "landscape.csv")
        return EXIT_OK
    curves = landscape_mod.landscape_over_time(samples)
    landscape_mod.write_landscape_csv(curves, out / "landscape.csv")
    sparse = sum(1 for c in curves if c.sparse)
    if sparse:
        print(f"warning: {sparse}/{len(curves)} time bins are sparse (< "
              f"{landscape_mod.SPARSE_BIN_SAMPLES} samples)")

    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    cmap = plt.get_cmap("viridis")
    dense = [c for c in curves if not c.sparse]
    for idx, curve in enumerate(dense):
        color = cmap(idx / max(len(dense) - 1, 1))
        label = f"t_n in [{curve.time_bin[0]:.1f}, " + (
            "inf)" if np.isinf(curve.time_bin[1]) else f"{curve.time_bin[1]:.1f})"
        )
        ax.plot(curve.grid, curve.v, color=color, label=label, lw=1.2)
    ax.set_xlabel("opinion")
    ax.set_ylabel("potential")
    ax.set_title(f"potential landscape ({args.source} forces)")
    if dense:
        ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(out / "landscape.png", **_PNG_META)
    plt.close(fig)
    print(f"landscape: {run_dir} -> {out} ({len(dense)} dense bins)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

def _find_console_dir() -> Path | None:
    # editable install layout: <repo>/src/echo_pathways/cli.py -> <repo>/frontend
    candidate = Path(__file__).resolve().parents[2] / "frontend"
    return candidate if (candidate / "index.html").is_file() else None


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    out = Path(args.out) if args.out else _default_out() / "sessions"
    console = Path(args.console) if args.console else _find_console_dir()
    app = create_app(output_root=out, console_dir=console)
    if console:
        print(f"operator console at http://{args.host}:{args.port}/console/")
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echo-pathways",
        description="opinion dynamics on a rewiring follower network",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario")
    p_run.add_argument("--config", required=True, help="scenario JSON file")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--override", action="append", metavar="KEY=VALUE")
    p_run.add_argument("--engine", choices=("fast", "reference"), default="fast")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="execute a scenario grid")
    p_sweep.add_argument("--config", default=None, help="sweep JSON file")
    p_sweep.add_argument("--preset", default=None,
                         choices=sorted(sweep_mod.PRESETS))
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--parallelism", type=int, default=None)
    p_sweep.add_argument("--no-samples", action="store_true",
                         help="skip samples.csv in job outputs")
    p_sweep.add_argument("--verbose", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_an = sub.add_parser("analyze", help="tables and figures for outputs")
    p_an.add_argument("--in", dest="input", required=True,
                      help="run directory or sweep root")
    p_an.add_argument("--out", default=None)
    p_an.set_defaults(func=cmd_analyze)

    p_land = sub.add_parser("landscape", help="potential landscape of one run")
    p_land.add_argument("--in", dest="input", required=True, help="run directory")
    p_land.add_argument("--out", default=None)
    p_land.add_argument("--source", choices=("nod", "fod"), default="nod")
    p_land.set_defaults(func=cmd_landscape)

    p_serve = sub.add_parser("serve", help="live session service")
    p_serve.add_argument("--port", type=int, default=8700)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--out", default=None)
    p_serve.add_argument("--console", default=None,
                         help="path to the operator console (frontend dir)")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure contract
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
