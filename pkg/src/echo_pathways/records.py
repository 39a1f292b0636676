"""Run-record persistence.

A finished run is a directory:

* ``config.json``   - scenario config, schema-versioned
* ``series.csv``    - step, rho, I_h, I_p, I_s (one row per step, 0..T)
* ``events.jsonl``  - one type-tagged event per line, ordered by step
* ``opinions.bin``  - opinion snapshots; header: magic ``EHKM``, version u16,
  n u32, snapshot-count u32, stride u32 (little-endian), then row-major
  float32. Snapshots sit at steps 0, stride, 2*stride, ...; the final step is
  appended when the stride does not divide T. Runs with T <= 2000 snapshot
  every step (stride 1).
* ``samples.csv``   - t_n, x, nod, fod: per snapshot row and agent, the
  normalized time, opinion, realized opinion shift divided by
  (alpha * stride) (empty on the ragged last gap or when alpha = 0), and the
  mean concordant-followee deviation (empty where no followee was concordant).
* ``summary.json``  - derived per-run metrics (pathway, activity time,
  structure counts); this is what sweep aggregation consumes.
* ``DONE``          - terminal marker; its presence marks the directory
  complete and resumable sweeps skip it.

All writers are byte-deterministic: identical records produce identical
files.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from . import metrics
from .config import ScenarioConfig
from .core import InterventionEvent, RewireEvent, RunRecord, SNAPSHOT_BUDGET

OPINIONS_MAGIC = b"EHKM"
OPINIONS_VERSION = 1
DONE_MARKER = "DONE"

_FILES = ("config.json", "series.csv", "events.jsonl", "opinions.bin", "samples.csv",
          "summary.json", DONE_MARKER)


def _fmt(value: float) -> str:
    """Shortest round-trip decimal form; '' for missing values."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def snapshot_steps(stop_step: int, budget: int = SNAPSHOT_BUDGET) -> tuple[list[int], int]:
    """(steps, stride) of the persisted snapshot schedule for a run length."""
    stride = 1 if stop_step <= budget else math.ceil(stop_step / budget)
    steps = list(range(0, stop_step + 1, stride))
    if steps[-1] != stop_step:
        steps.append(stop_step)
    return steps, stride


# ---------------------------------------------------------------------------
# writing
# ---------------------------------------------------------------------------

def _write_series(record: RunRecord, path: Path) -> None:
    lines = ["step,rho,I_h,I_p,I_s"]
    for t in range(record.stop_step + 1):
        lines.append(
            f"{t},{_fmt(record.rho[t])},{_fmt(record.i_h[t])},"
            f"{_fmt(record.i_p[t])},{_fmt(record.i_s[t])}"
        )
    path.write_text("\n".join(lines) + "\n")


def _event_to_dict(event) -> dict:
    if isinstance(event, RewireEvent):
        return {
            "type": "rewire",
            "step": event.step,
            "agent": event.agent,
            "unfollowed": event.unfollowed,
            "followed": event.followed,
        }
    if isinstance(event, InterventionEvent):
        d = {"type": "intervention", "step": event.step, "kind": event.kind}
        d.update(event.payload)
        return d
    raise TypeError(f"unknown event type {type(event)!r}")


def _event_from_dict(d: dict):
    if d["type"] == "rewire":
        return RewireEvent(d["step"], d["agent"], d["unfollowed"], d["followed"])
    if d["type"] == "intervention":
        payload = {k: v for k, v in d.items() if k not in ("type", "step", "kind")}
        return InterventionEvent(d["step"], d["kind"], payload)
    raise ValueError(f"unknown event type {d['type']!r}")


def _write_events(record: RunRecord, path: Path) -> None:
    with path.open("w") as fh:
        for event in record.events:
            fh.write(json.dumps(_event_to_dict(event), sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def _write_opinions(record: RunRecord, path: Path) -> None:
    steps, stride = snapshot_steps(record.stop_step)
    rows = record.opinions[steps].astype(np.float32)
    header = OPINIONS_MAGIC + struct.pack(
        "<HIII", OPINIONS_VERSION, record.opinions.shape[1], len(steps), stride
    )
    with path.open("wb") as fh:
        fh.write(header)
        fh.write(rows.astype("<f4").tobytes(order="C"))


def _write_samples(record: RunRecord, path: Path, t_a: int) -> None:
    steps, stride = snapshot_steps(record.stop_step)
    rows = record.opinions[steps]
    n = rows.shape[1]
    alpha = record.config.alpha
    t_eff = max(t_a, 1)
    with path.open("w") as fh:
        fh.write("t_n,x,nod,fod\n")
        for k, step in enumerate(steps):
            uniform_next = k + 1 < len(steps) and steps[k + 1] - step == stride
            t_n = step / t_eff
            t_n_text = _fmt(t_n)
            for agent in range(n):
                x = float(rows[k, agent])
                nod = ""
                if uniform_next and alpha > 0:
                    nod = _fmt((float(rows[k + 1, agent]) - x) / (alpha * stride))
                fod = ""
                if step < record.fod.shape[0]:
                    fod = _fmt(float(record.fod[step, agent]))
                fh.write(f"{t_n_text},{_fmt(x)},{nod},{fod}\n")


def summarize(record: RunRecord) -> dict:
    """Derived per-run metrics, as persisted in summary.json."""
    pathway = metrics.pathway_summary(record.i_p, record.i_h, record.i_s, record.stop_step)
    t_eff = max(pathway.t_a, 1)
    rewire_steps = [e.step for e in record.events if isinstance(e, RewireEvent)]
    count, mean_time = metrics.rewiring_stats(rewire_steps, t_eff)
    peaks = metrics.opinion_peaks(record.final_opinions)
    d, label = metrics.regime(record.config.alpha, record.config.q) \
        if record.config.alpha > 0 and record.config.q > 0 else (None, None)
    return {
        "schema_version": 1,
        "stop_step": record.stop_step,
        "stop_reason": record.stop_reason,
        "baseline_rho": record.baseline,
        "t_a": pathway.t_a,
        "i_w": pathway.i_w,
        "classification": pathway.classification,
        "i_p_trajectory": pathway.i_p_trajectory,
        "i_h_trajectory": pathway.i_h_trajectory,
        "final_rho": float(record.rho[-1]),
        "final_i_h": float(record.i_h[-1]),
        "final_i_p": float(record.i_p[-1]),
        "final_i_s": float(record.i_s[-1]),
        "auc_i_s": metrics.auc_subjective(record.i_s, t_eff),
        "rewire_count": count,
        "rewire_mean_time": mean_time,
        "closed_triads": metrics.closed_triads(record.final_graph),
        "opinion_peaks": peaks,
        "community_count": metrics.community_count(record.final_graph),
        "final_state": "consensual" if peaks == 1 else "polarized",
        "regime_d": d,
        "regime_label": label,
        "intervention_count": sum(
            1 for e in record.events if isinstance(e, InterventionEvent)
        ),
    }


def persist(record: RunRecord, out_dir: Path, write_samples: bool = True) -> dict:
    """Write the full run directory; returns the summary dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record.config.save(out_dir / "config.json")
    _write_series(record, out_dir / "series.csv")
    _write_events(record, out_dir / "events.jsonl")
    _write_opinions(record, out_dir / "opinions.bin")
    summary = summarize(record)
    if write_samples:
        _write_samples(record, out_dir / "samples.csv", summary["t_a"])
    (out_dir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n"
    )
    (out_dir / DONE_MARKER).write_text('{"schema_version":1}\n')
    return summary


def is_complete(run_dir: Path) -> bool:
    return (Path(run_dir) / DONE_MARKER).is_file()


# ---------------------------------------------------------------------------
# reading
# ---------------------------------------------------------------------------

def load_config(run_dir: Path) -> ScenarioConfig:
    return ScenarioConfig.load(Path(run_dir) / "config.json")


def load_series(run_dir: Path) -> dict[str, np.ndarray]:
    raw = np.genfromtxt(Path(run_dir) / "series.csv", delimiter=",", names=True)
    raw = np.atleast_1d(raw)
    return {name: np.asarray(raw[name], dtype=np.float64) for name in raw.dtype.names}


def load_events(run_dir: Path) -> list:
    events = []
    path = Path(run_dir) / "events.jsonl"
    if not path.exists():
        return events
    for line in path.read_text().splitlines():
        if line.strip():
            events.append(_event_from_dict(json.loads(line)))
    return events


def load_opinions(run_dir: Path) -> tuple[np.ndarray, np.ndarray, int]:
    """(snapshot steps, float32 matrix [count, n], stride)."""
    blob = (Path(run_dir) / "opinions.bin").read_bytes()
    if blob[:4] != OPINIONS_MAGIC:
        raise ValueError("bad opinions.bin magic")
    version, n, count, stride = struct.unpack("<HIII", blob[4:18])
    if version != OPINIONS_VERSION:
        raise ValueError(f"unsupported opinions.bin version {version}")
    rows = np.frombuffer(blob[18:], dtype="<f4").reshape(count, n)
    series = load_series(run_dir)
    stop_step = int(series["step"][-1])
    steps, expected_stride = snapshot_steps(stop_step)
    if expected_stride != stride or len(steps) != count:
        raise ValueError("opinions.bin inconsistent with series.csv")
    return np.asarray(steps), rows, stride


def load_samples(run_dir: Path) -> np.ndarray:
    """Structured array with fields t_n, x, nod, fod (NaN where empty)."""
    return np.atleast_1d(np.genfromtxt(
        Path(run_dir) / "samples.csv", delimiter=",", names=True,
    ))


def load_summary(run_dir: Path) -> dict:
    return json.loads((Path(run_dir) / "summary.json").read_text())
