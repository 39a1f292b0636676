"""Live simulation sessions behind a JSON wire protocol.

One session wraps one Simulation. An operator can pause, resume (the
stepping loop is capped at the session tick rate), advance exact step
counts, and queue interventions (strategy switches, p/q/alpha changes) that
take effect at the next step boundary. Index messages stream over a
WebSocket; every value on the wire is exactly what the metrics module
computes from the same state, and the recorded (config, seed, intervention
log) triple replays byte-identically through the offline runner.

Protocol (all messages carry ``"v": 1``; documented in docs/protocol.md):

* ``POST /session``                 -> create; body {"config": {...}, "seed": int?}
* ``POST /session/{id}/control``    -> {"action": "resume" | "pause" | "step_n", "n": int?}
* ``POST /session/{id}/intervene``  -> {"kind": "set_strategy" | "set_param", ...,
  "idempotency_key": str?}
* ``GET  /session/{id}/snapshot``   -> full state view
* ``POST /session/{id}/persist``    -> write the run directory (finished sessions)
* ``WS   /session/{id}/stream``     -> index messages; the latest message is
  replayed to late joiners, then updates follow in step order
"""

from __future__ import annotations

import asyncio
import itertools
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import metrics, records
from .config import ConfigError, ScenarioConfig
from .core import Simulation

PROTOCOL_VERSION = 1
DEFAULT_TICK_RATE = 50.0     # steps/second cap while running
RUNNING_REPORT_EVERY = 10    # steps per index message while running
HISTOGRAM_BINS = 50


class CreateSessionBody(BaseModel):
    config: dict
    seed: int | None = None
    tick_rate: float | None = None


class ControlBody(BaseModel):
    action: str
    n: int | None = None


class InterveneBody(BaseModel):
    kind: str
    strategy: str | None = None
    k_h: int | None = None
    name: str | None = None
    value: float | None = None
    idempotency_key: str | None = None


class PersistBody(BaseModel):
    out: str


class Session:
    def __init__(self, session_id: str, sim: Simulation, tick_rate: float):
        self.id = session_id
        self.sim = sim
        self.mode = "paused"
        self.tick_rate = tick_rate
        self.lock = asyncio.Lock()
        self.subscribers: list[asyncio.Queue] = []
        self.latest_message: dict | None = None
        self.rewires_since_report = 0
        self.idempotency: dict[str, dict] = {}
        self._loop_task: asyncio.Task | None = None
        self._publish_indices()

    # -- messages ----------------------------------------------------------

    def _indices_message(self) -> dict:
        sim = self.sim
        t = sim.step_index
        hist, _ = np.histogram(sim.x, bins=HISTOGRAM_BINS, range=(-1.0, 1.0))
        i_w = 0.0
        if t >= 1:
            traj = np.column_stack([sim.series_ip, sim.series_ih])
            i_w = metrics.pathway_index(traj)
        message = {
            "v": PROTOCOL_VERSION,
            "type": "indices",
            "step": t,
            "mode": self.mode,
            "rho": sim.series_rho[t],
            "i_h": sim.series_ih[t],
            "i_p": sim.series_ip[t],
            "i_s": sim.series_is[t],
            "i_w_running": i_w,
            "opinion_hist": hist.tolist(),
            "rewires_delta": self.rewires_since_report,
        }
        self.rewires_since_report = 0
        return message

    def _publish_indices(self) -> None:
        self.latest_message = self._indices_message()
        self._broadcast(self.latest_message)

    def _broadcast(self, message: dict) -> None:
        for queue in list(self.subscribers):
            queue.put_nowait(message)

    def _finish(self) -> None:
        self.mode = "finished"
        self._publish_indices()
        self._broadcast({
            "v": PROTOCOL_VERSION,
            "type": "finished",
            "step": self.sim.step_index,
            "stop_reason": self.sim.stop_reason,
        })

    # -- stepping ----------------------------------------------------------

    def step_block(self, n: int) -> None:
        """Advance exactly n steps (or to completion), reporting every step."""
        for _ in range(n):
            if self.sim.finished:
                break
            record = self.sim.step()
            self.rewires_since_report += record.rewire_count
            self._publish_indices()
        if self.sim.finished and self.mode != "finished":
            self._finish()

    async def run_loop(self) -> None:
        interval = 1.0 / self.tick_rate if self.tick_rate > 0 else 0.0
        while self.mode == "running" and not self.sim.finished:
            async with self.lock:
                if self.mode != "running":
                    break
                record = self.sim.step()
                self.rewires_since_report += record.rewire_count
                if self.sim.finished or self.sim.step_index % RUNNING_REPORT_EVERY == 0:
                    self._publish_indices()
            await asyncio.sleep(interval)
        if self.sim.finished:
            async with self.lock:
                if self.mode != "finished":
                    self._finish()

    def snapshot(self) -> dict:
        sim = self.sim
        t = sim.step_index
        return {
            "v": PROTOCOL_VERSION,
            "id": self.id,
            "mode": self.mode,
            "step": t,
            "stop_reason": sim.stop_reason,
            "opinions": [float(v) for v in sim.x],
            "graph": {
                "offsets": sim.graph.offsets.tolist(),
                "targets": sim.graph.targets.tolist(),
            },
            "params": {
                "alpha": sim.alpha,
                "q": sim.q,
                "p": sim.p,
                "strategy": sim.strategy,
                "k_h": sim.k_h,
            },
            "indices": {
                "rho": sim.series_rho[t],
                "i_h": sim.series_ih[t],
                "i_p": sim.series_ip[t],
                "i_s": sim.series_is[t],
            },
            "intervention_count": len(sim.interventions),
        }


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"v": PROTOCOL_VERSION, "ok": False, "error": message},
    )


def create_app(output_root: Path | None = None,
               console_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="echo-pathways live sessions")
    sessions: dict[str, Session] = {}
    counter = itertools.count(1)
    ids_lock = threading.Lock()
    app.state.sessions = sessions

    if console_dir is not None and Path(console_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True),
                  name="console")

    def get(session_id: str) -> Session | None:
        return sessions.get(session_id)

    @app.post("/session", status_code=201)
    async def create_session(body: CreateSessionBody):
        try:
            config = ScenarioConfig.from_json_dict(body.config)
            if body.seed is not None:
                config = config.with_overrides({"seed": body.seed})
        except (ConfigError, TypeError) as exc:
            return _error(422, str(exc))
        with ids_lock:
            session_id = f"s{next(counter):04d}"
        tick = body.tick_rate if body.tick_rate and body.tick_rate > 0 else DEFAULT_TICK_RATE
        sessions[session_id] = Session(session_id, Simulation(config), tick)
        return {
            "v": PROTOCOL_VERSION,
            "ok": True,
            "id": session_id,
            "mode": "paused",
            "step": 0,
        }

    @app.post("/session/{session_id}/control")
    async def control(session_id: str, body: ControlBody):
        session = get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        async with session.lock:
            if body.action == "pause":
                if session.mode == "running":
                    session.mode = "paused"
                return {"v": PROTOCOL_VERSION, "ok": True,
                        "mode": session.mode, "step": session.sim.step_index}
            if body.action == "resume":
                if session.mode == "finished":
                    return {"v": PROTOCOL_VERSION, "ok": True, "mode": "finished",
                            "step": session.sim.step_index,
                            "note": "session already finished; no steps taken"}
                if session.mode != "running":
                    session.mode = "running"
                    session._loop_task = asyncio.create_task(session.run_loop())
                return {"v": PROTOCOL_VERSION, "ok": True,
                        "mode": session.mode, "step": session.sim.step_index}
            if body.action == "step_n":
                if session.mode == "running":
                    return _error(409, "pause the session before step_n")
                if session.mode == "finished":
                    return _error(409, "session already finished")
                if body.n is None or body.n < 0:
                    return _error(422, "step_n needs n >= 0")
                session.step_block(body.n)
                return {"v": PROTOCOL_VERSION, "ok": True,
                        "mode": session.mode, "step": session.sim.step_index}
        return _error(422, f"unknown action {body.action!r}")

    @app.post("/session/{session_id}/intervene")
    async def intervene(session_id: str, body: InterveneBody):
        session = get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        key = body.idempotency_key
        if key is not None and key in session.idempotency:
            return session.idempotency[key]
        async with session.lock:
            if session.mode == "finished":
                return _error(409, "session already finished")
            if body.kind == "set_strategy":
                payload = {"strategy": body.strategy, "k_h": body.k_h}
                payload = {k: v for k, v in payload.items() if v is not None}
            elif body.kind == "set_param":
                payload = {"name": body.name, "value": body.value}
            else:
                return _error(422, f"unknown intervention kind {body.kind!r}")
            try:
                event = session.sim.apply_intervention(body.kind, payload)
            except (ConfigError, ValueError) as exc:
                return _error(422, str(exc))
            ack = {
                "v": PROTOCOL_VERSION,
                "ok": True,
                "effective_step": event.step,
                "kind": event.kind,
                "payload": event.payload,
            }
            if key is not None:
                session.idempotency[key] = ack
            return ack

    @app.get("/session/{session_id}/snapshot")
    async def snapshot(session_id: str):
        session = get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        async with session.lock:
            return session.snapshot()

    @app.post("/session/{session_id}/persist")
    async def persist(session_id: str, body: PersistBody):
        session = get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        async with session.lock:
            if not session.sim.finished:
                return _error(409, "session is not finished")
            out = Path(body.out)
            if output_root is not None and not out.is_absolute():
                out = Path(output_root) / out
            record = session.sim.build_record()
            records.persist(record, out)
            return {"v": PROTOCOL_VERSION, "ok": True, "out": str(out)}

    @app.websocket("/session/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        session = get(session_id)
        await websocket.accept()
        if session is None:
            await websocket.send_json(
                {"v": PROTOCOL_VERSION, "type": "error",
                 "error": f"unknown session {session_id}"}
            )
            await websocket.close()
            return
        queue: asyncio.Queue = asyncio.Queue()
        session.subscribers.append(queue)
        try:
            if session.latest_message is not None:
                await websocket.send_json(session.latest_message)
            while True:
                message = await queue.get()
                await websocket.send_json(message)
        except WebSocketDisconnect:
            pass
        finally:
            if queue in session.subscribers:
                session.subscribers.remove(queue)

    return app


app = create_app()
