"""FastAPI application: experiment endpoints and live-session plumbing.

Experiment requests are CPU-bound, deterministic and self-contained; a
process-wide lock serializes them so concurrent clients cannot interleave
runs. The websocket telemetry channel is bidirectional: the server streams
simulator messages out and accepts command/control messages back on the
same connection.
"""
from __future__ import annotations

import asyncio
import threading
from importlib.metadata import version as pkg_version

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from ..harness import (
    ExperimentConfig,
    bundle_for,
    run_map_eval,
    run_target_course,
)
from ..harness.reports import metrics_to_dict, replay_metrics
from ..mapping import save_bundle
from ..scenes import get_scene
from .models import (
    BuildMapsRequest,
    ControlRequest,
    CourseRequest,
    MapEvalRequest,
    ReplayRequest,
    SessionRequest,
)
from .session import SessionRegistry

_experiment_lock = threading.Lock()


def create_app(registry: SessionRegistry | None = None) -> FastAPI:
    app = FastAPI(title="teleosim", version=pkg_version("teleosim"))
    app.state.registry = registry if registry is not None else SessionRegistry()

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": app.version}

    @app.post("/maps/build")
    def build_maps(req: BuildMapsRequest) -> dict:
        try:
            scene = get_scene(req.scene)
        except FileNotFoundError as e:
            raise HTTPException(404, str(e))
        with _experiment_lock:
            bundle = bundle_for(scene)
        out = None
        if req.out is not None:
            from pathlib import Path

            target = Path(req.out)
            if target.exists() and any(target.iterdir()) and not req.force:
                raise HTTPException(409, f"{target} exists; pass force")
            save_bundle(bundle, target)
            out = str(target)
        return {"scene": scene.name, "meta": bundle.meta, "out": out}

    @app.post("/experiments/map-eval")
    def map_eval(req: MapEvalRequest) -> dict:
        cfg = ExperimentConfig(scene=req.scene, seed=req.seed,
                               mode="random-commands",
                               n_commands=req.n_commands)
        with _experiment_lock:
            rows = run_map_eval(cfg)
        return {"rows": rows}

    @app.post("/experiments/course")
    def course(req: CourseRequest) -> dict:
        cfg = ExperimentConfig(scene=req.scene, seed=req.seed,
                               nav_map=req.nav_map, operator=req.operator,
                               control=req.control,
                               course_timeout=req.course_timeout)
        with _experiment_lock:
            metrics, log = run_target_course(cfg)
        return {"metrics": metrics_to_dict(metrics), "log": log}

    @app.post("/replay")
    def replay(req: ReplayRequest) -> dict:
        try:
            metrics = replay_metrics(req.events)
        except (KeyError, ValueError) as e:
            raise HTTPException(422, f"bad replay log: {e}")
        return {"metrics": metrics_to_dict(metrics)}

    # -- live sessions -------------------------------------------------------

    @app.post("/sessions")
    async def create_session(req: SessionRequest) -> dict:
        registry: SessionRegistry = app.state.registry
        try:
            session = registry.create(
                scene_ref=req.scene, seed=req.seed, nav_map=req.nav_map,
                control=req.control, input_mode=req.input_mode)
        except FileNotFoundError as e:
            raise HTTPException(404, str(e))
        session.start_task()
        return session.state()

    @app.get("/sessions")
    def list_sessions() -> dict:
        registry: SessionRegistry = app.state.registry
        return {"sessions": [s.state() for s in registry.sessions.values()]}

    def _session(session_id: str):
        try:
            return app.state.registry.get(session_id)
        except KeyError as e:
            raise HTTPException(404, str(e))

    @app.get("/sessions/{session_id}/state")
    def session_state(session_id: str) -> dict:
        return _session(session_id).state()

    @app.get("/sessions/{session_id}/map")
    def session_map(session_id: str) -> dict:
        return _session(session_id).map_raster()

    @app.get("/sessions/{session_id}/events")
    def session_events(session_id: str, since: int = 0) -> dict:
        events = _session(session_id).events
        return {"since": since, "total": len(events),
                "events": events[since:]}

    @app.post("/sessions/{session_id}/control")
    def session_control(session_id: str, req: ControlRequest) -> dict:
        try:
            return _session(session_id).control(req.action, req.mode)
        except ValueError as e:
            raise HTTPException(422, str(e))

    @app.delete("/sessions/{session_id}")
    async def delete_session(session_id: str) -> dict:
        registry: SessionRegistry = app.state.registry
        try:
            await registry.remove(session_id)
        except KeyError as e:
            raise HTTPException(404, str(e))
        return {"deleted": session_id}

    @app.websocket("/telemetry")
    async def telemetry(ws: WebSocket, session: str) -> None:
        registry: SessionRegistry = app.state.registry
        try:
            live = registry.get(session)
        except KeyError:
            await ws.close(code=4004)
            return
        await ws.accept()
        queue = live.subscribe()
        # the map goes first so the console can draw before the stream starts
        await ws.send_json(live.map_raster())
        await ws.send_json({"v": 1, "type": "session", **live.state()})

        async def pump_out():
            while True:
                msg = await queue.get()
                await ws.send_json(msg)

        out_task = asyncio.get_running_loop().create_task(pump_out())
        try:
            while True:
                msg = await ws.receive_json()
                kind = msg.get("type")
                if kind == "command":
                    ok = (msg.get("dir") in ("left", "right")
                          and live.push_console(msg["dir"],
                                                int(msg.get("seq", 0))))
                    await ws.send_json({"v": 1, "type": "command_ack",
                                        "seq": msg.get("seq"),
                                        "accepted": bool(ok)})
                elif kind == "control":
                    try:
                        state = live.control(msg.get("action"),
                                             msg.get("mode"))
                        await ws.send_json({"v": 1, "type": "ack",
                                            "id": msg.get("id"),
                                            "ok": True, "state": state})
                    except ValueError as e:
                        await ws.send_json({"v": 1, "type": "ack",
                                            "id": msg.get("id"),
                                            "ok": False, "error": str(e)})
                else:
                    await ws.send_json({"v": 1, "type": "error",
                                        "error": f"unknown type {kind!r}"})
        except WebSocketDisconnect:
            pass
        finally:
            out_task.cancel()
            live.unsubscribe(queue)

    @app.on_event("shutdown")
    async def shutdown() -> None:
        await app.state.registry.close_all()

    return app
