"""Live simulation sessions for serve mode.

A session owns one SimRun advanced in wall time by an asyncio task. It is
the sole consumer of a bounded command queue fed from two directions: raw
CommandPackets over UDP (the decoder path) and {"type":"command"} messages
from console clients, which are re-encoded through the same packet codec so
both paths share validation and duplicate filtering. Telemetry fans out to
per-subscriber queues that drop their oldest entry rather than block the
tick loop.
"""
from __future__ import annotations

import asyncio
import itertools
import math
import time
from typing import Any

from ..harness import SimConfig, SimRun, bundle_for
from ..net import CommandReceiver, encode
from ..scenes import get_scene

SUBSCRIBER_QUEUE = 256

_session_ids = itertools.count(1)


class LiveSession:
    """One interactive run; tick pacing happens in start()'s task."""

    def __init__(self, scene_ref: str, seed: int, nav_map: str = "projected",
                 control: str = "shared", input_mode: str = "manual"):
        if input_mode not in ("manual", "bci"):
            raise ValueError(f"unknown input mode {input_mode!r}")
        self.id = f"s{next(_session_ids)}"
        self.scene_ref = scene_ref
        self.seed = seed
        self.nav_map = nav_map
        self.control = control
        self.input_mode = input_mode
        self.scene = get_scene(scene_ref)
        self.bundle = bundle_for(self.scene)
        self.receiver = CommandReceiver()
        self.paused = True
        self.finished = False
        self._archive: list[dict] = []
        self._subscribers: list[asyncio.Queue] = []
        self._task: asyncio.Task | None = None
        self._seq = itertools.count(1)   # server-side re-encoding counter
        self.sim = self._make_sim(start="S", face_first_target=True)

    def _make_sim(self, start: str, face_first_target: bool) -> SimRun:
        sx, sy = self.scene.targets[start]
        heading = 0.0
        if face_first_target and "T1" in self.scene.targets:
            tx, ty = self.scene.targets["T1"]
            heading = math.atan2(ty - sy, tx - sx)
        return SimRun(self.scene, self.bundle, self.seed,
                      SimConfig(nav_map=self.nav_map, control=self.control),
                      start_pose=(sx, sy, heading), telemetry=self._broadcast)

    # -- input paths -------------------------------------------------------

    def push_udp(self, datagram: bytes) -> bool:
        """Decoder path; accepted only while input mode is 'bci'."""
        if self.input_mode != "bci":
            return False
        return self.receiver.push_datagram(datagram) is not None

    def push_console(self, direction: str, seq: int) -> bool:
        """Console path; the message is re-encoded as a wire packet so it
        passes the same validation and dedupe as the UDP path."""
        if self.input_mode != "manual":
            return False
        stamp_ms = int(self.sim.clock * 1000.0)
        data = encode(direction, "manual", seq % (1 << 16), stamp_ms)
        return self.receiver.push_datagram(data) is not None

    # -- telemetry fan-out ---------------------------------------------------

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=SUBSCRIBER_QUEUE)
        self._subscribers.append(q)
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        if q in self._subscribers:
            self._subscribers.remove(q)

    def _broadcast(self, msg: dict) -> None:
        for q in self._subscribers:
            if q.full():
                try:
                    q.get_nowait()   # drop oldest, never block the tick
                except asyncio.QueueEmpty:
                    pass
            q.put_nowait(msg)

    # -- lifecycle -----------------------------------------------------------

    async def _loop(self) -> None:
        period = self.sim.cfg.control_period
        next_tick = time.monotonic()
        while not self.finished:
            next_tick += period
            if not self.paused:
                self._step()
            delay = next_tick - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                next_tick = time.monotonic()
                await asyncio.sleep(0)

    def _step(self) -> None:
        for pkt in self.receiver.drain():
            self.sim.deliver(pkt.command, pkt.source, seq=pkt.seq)
        try:
            self.sim.tick()
        except Exception:
            # leaving bounds (or any tick fault) freezes the session rather
            # than killing the server
            self.paused = True
            self.finished = True

    def start_task(self) -> None:
        if self._task is None:
            self._task = asyncio.get_running_loop().create_task(self._loop())

    async def close(self) -> None:
        self.finished = True
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
            self._task = None

    # -- controls ------------------------------------------------------------

    def control(self, action: str, mode: str | None = None) -> dict:
        if action == "start":
            if self.finished:
                raise ValueError("session is finished")
            self.paused = False
        elif action == "pause":
            self.paused = True
        elif action == "reset":
            self._archive.extend(self.sim.log)
            self.paused = True
            self.finished = False
            self.sim = self._make_sim(start="R" if "R" in self.scene.targets
                                      else "S", face_first_target=False)
        elif action == "mode":
            if mode not in ("manual", "bci"):
                raise ValueError(f"unknown input mode {mode!r}")
            self.input_mode = mode
        else:
            raise ValueError(f"unknown action {action!r}")
        return self.state()

    # -- views ---------------------------------------------------------------

    @property
    def events(self) -> list[dict]:
        return self._archive + self.sim.log

    def state(self) -> dict[str, Any]:
        x, y, th = self.sim.state.pose
        return {
            "id": self.id, "scene": self.scene.name, "seed": self.seed,
            "nav_map": self.nav_map, "control": self.control,
            "input_mode": self.input_mode,
            "paused": self.paused, "finished": self.finished,
            "clock": self.sim.clock, "pose": [x, y, th],
            "commands": self.sim.commands, "collisions": self.sim.collisions,
            "delocalizations": self.sim.delocalizations,
            "distance": self.sim.distance,
            "events": len(self.events),
            "link": {"accepted": self.receiver.accepted,
                     "malformed": self.receiver.malformed,
                     "duplicates": self.receiver.duplicates,
                     "dropped": self.receiver.dropped},
        }

    def map_raster(self) -> dict:
        """Navigation grid as row-major trinary cells for the console."""
        grid = (self.bundle.navigation_map if self.nav_map == "projected"
                else self.bundle.localization_map)
        cells = grid.occupied_mask().astype(int) - grid.free_mask().astype(int)
        return {
            "v": 1, "type": "map",
            "resolution": grid.resolution, "origin": list(grid.origin),
            "width": grid.width, "height": grid.height,
            "cells": cells.flatten().tolist(),
            "targets": {k: list(v) for k, v in self.scene.targets.items()},
        }


class SessionRegistry:
    """Process-wide session table; the UDP listener feeds through it."""

    def __init__(self):
        self.sessions: dict[str, LiveSession] = {}

    def create(self, **kwargs) -> LiveSession:
        session = LiveSession(**kwargs)
        self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> LiveSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise KeyError(f"no such session {session_id!r}") from None

    async def remove(self, session_id: str) -> None:
        session = self.get(session_id)
        await session.close()
        del self.sessions[session_id]

    def feed_udp(self, datagram: bytes) -> int:
        """Deliver one datagram to every session listening for BCI input."""
        n = 0
        for session in self.sessions.values():
            if session.push_udp(datagram):
                n += 1
        return n

    async def close_all(self) -> None:
        for sid in list(self.sessions):
            await self.remove(sid)


class UdpCommandProtocol(asyncio.DatagramProtocol):
    """UDP ingress: every datagram goes to the registry."""

    def __init__(self, registry: SessionRegistry):
        self.registry = registry

    def datagram_received(self, data: bytes, addr) -> None:
        self.registry.feed_udp(data)


async def open_udp_listener(registry: SessionRegistry, port: int,
                            host: str = "0.0.0.0"):
    loop = asyncio.get_running_loop()
    transport, _ = await loop.create_datagram_endpoint(
        lambda: UdpCommandProtocol(registry), local_addr=(host, port))
    return transport
