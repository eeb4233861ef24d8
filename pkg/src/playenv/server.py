"""Interactive session service: JSON messages over a websocket.

Client -> server:
    {"type": "create", "scene": "<name>" | {...inline scene...},
     "seed": 0, "camera": {...}?}          camera defaults to the scene view
    {"type": "step", "commands": [{"id": "p1", "a": 2, "v": [..]?}, ...],
     "camera": {...}?, "styles": {"p1": [w...]}?}

Server -> client:
    {"type": "session", "session_id": ..., "tick": 0, "scene": {...summary...}}
    {"type": "frame", "tick": n, "png_base64": ..., "states": [...]}
    {"type": "error", "message": ...}

Commands for one session are processed strictly in arrival order (a lock per
session); distinct sessions render concurrently in worker threads.
"""

from __future__ import annotations

import asyncio
import base64
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .errors import DomainError, EngineError
from .renderer import png_bytes
from .scene import SceneDescription, load_scene, scene_from_json, view_camera
from .session import ActionCommand, Session, create_session, step
from .trajectory import camera_from_json, camera_to_json

logger = logging.getLogger("playenv.server")

DEFAULT_MAX_SESSIONS = 16
DEFAULT_IDLE_SECONDS = 600.0


@dataclass
class _Entry:
    session: Session
    lock: threading.Lock = dc_field(default_factory=threading.Lock)
    last_used: float = dc_field(default_factory=time.monotonic)


class SessionRegistry:
    """Holds live sessions; enforces the session limit and idle eviction."""

    def __init__(self, max_sessions: int = DEFAULT_MAX_SESSIONS, idle_seconds: float = DEFAULT_IDLE_SECONDS):
        self.max_sessions = max_sessions
        self.idle_seconds = idle_seconds
        self._entries: Dict[str, _Entry] = {}
        self._lock = threading.Lock()

    def _evict_idle(self) -> None:
        now = time.monotonic()
        for sid in [s for s, e in self._entries.items() if now - e.last_used > self.idle_seconds]:
            logger.info("evicting idle session %s", sid)
            del self._entries[sid]

    def add(self, session: Session) -> None:
        with self._lock:
            self._evict_idle()
            if len(self._entries) >= self.max_sessions:
                raise DomainError(f"session limit reached ({self.max_sessions})")
            self._entries[session.session_id] = _Entry(session)

    def get(self, session_id: str) -> _Entry:
        with self._lock:
            entry = self._entries.get(session_id)
            if entry is None:
                raise DomainError(f"unknown session {session_id!r}")
            entry.last_used = time.monotonic()
            return entry

    def remove(self, session_id: str) -> None:
        with self._lock:
            self._entries.pop(session_id, None)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def _scene_summary(desc: SceneDescription) -> dict:
    model = desc.action_model
    return {
        "name": desc.name,
        "width": desc.render.width,
        "height": desc.render.height,
        "objects": [{"id": o.object_id, "kind": o.kind} for o in desc.objects],
        "playable": desc.playable_ids(),
        "k": model.k if model else 0,
        "centroids": model.centroids.tolist() if model else [],
        "style_presets": {k: v.tolist() for k, v in desc.style_presets.items()},
        "style_dim": desc.style_dim,
        "view": desc.view or {},
    }


def _states_json(states) -> list:
    return [
        {"id": oid, "x": s.x.tolist(), "w": s.w.tolist(), "pi": s.pi.tolist(), "valid": bool(s.valid)}
        for oid, s in sorted(states.items())
    ]


def _frame_message(tick: int, frame: np.ndarray, states) -> dict:
    return {
        "type": "frame",
        "tick": tick,
        "png_base64": base64.b64encode(png_bytes(frame)).decode("ascii"),
        "states": _states_json(states),
    }


def create_app(scene_dir: Optional[str] = None, max_sessions: int = DEFAULT_MAX_SESSIONS,
               idle_seconds: float = DEFAULT_IDLE_SECONDS, frontend_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="playenv session service")
    registry = SessionRegistry(max_sessions, idle_seconds)
    app.state.registry = registry
    scenes_path = Path(scene_dir) if scene_dir else None

    def resolve_scene(ref) -> SceneDescription:
        if isinstance(ref, dict):
            return scene_from_json(ref)
        if scenes_path is None:
            raise DomainError("server has no scene directory; send an inline scene")
        candidate = scenes_path / f"{ref}.json"
        if not candidate.is_file():
            raise DomainError(f"unknown scene {ref!r}")
        return load_scene(candidate)

    @app.get("/scenes")
    def list_scenes():
        names = sorted(p.stem for p in scenes_path.glob("*.json")) if scenes_path else []
        return JSONResponse({"scenes": names})

    @app.get("/healthz")
    def health():
        return JSONResponse({"ok": True, "sessions": len(registry)})

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session_id: Optional[str] = None

        async def handle_create(msg) -> list:
            nonlocal session_id
            if session_id is not None:  # a fresh create replaces the old session
                registry.remove(session_id)
                session_id = None
            desc = resolve_scene(msg.get("scene", "demo_court"))
            seed = int(msg.get("seed", 0))
            if msg.get("camera") is not None:
                camera = camera_from_json(msg["camera"], desc.render.width, desc.render.height)
            else:
                camera = view_camera(desc)
            sid = uuid.uuid4().hex
            session, frame = await asyncio.to_thread(create_session, desc, camera, seed, sid)
            registry.add(session)
            session_id = sid
            states = {oid: session.states[oid] for oid in sorted(session.states)}
            return [
                {"type": "session", "session_id": sid, "tick": 0, "scene": _scene_summary(desc),
                 "camera": camera_to_json(camera)},
                _frame_message(0, frame, states),
            ]

        async def handle_step(msg) -> list:
            if session_id is None:
                raise DomainError("no session; send a create message first")
            entry = registry.get(session_id)
            session = entry.session
            commands = {}
            for cmd in msg.get("commands", []):
                v = np.asarray(cmd["v"], dtype=np.float64) if cmd.get("v") is not None else None
                commands[str(cmd["id"])] = ActionCommand(int(cmd["a"]), v)
            camera = session.camera
            if msg.get("camera") is not None:
                camera = camera_from_json(msg["camera"], session.scene.render.width, session.scene.render.height)
            styles = None
            if msg.get("styles"):
                styles = {k: np.asarray(v, dtype=np.float64) for k, v in msg["styles"].items()}

            def run():
                with entry.lock:  # commands for one session run strictly in order
                    return step(session, commands, camera, styles)

            frame, new_states = await asyncio.to_thread(run)
            return [_frame_message(session.tick, frame, new_states)]

        try:
            while True:
                msg = await ws.receive_json()
                try:
                    kind = msg.get("type")
                    if kind == "create":
                        replies = await handle_create(msg)
                    elif kind == "step":
                        replies = await handle_step(msg)
                    else:
                        raise DomainError(f"unknown message type {kind!r}")
                    for m in replies:
                        await ws.send_json(m)
                except EngineError as exc:
                    await ws.send_json({"type": "error", "message": str(exc)})
                except (KeyError, TypeError, ValueError) as exc:
                    await ws.send_json({"type": "error", "message": f"bad message: {exc}"})
        except WebSocketDisconnect:
            pass
        finally:
            if session_id is not None:
                registry.remove(session_id)

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")

    return app
