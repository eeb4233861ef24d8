"""Interactive sessions and the batch script runner.

A session owns the mutable world: per-object environment states, the current
camera and a tick counter. Stepping applies style overrides, advances every
playable object with the camera-relative dynamics, renders a frame and logs
the transition. Sessions are deterministic functions of (scene, seed, command
history): replays reproduce frames and logs byte for byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .action import ActionModel, EnvironmentState, dynamics_step
from .errors import DomainError
from .geometry import CameraModel, project_point
from .renderer import frame_hash, render_image, write_png
from .scene import BACKGROUND_ID, SceneDescription, validate_scene
from .trajectory import FrameRecord, ObjectRecord, camera_from_json, write_log

SCRIPT_VERSION = 1


@dataclass(frozen=True)
class ActionCommand:
    a: int
    v: Optional[np.ndarray] = None  # None means the inference default v = 0


@dataclass
class Session:
    session_id: str
    scene: SceneDescription
    states: Dict[str, EnvironmentState]
    camera: CameraModel
    tick: int
    rng: np.random.Generator
    records: List[FrameRecord] = dc_field(default_factory=list)

    @property
    def model(self) -> ActionModel:
        return self.scene.action_model


def _initial_states(scene: SceneDescription) -> Dict[str, EnvironmentState]:
    states: Dict[str, EnvironmentState] = {}
    for obj in scene.objects:
        if obj.kind == "playable":
            states[obj.object_id] = scene.initial_states[obj.object_id]
        else:
            w = obj.style if obj.style is not None else np.zeros(scene.style_dim)
            states[obj.object_id] = EnvironmentState(obj.anchor, w, np.zeros(scene.pose_dim), True)
    states[BACKGROUND_ID] = EnvironmentState(np.zeros(3), np.zeros(scene.style_dim), np.zeros(scene.pose_dim), True)
    return states


def object_bbox(scene: SceneDescription, obj_id: str, state: EnvironmentState, camera: CameraModel):
    """Project an object's box to a clipped pixel bbox; None when off-screen
    or behind the camera."""
    obj = scene.object_by_id(obj_id)
    box = obj.volume.translated(state.x)
    corners = np.array(
        [[x, y, z] for x in (box.min_corner[0], box.max_corner[0])
         for y in (box.min_corner[1], box.max_corner[1])
         for z in (box.min_corner[2], box.max_corner[2])]
    )
    try:
        pixels = np.stack([project_point(camera, c) for c in corners])
    except DomainError:
        return None
    x0, y0 = pixels.min(axis=0)
    x1, y1 = pixels.max(axis=0)
    x0, x1 = np.clip([x0, x1], 0.0, camera.width)
    y0, y1 = np.clip([y0, y1], 0.0, camera.height)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None
    return (float(x0), float(y0), float(x1), float(y1))


def _render(session: Session) -> np.ndarray:
    cfg = session.scene.render
    rng = session.rng if cfg.jitter else None
    return render_image(session.scene.scene, session.states, session.camera,
                        factors=cfg.factors, jitter_rng=rng)


def _frame_record(session: Session) -> FrameRecord:
    objects = []
    for obj in session.scene.objects:
        state = session.states[obj.object_id]
        bbox = None
        bbox_valid = True
        if obj.kind == "playable":
            bbox = object_bbox(session.scene, obj.object_id, state, session.camera)
            bbox_valid = bbox is not None
            bbox = bbox if bbox is not None else None
        rec = ObjectRecord(obj.object_id, state, bbox, bbox_valid)
        objects.append(rec)
    return FrameRecord(session.tick, session.camera, objects)


def create_session(scene: SceneDescription, camera: CameraModel, seed: int = 0,
                   session_id: str = "session") -> Tuple[Session, np.ndarray]:
    """Validate the scene, register the initial state and render frame 0."""
    validate_scene(scene)
    session = Session(
        session_id=session_id,
        scene=scene,
        states=_initial_states(scene),
        camera=camera,
        tick=0,
        rng=np.random.default_rng(seed),
    )
    frame = _render(session)
    session.records.append(_frame_record(session))
    return session, frame


def step(session: Session, commands: Mapping[str, ActionCommand], camera: CameraModel,
         styles: Optional[Mapping[str, np.ndarray]] = None) -> Tuple[np.ndarray, Dict[str, EnvironmentState]]:
    """Advance one tick; returns the rendered frame and the new states."""
    playable = set(session.scene.playable_ids())
    unknown = set(commands) - playable
    if unknown:
        raise DomainError(f"commands for unknown or static objects: {sorted(unknown)}")
    missing = playable - set(commands)
    if missing:
        raise DomainError(f"every playable object needs a command; missing {sorted(missing)}")
    model = session.model
    for oid, cmd in commands.items():
        if not 0 <= cmd.a < model.k:
            raise DomainError(f"action {cmd.a} out of range for K={model.k}")

    for oid, w in (styles or {}).items():
        if oid not in session.states:
            raise DomainError(f"style override for unknown object {oid!r}")
        state = session.states[oid]
        w = np.asarray(w, dtype=np.float64)
        if w.shape != state.w.shape:
            raise DomainError(f"style override for {oid!r} has wrong dimension")
        session.states[oid] = EnvironmentState(state.x, w, state.pi, state.valid)

    # Log the commands on the pre-step record: record t's actions produce
    # record t+1, whose camera is the one the dynamics used.
    session.records[-1].actions = {
        oid: (cmd.a, np.zeros(3) if cmd.v is None else np.asarray(cmd.v, dtype=np.float64))
        for oid, cmd in commands.items()
    }

    for oid in sorted(playable):
        cmd = commands[oid]
        session.states[oid] = dynamics_step(session.states[oid], cmd.a, cmd.v, camera, model)

    session.camera = camera
    session.tick += 1
    frame = _render(session)
    session.records.append(_frame_record(session))
    new_states = {oid: session.states[oid] for oid in sorted(playable)}
    return frame, new_states


def parse_script(data: dict) -> Tuple[int, dict, List[dict]]:
    """Validate a script document; returns (seed, camera json, tick list)."""
    if data.get("version") != SCRIPT_VERSION:
        raise DomainError(f"unsupported script version {data.get('version')!r}")
    if "camera" not in data:
        raise DomainError("script is missing the initial camera")
    ticks = data.get("ticks", [])
    for i, tick in enumerate(ticks):
        if "commands" not in tick or not isinstance(tick["commands"], list):
            raise DomainError(f"script tick {i}: missing command list")
        for cmd in tick["commands"]:
            if "id" not in cmd or "a" not in cmd:
                raise DomainError(f"script tick {i}: commands need 'id' and 'a'")
    return int(data.get("seed", 0)), data["camera"], ticks


def load_script(path) -> Tuple[int, dict, List[dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}:{exc.lineno}: invalid script JSON: {exc.msg}") from exc
    return parse_script(data)


def run_script(scene: SceneDescription, script: dict, out_dir,
               write_frames: bool = True) -> Tuple[List[int], List[FrameRecord]]:
    """Run a scripted session; writes one PNG per tick plus the trajectory log.

    Returns (frame hashes, log records).
    """
    seed, camera_json, ticks = parse_script(script)
    width, height = scene.render.width, scene.render.height
    camera = camera_from_json(camera_json, width, height)
    os.makedirs(out_dir, exist_ok=True)

    session, frame = create_session(scene, camera, seed)
    hashes = [frame_hash(frame)]
    if write_frames:
        write_png(os.path.join(out_dir, "frame_00000.png"), frame)

    for i, tick in enumerate(ticks):
        commands = {
            cmd["id"]: ActionCommand(int(cmd["a"]), np.asarray(cmd["v"], dtype=np.float64) if "v" in cmd else None)
            for cmd in tick["commands"]
        }
        cam = camera_from_json(tick["camera"], width, height) if "camera" in tick else session.camera
        styles = None
        if tick.get("styles"):
            styles = {k: np.asarray(v, dtype=np.float64) for k, v in tick["styles"].items()}
        try:
            frame, _ = step(session, commands, cam, styles)
        except DomainError as exc:
            raise DomainError(f"script tick {i}: {exc}") from exc
        hashes.append(frame_hash(frame))
        if write_frames:
            write_png(os.path.join(out_dir, f"frame_{session.tick:05d}.png"), frame)

    write_log(os.path.join(out_dir, "trajectory.jsonl"), session.records)
    return hashes, session.records
