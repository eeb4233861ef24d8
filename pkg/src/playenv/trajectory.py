"""Trajectory logs: JSON-lines, one record per frame.

Record layout (all floats rounded to 1e-6 when written, so re-runs produce
byte-identical files):

    {"version": 1, "t": 3,
     "objects": [{"id": "p1", "x": [..3], "w": [..], "pi": [..], "valid": true,
                  "bbox": [x0, y0, x1, y1]}],
     "camera": {"R": [..9 row-major], "t": [..3], "fx": .., "fy": .., "cx": ..,
                "cy": .., "width": .., "height": ..},
     "actions": [{"id": "p1", "a": 2, "v": [..3]}]}

The ``actions`` of record t describe the transition to record t+1; the camera
stored with record t+1 is the one whose rotation the dynamics used, so the
camera-relative displacement of that transition is recovered as
``R_{t+1}^T (x_{t+1} - x_t)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .action import EnvironmentState, valid_prefix
from .errors import DomainError
from .geometry import CameraModel, Detection

LOG_VERSION = 1


def _round6(value) -> float:
    return round(float(value), 6) + 0.0  # normalize -0.0


def _round_list(arr) -> list:
    return [_round6(v) for v in np.asarray(arr, dtype=np.float64).ravel()]


def camera_to_json(camera: CameraModel) -> dict:
    return {
        "R": _round_list(camera.rotation),
        "t": _round_list(camera.translation),
        "fx": _round6(camera.fx),
        "fy": _round6(camera.fy),
        "cx": _round6(camera.cx),
        "cy": _round6(camera.cy),
        "width": camera.width,
        "height": camera.height,
    }


def camera_from_json(data: dict, width: Optional[int] = None, height: Optional[int] = None) -> CameraModel:
    return CameraModel(
        fx=float(data["fx"]),
        fy=float(data["fy"]),
        cx=float(data["cx"]),
        cy=float(data["cy"]),
        width=int(data.get("width", width or 1)),
        height=int(data.get("height", height or 1)),
        rotation=np.asarray(data["R"], dtype=np.float64).reshape(3, 3),
        translation=np.asarray(data["t"], dtype=np.float64),
    )


@dataclass
class ObjectRecord:
    object_id: str
    state: EnvironmentState
    bbox: Optional[Tuple[float, float, float, float]] = None
    bbox_valid: bool = True

    def detection(self) -> Optional[Detection]:
        if self.bbox is None:
            return None
        return Detection(self.object_id, tuple(self.bbox), self.bbox_valid)


@dataclass
class FrameRecord:
    t: int
    camera: CameraModel
    objects: List[ObjectRecord]
    actions: Dict[str, Tuple[int, np.ndarray]] = field(default_factory=dict)

    def state_of(self, object_id: str) -> Optional[EnvironmentState]:
        for rec in self.objects:
            if rec.object_id == object_id:
                return rec.state
        return None


def record_to_json(rec: FrameRecord) -> dict:
    objects = []
    for o in rec.objects:
        entry = {
            "id": o.object_id,
            "x": _round_list(o.state.x),
            "w": _round_list(o.state.w),
            "pi": _round_list(o.state.pi),
            "valid": bool(o.state.valid),
        }
        if o.bbox is not None:
            entry["bbox"] = _round_list(o.bbox)
            entry["bbox_valid"] = bool(o.bbox_valid)
        objects.append(entry)
    out = {
        "version": LOG_VERSION,
        "t": rec.t,
        "objects": objects,
        "camera": camera_to_json(rec.camera),
    }
    if rec.actions:
        out["actions"] = [
            {"id": oid, "a": int(a), "v": _round_list(v)} for oid, (a, v) in sorted(rec.actions.items())
        ]
    return out


def record_from_json(data: dict) -> FrameRecord:
    camera = camera_from_json(data["camera"])
    objects = []
    for o in data["objects"]:
        state = EnvironmentState(
            np.asarray(o["x"], dtype=np.float64),
            np.asarray(o["w"], dtype=np.float64),
            np.asarray(o["pi"], dtype=np.float64),
            bool(o["valid"]),
        )
        bbox = tuple(o["bbox"]) if "bbox" in o else None
        objects.append(ObjectRecord(o["id"], state, bbox, bool(o.get("bbox_valid", True))))
    actions = {}
    for entry in data.get("actions", []):
        actions[entry["id"]] = (int(entry["a"]), np.asarray(entry["v"], dtype=np.float64))
    return FrameRecord(int(data["t"]), camera, objects, actions)


def write_log(path, records: Sequence[FrameRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json(rec), separators=(",", ":"), sort_keys=True))
            fh.write("\n")


def read_log(path) -> List[FrameRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DomainError(f"{path}:{i + 1}: bad log line: {exc}") from exc
            if data.get("version") != LOG_VERSION:
                raise DomainError(f"{path}:{i + 1}: unsupported log version {data.get('version')}")
            records.append(record_from_json(data))
    return records


def action_deltas(records: Sequence[FrameRecord], object_id: str):
    """Camera-relative displacements paired with logged action labels.

    Only transitions inside the object's valid prefix that carry an action
    for it are returned. Outputs (deltas (n, 3), actions (n,)).
    """
    states = []
    for rec in records:
        s = rec.state_of(object_id)
        states.append(s if s is not None else EnvironmentState(np.zeros(3), np.zeros(1), np.zeros(1), False))
    prefix = valid_prefix(states)
    deltas, actions = [], []
    for j in range(1, prefix):
        prev, cur = records[j - 1], records[j]
        if object_id not in prev.actions:
            continue
        delta = cur.camera.rotation.T @ (states[j].x - states[j - 1].x)
        deltas.append(delta)
        actions.append(prev.actions[object_id][0])
    if not deltas:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    return np.stack(deltas), np.asarray(actions, dtype=np.int64)


def detections_per_frame(records: Sequence[FrameRecord]) -> List[List[Detection]]:
    """Per-frame detection lists for the detection-based metrics."""
    frames = []
    for rec in records:
        dets = [d for d in (o.detection() for o in rec.objects) if d is not None]
        frames.append(dets)
    return frames
