"""Scene descriptions: the JSON schema tying objects, fields and actions
together, with validation that lists every violation at once.

Top-level scene file layout (version 1):

    {"version": 1, "name": "demo",
     "render": {"width": 512, "height": 288, "factors": [8, 4],
                "t_near": 0.05, "t_far": 80.0},
     "background": {"variant": "sphere_background", ...},
     "objects": [{"id": "court", "kind": "static", "anchor": [0, 0, 0],
                  "volume": {"min": [...], "max": [...]},
                  "samples_per_ray": 4, "field": {...}},
                 {"id": "p1", "kind": "playable", ...,
                  "bend": {"variant": "sway"},
                  "initial_state": {"x": [...], "w": [...], "pi": [...]}}],
     "action_model": {"centroids": [[dx, dy, dz], ...]},
     "style_presets": {"name": [w...]},
     "view": {"target": [...], "distance": 20, "yaw": 0, "pitch": 0.45,
              "fov_deg": 55}}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, Optional, Sequence

import numpy as np

from .action import ActionModel, EnvironmentState, PoseBank
from .errors import DomainError, SceneValidationError
from .fields import (
    D_POSE,
    D_STYLE,
    BendDescriptor,
    CheckerPlaneField,
    Field,
    SphereBackgroundField,
    StyleResponse,
    UniformBoxField,
    VoxelGridField,
)
from .geometry import BoundingVolume, CameraModel, look_at
from .renderer import ObjectSpec, Scene

SCENE_VERSION = 1
BACKGROUND_ID = "background"  # reserved pseudo-id for background style state


@dataclass(frozen=True)
class RenderConfig:
    width: int = 512
    height: int = 288
    factors: tuple = (8, 4)
    t_near: float = 0.05
    t_far: float = 100.0
    jitter: bool = False


@dataclass(frozen=True)
class SceneDescription:
    name: str
    render: RenderConfig
    objects: tuple
    background: Field
    initial_states: Dict[str, EnvironmentState]
    action_model: Optional[ActionModel]
    style_presets: Dict[str, np.ndarray] = dc_field(default_factory=dict)
    view: Optional[dict] = None
    style_dim: int = D_STYLE
    pose_dim: int = D_POSE

    @property
    def scene(self) -> Scene:
        return Scene(self.objects, self.background, self.render.t_near, self.render.t_far)

    def playable_ids(self):
        return [o.object_id for o in self.objects if o.kind == "playable"]

    def object_by_id(self, object_id: str) -> Optional[ObjectSpec]:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        return None


def validate_scene(desc: SceneDescription) -> None:
    """Raise SceneValidationError listing every structural violation."""
    problems = []
    seen = set()
    for obj in desc.objects:
        if obj.object_id in seen:
            problems.append(f"duplicate object id {obj.object_id!r}")
        seen.add(obj.object_id)
        if obj.object_id == BACKGROUND_ID:
            problems.append(f"object id {BACKGROUND_ID!r} is reserved")
        if obj.samples_per_ray < 1:
            problems.append(f"object {obj.object_id!r} needs samples_per_ray >= 1")
        if obj.kind == "playable":
            if obj.bend is None:
                problems.append(f"playable object {obj.object_id!r} has no bend descriptor")
            state = desc.initial_states.get(obj.object_id)
            if state is None:
                problems.append(f"playable object {obj.object_id!r} has no initial state")
            else:
                if state.x[1] != 0.0:
                    problems.append(f"playable object {obj.object_id!r} must start on the ground (y=0)")
                if len(state.w) != desc.style_dim or len(state.pi) != desc.pose_dim:
                    problems.append(f"object {obj.object_id!r} state dims disagree with the scene dims")
    if desc.background is None:
        problems.append("scene has no background field")
    if desc.playable_ids() and desc.action_model is None:
        problems.append("playable objects require an action model")
    for d in desc.render.factors:
        if desc.render.width % d or desc.render.height % d:
            problems.append(f"factor {d} does not divide {desc.render.width}x{desc.render.height}")
    if not (0 <= desc.render.t_near <= desc.render.t_far):
        problems.append("require 0 <= t_near <= t_far")
    if problems:
        raise SceneValidationError(problems)


def _style_response_from_json(data: Optional[dict], d_feature: int, d_style: int) -> StyleResponse:
    if not data:
        return StyleResponse.identity(d_feature, d_style)
    return StyleResponse(
        np.asarray(data["gamma_w"], dtype=np.float64),
        np.asarray(data["gamma_bias"], dtype=np.float64),
        np.asarray(data["beta_w"], dtype=np.float64),
        np.asarray(data["beta_bias"], dtype=np.float64),
    )


def field_from_json(data: dict, d_style: int = D_STYLE) -> Field:
    variant = data.get("variant")
    if variant == "uniform_box":
        color = np.asarray(data["color"], dtype=np.float64)
        return UniformBoxField(
            sigma=float(data["sigma"]),
            color=color,
            box=BoundingVolume(np.asarray(data["min"]), np.asarray(data["max"])),
            style=_style_response_from_json(data.get("style_response"), len(color), d_style),
        )
    if variant == "checker_plane":
        color_a = np.asarray(data["color_a"], dtype=np.float64)
        return CheckerPlaneField(
            sigma=float(data["sigma"]),
            cell=float(data["cell"]),
            color_a=color_a,
            color_b=np.asarray(data["color_b"], dtype=np.float64),
            y_center=float(data.get("y_center", 0.0)),
            thickness=float(data.get("thickness", 0.2)),
            style=_style_response_from_json(data.get("style_response"), len(color_a), d_style),
        )
    if variant == "voxel_grid":
        sigma_grid = np.asarray(data["sigma"], dtype=np.float64)
        resolution = tuple(data["resolution"])
        color_grid = np.asarray(data["color"], dtype=np.float64)
        d_f = color_grid.size // sigma_grid.size
        return VoxelGridField(
            box=BoundingVolume(np.asarray(data["min"]), np.asarray(data["max"])),
            sigma_grid=sigma_grid.reshape(resolution),
            color_grid=color_grid.reshape(resolution + (d_f,)),
            style=_style_response_from_json(data.get("style_response"), d_f, d_style),
        )
    if variant == "sphere_background":
        zenith = np.asarray(data["color_zenith"], dtype=np.float64)
        d_f = len(zenith)
        shift = data.get("origin_shift")
        return SphereBackgroundField(
            color_zenith=zenith,
            color_horizon=np.asarray(data["color_horizon"], dtype=np.float64),
            origin_shift=np.zeros((d_f, 3)) if shift is None else np.asarray(shift, dtype=np.float64),
            style=_style_response_from_json(data.get("style_response"), d_f, d_style),
        )
    raise DomainError(f"unknown field variant {variant!r}")


def scene_from_json(data: dict) -> SceneDescription:
    if data.get("version") != SCENE_VERSION:
        raise DomainError(f"unsupported scene version {data.get('version')!r}")
    dims = data.get("dims", {})
    d_style = int(dims.get("style", D_STYLE))
    d_pose = int(dims.get("pose", D_POSE))
    render_data = data.get("render", {})
    render = RenderConfig(
        width=int(render_data.get("width", 512)),
        height=int(render_data.get("height", 288)),
        factors=tuple(render_data.get("factors", (8, 4))),
        t_near=float(render_data.get("t_near", 0.05)),
        t_far=float(render_data.get("t_far", 100.0)),
        jitter=bool(render_data.get("jitter", False)),
    )

    objects = []
    initial_states: Dict[str, EnvironmentState] = {}
    for entry in data.get("objects", []):
        volume = BoundingVolume(np.asarray(entry["volume"]["min"]), np.asarray(entry["volume"]["max"]))
        bend = None
        if "bend" in entry:
            bend = BendDescriptor(entry["bend"].get("variant", "zero"))
        style = np.asarray(entry["style"], dtype=np.float64) if "style" in entry else None
        spec = ObjectSpec(
            object_id=str(entry["id"]),
            kind=str(entry["kind"]),
            volume=volume,
            field=field_from_json(entry["field"], d_style),
            samples_per_ray=int(entry["samples_per_ray"]),
            anchor=np.asarray(entry.get("anchor", (0.0, 0.0, 0.0)), dtype=np.float64),
            bend=bend,
            style=style,
        )
        objects.append(spec)
        if "initial_state" in entry:
            st = entry["initial_state"]
            initial_states[spec.object_id] = EnvironmentState(
                np.asarray(st["x"], dtype=np.float64),
                np.asarray(st.get("w", np.zeros(d_style)), dtype=np.float64),
                np.asarray(st.get("pi", np.zeros(d_pose)), dtype=np.float64),
                True,
            )

    model = None
    if "action_model" in data:
        bank = None
        if data["action_model"].get("pose_bank"):
            bank = PoseBank(tuple(np.asarray(c, dtype=np.float64) for c in data["action_model"]["pose_bank"]))
        model = ActionModel(np.asarray(data["action_model"]["centroids"], dtype=np.float64), bank)

    presets = {k: np.asarray(v, dtype=np.float64) for k, v in data.get("style_presets", {}).items()}

    desc = SceneDescription(
        name=str(data.get("name", "scene")),
        render=render,
        objects=tuple(objects),
        background=field_from_json(data["background"], d_style) if "background" in data else None,
        initial_states=initial_states,
        action_model=model,
        style_presets=presets,
        view=data.get("view"),
        style_dim=d_style,
        pose_dim=d_pose,
    )
    validate_scene(desc)
    return desc


def load_scene(path) -> SceneDescription:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}:{exc.lineno}: invalid scene JSON: {exc.msg}") from exc
    return scene_from_json(data)


def view_camera(desc: SceneDescription, yaw: Optional[float] = None, pitch: Optional[float] = None,
                distance: Optional[float] = None) -> CameraModel:
    """Build a camera from the scene's orbit view hints."""
    view = desc.view or {}
    target = np.asarray(view.get("target", (0.0, 0.0, 0.0)), dtype=np.float64)
    dist = float(distance if distance is not None else view.get("distance", 10.0))
    yaw = float(yaw if yaw is not None else view.get("yaw", 0.0))
    pitch = float(pitch if pitch is not None else view.get("pitch", 0.3))
    fov = math.radians(float(view.get("fov_deg", 55.0)))
    center = target + dist * np.array(
        [math.cos(pitch) * math.sin(yaw), math.sin(pitch), -math.cos(pitch) * math.cos(yaw)]
    )
    focal = desc.render.width / (2.0 * math.tan(fov / 2.0))
    return CameraModel(
        fx=focal, fy=focal,
        cx=desc.render.width / 2.0, cy=desc.render.height / 2.0,
        width=desc.render.width, height=desc.render.height,
        rotation=look_at(center, target),
        translation=center,
    )
