"""Camera estimation from known planar geometry.

A sports field whose line intersections have known positions on the ground
plane acts as a calibration pattern: matched landmark pixels give a
plane-to-image homography (normalized DLT), which decomposes into the camera
pose given the intrinsics. Also provides the sequence quality filter and
camera interpolation used to clean calibrated sequences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .errors import DomainError
from .geometry import CameraModel, project_point


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class FieldModel:
    """Named landmark points on the y=0 plane, as (x, z) world coordinates."""

    points: Dict[str, np.ndarray]

    def __post_init__(self):
        pts = {k: np.asarray(v, dtype=np.float64).reshape(2) for k, v in self.points.items()}
        object.__setattr__(self, "points", pts)
        if len(pts) < 4:
            raise DomainError("a field model needs at least 4 landmarks")
        arr = np.stack(list(pts.values()))
        centered = arr - arr.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
            raise DomainError("field landmarks are collinear")


@dataclass(frozen=True)
class Homography:
    """3x3 plane-to-pixel map, canonicalized to unit Frobenius norm with a
    nonnegative lower-right entry."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        norm = np.linalg.norm(m)
        if norm == 0:
            raise DomainError("zero homography")
        m = m / norm
        if m[2, 2] < 0:
            m = -m
        object.__setattr__(self, "matrix", m)

    def compose(self, other: "Homography") -> "Homography":
        return Homography(self.matrix @ other.matrix)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))


def _hartley_normalization(points: np.ndarray) -> np.ndarray:
    """Similarity transform sending the points to centroid 0, mean norm sqrt(2)."""
    centroid = points.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(points - centroid, axis=1))
    scale = np.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def estimate_homography(pairs: Sequence[Tuple]) -> Homography:
    """Normalized DLT from (plane point, pixel point) correspondences."""
    if len(pairs) < 4:
        raise DomainError("homography estimation needs at least 4 correspondences")
    src = np.array([p[0] for p in pairs], dtype=np.float64)
    dst = np.array([p[1] for p in pairs], dtype=np.float64)
    t_src = _hartley_normalization(src)
    t_dst = _hartley_normalization(dst)
    s = (np.column_stack([src, np.ones(len(src))]) @ t_src.T)[:, :2]
    d = (np.column_stack([dst, np.ones(len(dst))]) @ t_dst.T)[:, :2]

    rows = []
    for (x, y), (u, v) in zip(s, d):
        rows.append([x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u])
        rows.append([0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v])
    a = np.asarray(rows)
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] < 1e-9 * sv[0]:
        raise DomainError("degenerate correspondence configuration")
    h_norm = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(t_dst) @ h_norm @ t_src)


def apply_homography(h: Homography, point) -> np.ndarray:
    """Map a plane/pixel point through the homography (perspective division)."""
    p = np.asarray(point, dtype=np.float64)
    q = h.matrix @ np.array([p[0], p[1], 1.0])
    if abs(q[2]) < 1e-15:
        raise DomainError("point maps to the line at infinity")
    return q[:2] / q[2]


def apply_homography_batch(h: Homography, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    q = np.column_stack([pts, np.ones(len(pts))]) @ h.matrix.T
    return q[:, :2] / q[:, 2:3]


def homography_from_camera(camera: CameraModel) -> Homography:
    """Ground-plane (x, z) to pixel homography of a calibrated camera."""
    k = np.array([[camera.fx, 0.0, camera.cx], [0.0, camera.fy, camera.cy], [0.0, 0.0, 1.0]])
    r_wc = camera.rotation.T
    t_cv = -r_wc @ camera.center
    return Homography(k @ np.column_stack([r_wc[:, 0], r_wc[:, 2], t_cv]))


def decompose_homography(h: Homography, intrinsics: Intrinsics):
    """Recover (camera-to-world rotation, camera center) from a ground-plane
    homography; the sign is fixed so the camera sits above the plane."""
    b = intrinsics.inverse_matrix() @ h.matrix
    lam = np.linalg.norm(b[:, 0])
    if lam < 1e-12:
        raise DomainError("degenerate homography: zero plane axis")

    def pose(sign: float):
        r1 = sign * b[:, 0] / lam
        r3 = sign * b[:, 1] / lam
        t_cv = sign * b[:, 2] / lam
        r2 = np.cross(r3, r1)
        r_wc = np.column_stack([r1, r2, r3])
        u, _, vt = np.linalg.svd(r_wc)
        r_wc = u @ vt
        if np.linalg.det(r_wc) < 0:
            r_wc = u @ np.diag([1.0, 1.0, -1.0]) @ vt
        center = -r_wc.T @ t_cv
        return r_wc.T, center

    rotation, center = pose(1.0)
    if center[1] < 0:
        rotation, center = pose(-1.0)
    return rotation, center


@dataclass(frozen=True)
class CalibrationResult:
    camera: CameraModel
    homography: Homography
    rms_error: float


def calibrate_from_field(landmarks: Dict[str, Sequence[float]], field: FieldModel,
                         intrinsics: Intrinsics) -> CalibrationResult:
    """Estimate a camera from named landmark pixels matched to the field model."""
    names = sorted(set(landmarks) & set(field.points))
    if len(names) < 4:
        raise DomainError(f"only {len(names)} landmarks match the field model; need 4")
    pairs = [(field.points[n], np.asarray(landmarks[n], dtype=np.float64)) for n in names]
    h = estimate_homography(pairs)
    rotation, center = decompose_homography(h, intrinsics)
    camera = CameraModel(
        fx=intrinsics.fx, fy=intrinsics.fy, cx=intrinsics.cx, cy=intrinsics.cy,
        width=intrinsics.width, height=intrinsics.height,
        rotation=rotation, translation=center,
    )
    errors = []
    for n in names:
        world = np.array([field.points[n][0], 0.0, field.points[n][1]])
        errors.append(np.sum((project_point(camera, world) - np.asarray(landmarks[n])) ** 2))
    return CalibrationResult(camera, h, float(np.sqrt(np.mean(errors))))


def sequence_quality_filter(cameras: Sequence[CameraModel], threshold: float) -> bool:
    """Accept a sequence unless the camera-center variance exceeds the threshold."""
    if len(cameras) < 2:
        raise DomainError("need at least two cameras to estimate noise")
    centers = np.stack([c.center for c in cameras])
    variance = float(np.mean(np.sum((centers - centers.mean(axis=0)) ** 2, axis=1)))
    return variance <= threshold


def interpolate_cameras(seq: Sequence[Optional[CameraModel]]) -> List[CameraModel]:
    """Fill missing cameras: slerp rotations and lerp centers/intrinsics
    between the neighboring present frames; copy at the boundaries."""
    present = [i for i, c in enumerate(seq) if c is not None]
    if not present:
        raise DomainError("cannot interpolate: no cameras present")

    def blend(a: CameraModel, b: CameraModel, f: float) -> CameraModel:
        slerp = Slerp([0.0, 1.0], Rotation.from_matrix([a.rotation, b.rotation]))
        return CameraModel(
            fx=a.fx + f * (b.fx - a.fx),
            fy=a.fy + f * (b.fy - a.fy),
            cx=a.cx + f * (b.cx - a.cx),
            cy=a.cy + f * (b.cy - a.cy),
            width=a.width, height=a.height,
            rotation=slerp([f]).as_matrix()[0],
            translation=a.center + f * (b.center - a.center),
        )

    out: List[CameraModel] = []
    for i, cam in enumerate(seq):
        if cam is not None:
            out.append(cam)
            continue
        prev = max((j for j in present if j < i), default=None)
        nxt = min((j for j in present if j > i), default=None)
        if prev is None:
            out.append(seq[nxt])
        elif nxt is None:
            out.append(seq[prev])
        else:
            out.append(blend(seq[prev], seq[nxt], (i - prev) / (nxt - prev)))
    return out


def tennis_court_field() -> FieldModel:
    """Standard tennis-court line intersections, court centered at the origin.

    x runs across the court (doubles width 10.97), z along it (length 23.77);
    all values in meters on the y=0 plane.
    """
    half_l = 23.77 / 2.0
    single = 8.23 / 2.0
    double = 10.97 / 2.0
    service = 6.40
    pts = {}
    for side, z in (("near", -half_l), ("far", half_l)):
        pts[f"{side}_baseline_left"] = (-double, z)
        pts[f"{side}_baseline_right"] = (double, z)
        pts[f"{side}_singles_left"] = (-single, z)
        pts[f"{side}_singles_right"] = (single, z)
        pts[f"{side}_center_mark"] = (0.0, z)
    for side, z in (("near", -service), ("far", service)):
        pts[f"{side}_service_left"] = (-single, z)
        pts[f"{side}_service_right"] = (single, z)
        pts[f"{side}_service_center"] = (0.0, z)
    pts["net_left"] = (-double, 0.0)
    pts["net_right"] = (double, 0.0)
    return FieldModel({k: np.asarray(v) for k, v in pts.items()})


def load_field_model(path) -> FieldModel:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return FieldModel({k: np.asarray(v, dtype=np.float64) for k, v in data["points"].items()})


def load_landmark_frames(path) -> List[Dict[str, np.ndarray]]:
    """Landmark file: either {"points": {...}} or {"frames": [{"points": {...}} | null, ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if "points" in data:
        frames = [data]
    else:
        frames = data["frames"]
    out = []
    for frame in frames:
        if frame is None or not frame.get("points"):
            out.append({})
        else:
            out.append({k: np.asarray(v, dtype=np.float64) for k, v in frame["points"].items()})
    return out


def load_intrinsics(path) -> Intrinsics:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return Intrinsics(
        fx=float(data["fx"]), fy=float(data["fy"]), cx=float(data["cx"]), cy=float(data["cy"]),
        width=int(data["width"]), height=int(data["height"]),
    )
