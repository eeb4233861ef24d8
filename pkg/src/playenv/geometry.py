"""Cameras, rays, box intersection and ground-plane position estimation.

Conventions used throughout the engine:

* World frame is right-handed with y pointing up; the ground is the y=0 plane.
* ``CameraModel.rotation`` is the camera-to-world rotation M; its columns are
  the camera axes expressed in world coordinates. The camera looks along its
  local +z axis.
* Pixel coordinates are 0-based floats with pixel centers at integer + 0.5.
  The pinhole direction of pixel (u, v) in camera coordinates is
  ((u - cx) / fx, (v - cy) / fy, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NoIntersectionError

ORTHONORMAL_TOL = 1e-9


def _as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (3,):
        raise DomainError(f"expected a 3-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics plus camera-to-world pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray  # 3x3 camera-to-world
    translation: np.ndarray  # camera center, world units

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", _as_vec3(self.translation))
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise DomainError("image size must be at least 1x1")
        R = self.rotation
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHONORMAL_TOL:
            raise DomainError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOL:
            raise DomainError("rotation must have determinant +1")

    @property
    def center(self) -> np.ndarray:
        return self.translation


@dataclass(frozen=True)
class Ray:
    """Parametric ray origin + t * direction with a valid t interval."""

    origin: np.ndarray
    direction: np.ndarray  # unit vector
    t_near: float = 0.0
    t_far: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "origin", _as_vec3(self.origin))
        object.__setattr__(self, "direction", _as_vec3(self.direction))
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise DomainError("ray direction must be a unit vector")
        if not (0.0 <= self.t_near <= self.t_far):
            raise DomainError("require 0 <= t_near <= t_far")

    def point_at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class BoundingVolume:
    """Axis-aligned box; may be degenerate along any axis (planar surface)."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", _as_vec3(self.min_corner))
        object.__setattr__(self, "max_corner", _as_vec3(self.max_corner))
        if np.any(self.min_corner > self.max_corner):
            raise DomainError("min_corner must be <= max_corner componentwise")

    def translated(self, offset) -> "BoundingVolume":
        off = _as_vec3(offset)
        return BoundingVolume(self.min_corner + off, self.max_corner + off)

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return np.all((p >= self.min_corner) & (p <= self.max_corner), axis=-1)


@dataclass(frozen=True)
class Detection:
    """A 2D object detection; invalid detections are carried, never dropped."""

    object_id: str
    bbox: tuple = (0.0, 0.0, 0.0, 0.0)  # x_min, y_min, x_max, y_max in pixels
    valid: bool = True

    def __post_init__(self):
        if self.valid:
            x0, y0, x1, y1 = self.bbox
            if x0 > x1 or y0 > y1:
                raise DomainError("valid detection requires x_min <= x_max and y_min <= y_max")

    @property
    def center(self) -> np.ndarray:
        x0, y0, x1, y1 = self.bbox
        return np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])

    @property
    def lower_mid(self) -> np.ndarray:
        """Middle point of the lower bbox edge (largest pixel y)."""
        x0, _, x1, y1 = self.bbox
        return np.array([(x0 + x1) / 2.0, y1])


def look_at(center, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-to-world rotation for a camera at ``center`` looking at ``target``.

    Screen-down maps to world-down: the camera y axis is chosen so that
    increasing pixel v moves the viewing direction toward -up.
    """
    c = _as_vec3(center)
    z = _as_vec3(target) - c
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise DomainError("look_at target coincides with camera center")
    z = z / nz
    x = np.cross(z, _as_vec3(up))
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise DomainError("viewing direction is parallel to the up vector")
    x = x / nx
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def pixel_rays(camera: CameraModel, pixels: np.ndarray, t_near: float = 0.0, t_far: float = math.inf):
    """Vectorized ray construction; ``pixels`` is (n, 2). Returns (origins, dirs)."""
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    if np.any(px[:, 0] < 0) or np.any(px[:, 0] >= camera.width) or np.any(px[:, 1] < 0) or np.any(px[:, 1] >= camera.height):
        raise DomainError("pixel outside image bounds")
    d_cam = np.stack(
        [
            (px[:, 0] - camera.cx) / camera.fx,
            (px[:, 1] - camera.cy) / camera.fy,
            np.ones(len(px)),
        ],
        axis=1,
    )
    d_world = d_cam @ camera.rotation.T
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    origins = np.broadcast_to(camera.center, d_world.shape).copy()
    return origins, d_world


def pixel_ray(camera: CameraModel, pixel, t_near: float = 0.0, t_far: float = math.inf) -> Ray:
    """The world-space ray traced through one pixel."""
    origins, dirs = pixel_rays(camera, np.asarray(pixel, dtype=np.float64).reshape(1, 2), t_near, t_far)
    return Ray(origins[0], dirs[0], t_near, t_far)


def project_point(camera: CameraModel, point) -> np.ndarray:
    """Project a world point to pixel coordinates (inverse of pixel_ray)."""
    p_cam = camera.rotation.T @ (_as_vec3(point) - camera.center)
    if p_cam[2] <= 0:
        raise DomainError("point is behind the camera")
    return np.array(
        [
            camera.fx * p_cam[0] / p_cam[2] + camera.cx,
            camera.fy * p_cam[1] / p_cam[2] + camera.cy,
        ]
    )


def intersect_aabb_batch(origins: np.ndarray, dirs: np.ndarray, box: BoundingVolume, t_near, t_far):
    """Slab intersection of many rays with one box.

    Returns (t_in, t_out, hit). Intervals are clipped to [t_near, t_far];
    grazing hits keep t_in == t_out and count as hits.
    """
    o = np.asarray(origins, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)
    t_lo = np.broadcast_to(np.asarray(t_near, dtype=np.float64), o.shape[:-1]).copy()
    t_hi = np.broadcast_to(np.asarray(t_far, dtype=np.float64), o.shape[:-1]).copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (box.min_corner - o) * inv
        t1 = (box.max_corner - o) * inv
    # Axis-parallel rays: inside the slab -> unconstrained, outside -> empty.
    parallel = d == 0.0
    if np.any(parallel):
        inside = (o >= box.min_corner) & (o <= box.max_corner)
        t0 = np.where(parallel, np.where(inside, -np.inf, np.inf), t0)
        t1 = np.where(parallel, np.where(inside, np.inf, -np.inf), t1)
    t_in = np.maximum(np.max(np.minimum(t0, t1), axis=-1), t_lo)
    t_out = np.minimum(np.min(np.maximum(t0, t1), axis=-1), t_hi)
    return t_in, t_out, t_in <= t_out


def intersect_aabb(ray: Ray, box: BoundingVolume):
    """Ray/box slab test. Returns (t_in, t_out) or None on a miss."""
    t_in, t_out, hit = intersect_aabb_batch(
        ray.origin[None, :], ray.direction[None, :], box, ray.t_near, ray.t_far
    )
    if not hit[0]:
        return None
    return float(t_in[0]), float(t_out[0])


def project_to_ground(det: Detection, camera: CameraModel) -> np.ndarray:
    """3D position of a detection: its lower bbox midpoint dropped onto y=0.

    The returned point has y == 0 bit-exactly.
    """
    if not det.valid:
        raise DomainError("cannot project an invalid detection")
    ray = pixel_ray(camera, det.lower_mid)
    dy = ray.direction[1]
    if dy == 0.0:
        raise NoIntersectionError("ray is parallel to the ground plane")
    t = -ray.origin[1] / dy
    if t <= 0.0 or not math.isfinite(t):
        raise NoIntersectionError("ground plane is behind the camera")
    p = ray.point_at(t)
    p[1] = 0.0
    return p


def camera_relative_to_world(delta_cam, camera: CameraModel) -> np.ndarray:
    """Map a camera-frame displacement to world coordinates via M."""
    return camera.rotation @ _as_vec3(delta_cam)


def world_to_camera_relative(delta_world, camera: CameraModel) -> np.ndarray:
    """Inverse of :func:`camera_relative_to_world` (M is orthonormal)."""
    return camera.rotation.T @ _as_vec3(delta_world)
