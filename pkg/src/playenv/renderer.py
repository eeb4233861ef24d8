"""Compositional volumetric rendering.

Each object owns a bounded field; a ray is intersected with every object's
box, sampled at deterministic midpoints, and the per-object sample lists are
merged by depth and integrated with the standard transmittance quadrature

    C = sum_i T_i (1 - exp(-sigma_i delta_i)) f_i,   T_i = exp(-sum_{j<i} sigma_j delta_j)

with the sphere background composited as a terminal opaque sample. Images are
assembled from feature maps rendered on coarse pixel grids (one ray per grid
cell) and decoded by bilinear upsampling; a dense mode (factor 1) renders one
ray per pixel and is the reference oracle.

Rendering is pure: scene and states are immutable during a call and every ray
is independent, so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError
from .fields import BendDescriptor, Field, RadianceSample, bend_batch, D_STYLE, D_POSE
from .geometry import BoundingVolume, CameraModel, Ray, intersect_aabb_batch, pixel_rays

DEFAULT_FACTORS = (8, 4)


@dataclass(frozen=True)
class ObjectSpec:
    """A renderable object: a bounded field plus its sampling budget.

    ``volume`` is expressed in the object's local frame; at render time it is
    translated to the object's anchor (static objects) or to the position in
    its environment state (playable objects).
    """

    object_id: str
    kind: str  # "static" | "playable"
    volume: BoundingVolume
    field: Field
    samples_per_ray: int
    anchor: np.ndarray
    bend: Optional[BendDescriptor] = None
    style: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=np.float64))
        if self.kind not in ("static", "playable"):
            raise DomainError(f"unknown object kind {self.kind!r}")
        if self.samples_per_ray < 0:
            raise DomainError("samples_per_ray must be >= 0")
        if self.style is not None:
            object.__setattr__(self, "style", np.asarray(self.style, dtype=np.float64))


@dataclass(frozen=True)
class Scene:
    """What the renderer needs: objects, one background field, ray bounds."""

    objects: tuple
    background: Field
    t_near: float = 0.0
    t_far: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class RaySamplePoint:
    t: float
    delta: float
    sample: RadianceSample
    object_id: str


@dataclass(frozen=True)
class FeatureMap:
    """Feature grid rendered at one downsampling factor."""

    data: np.ndarray  # (h/d, w/d, d_f)
    factor: int


def _object_state(obj: ObjectSpec, state):
    if state is not None:
        return (
            np.asarray(state.x, dtype=np.float64),
            np.asarray(state.w, dtype=np.float64),
            np.asarray(state.pi, dtype=np.float64),
        )
    w = obj.style if obj.style is not None else np.zeros(D_STYLE)
    return obj.anchor, w, np.zeros(D_POSE)


def _sample_object_block(origins, dirs, t_near, t_far, obj: ObjectSpec, state, jitter_rng=None):
    """Sample one object along a batch of rays.

    Returns (ts, deltas, sigmas, feats) arrays of shape (R, N); rays that
    miss (or graze) the object's box get sigma 0 and t = +inf so they drop
    out of the merged integration.
    """
    n_rays = len(origins)
    n = obj.samples_per_ray
    ts = np.full((n_rays, n), np.inf)
    deltas = np.ones((n_rays, n))
    sigmas = np.zeros((n_rays, n))
    anchor, w, pi = _object_state(obj, state)
    d_f = obj.field.style.gamma_bias.shape[0]
    feats = np.zeros((n_rays, n, d_f))
    if n == 0:
        return ts, deltas, sigmas, feats

    box = obj.volume.translated(anchor)
    t_in, t_out, hit = intersect_aabb_batch(origins, dirs, box, t_near, t_far)
    live = hit & (t_out > t_in)  # grazing hits emit zero samples
    if not np.any(live):
        return ts, deltas, sigmas, feats

    span = (t_out[live] - t_in[live])[:, None]
    if jitter_rng is None:
        offsets = (np.arange(n) + 0.5) / n
        t_live = t_in[live][:, None] + offsets[None, :] * span
    else:
        offsets = (np.arange(n)[None, :] + jitter_rng.uniform(size=(int(np.sum(live)), n))) / n
        t_live = t_in[live][:, None] + offsets * span
    positions = origins[live][:, None, :] + t_live[:, :, None] * dirs[live][:, None, :]
    local = (positions - anchor).reshape(-1, 3)
    if obj.bend is not None:
        local = bend_batch(local, pi, obj.bend)
    sig, f = obj.field.sample_batch(local, w)

    ts[live] = t_live
    deltas[live] = span / n
    sigmas[live] = sig.reshape(-1, n)
    feats[live] = f.reshape(-1, n, d_f)
    return ts, deltas, sigmas, feats


def sample_object_ray(ray: Ray, obj: ObjectSpec, state=None, jitter_rng=None):
    """Per-object midpoint samples for one ray, as a depth-ordered list."""
    ts, deltas, sigmas, feats = _sample_object_block(
        ray.origin[None, :], ray.direction[None, :], ray.t_near, ray.t_far, obj, state, jitter_rng
    )
    if not math.isfinite(ts[0, 0]):
        return []
    return [
        RaySamplePoint(float(ts[0, p]), float(deltas[0, p]), RadianceSample(float(sigmas[0, p]), feats[0, p]), obj.object_id)
        for p in range(obj.samples_per_ray)
    ]


def merge_samples(lists: Sequence[Sequence[RaySamplePoint]]):
    """Merge per-object sample lists by t; ties keep lower object id first."""
    merged = [s for lst in sorted(lists, key=lambda l: l[0].object_id if l else "") for s in lst]
    merged.sort(key=lambda s: s.t)  # stable, so equal t preserves id order
    return merged


def _integrate_arrays(sigmas, deltas, feats, bg_feats=None):
    """Quadrature over (R, S) sample arrays. Returns (out, residual, weights)."""
    tau = sigmas * deltas
    if tau.shape[1]:
        cum = np.cumsum(tau, axis=1)
        transmittance = np.exp(-np.concatenate([np.zeros((tau.shape[0], 1)), cum[:, :-1]], axis=1))
        residual = np.exp(-cum[:, -1])
    else:
        transmittance = np.ones_like(tau)
        residual = np.ones(tau.shape[0])
    weights = transmittance * -np.expm1(-tau)
    out = np.einsum("rs,rsf->rf", weights, feats)
    if bg_feats is not None:
        out = out + residual[:, None] * bg_feats
    return out, residual, weights


def integrate(samples: Sequence[RaySamplePoint], background: Optional[RadianceSample] = None):
    """Integrate one ray's merged samples; background is terminal-opaque.

    Returns (feature, residual_transmittance).
    """
    ts = np.array([s.t for s in samples])
    if np.any(np.diff(ts) < 0):
        raise DomainError("samples must be sorted by t")
    if any(s.delta <= 0 for s in samples):
        raise DomainError("sample segment lengths must be positive")
    d_f = len(samples[0].sample.feature) if samples else (len(background.feature) if background else 0)
    sigmas = np.array([s.sample.sigma for s in samples]).reshape(1, -1)
    deltas = np.array([s.delta for s in samples]).reshape(1, -1)
    feats = np.array([s.sample.feature for s in samples], dtype=np.float64).reshape(1, -1, d_f)
    bg = None if background is None else np.asarray(background.feature, dtype=np.float64).reshape(1, -1)
    out, residual, _ = _integrate_arrays(sigmas, deltas, feats, bg)
    return out[0], float(residual[0])


def composite_rays(scene: Scene, states: Mapping, origins, dirs, t_near=None, t_far=None,
                   jitter_rng=None, return_weights=False):
    """Render a batch of rays against the whole scene.

    Returns (features, residual) of shapes (R, d_f) and (R,); with
    ``return_weights`` also the per-sample weight matrix whose rows, together
    with the residual, sum to one.
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    t_near = scene.t_near if t_near is None else t_near
    t_far = scene.t_far if t_far is None else t_far

    blocks = []
    for obj in sorted(scene.objects, key=lambda o: o.object_id):
        blocks.append(_sample_object_block(origins, dirs, t_near, t_far, obj, states.get(obj.object_id), jitter_rng))
    if blocks:
        ts = np.concatenate([b[0] for b in blocks], axis=1)
        deltas = np.concatenate([b[1] for b in blocks], axis=1)
        sigmas = np.concatenate([b[2] for b in blocks], axis=1)
        feats = np.concatenate([b[3] for b in blocks], axis=1)
        order = np.argsort(ts, axis=1, kind="stable")
        rows = np.arange(len(origins))[:, None]
        deltas = deltas[rows, order]
        sigmas = sigmas[rows, order]
        feats = feats[rows, order]
    else:
        sigmas = deltas = np.zeros((len(origins), 0))
        feats = np.zeros((len(origins), 0, scene.background.style.gamma_bias.shape[0]))

    bg_state = states.get("background")
    bg_w = np.asarray(bg_state.w, dtype=np.float64) if bg_state is not None else np.zeros(D_STYLE)
    _, bg_feats = scene.background.sample_batch(np.zeros_like(origins), bg_w, view_dirs=dirs, origins=origins)

    out, residual, weights = _integrate_arrays(sigmas, deltas, feats, bg_feats)
    if return_weights:
        return out, residual, weights
    return out, residual


def compose_and_render_ray(ray: Ray, scene: Scene, states: Mapping) -> np.ndarray:
    """Feature reaching the camera along one ray (all objects + background)."""
    if scene.background is None:
        raise DomainError("scene has no background field")
    out, _ = composite_rays(scene, states, ray.origin[None, :], ray.direction[None, :],
                            t_near=ray.t_near, t_far=ray.t_far)
    return out[0]


def grid_positions(size: int, factor: int) -> np.ndarray:
    """Pixel-center coordinates sampled for one feature-map axis.

    For factor d >= 2 the cells sit at d/2 + 0.5 + k*d (the 1-based grid
    {d/2 + 1 + k*d} translated to 0-based pixel centers). Factor 1 is dense:
    every pixel center.
    """
    if size % factor != 0:
        raise DomainError(f"factor {factor} does not divide image size {size}")
    if factor == 1:
        return 0.5 + np.arange(size, dtype=np.float64)
    return factor / 2.0 + 0.5 + factor * np.arange(size // factor, dtype=np.float64)


def render_feature_map(scene: Scene, states: Mapping, camera: CameraModel, factor: int,
                       jitter_rng=None) -> FeatureMap:
    """Render one ray per grid cell at the stated downsampling factor."""
    xs = grid_positions(camera.width, factor)
    ys = grid_positions(camera.height, factor)
    px, py = np.meshgrid(xs, ys)
    pixels = np.stack([px.ravel(), py.ravel()], axis=1)
    origins, dirs = pixel_rays(camera, pixels)
    out, _ = composite_rays(scene, states, origins, dirs, jitter_rng=jitter_rng)
    return FeatureMap(out.reshape(len(ys), len(xs), -1), factor)


def bilinear_upsample(fmap: FeatureMap, width: int, height: int) -> np.ndarray:
    """Upsample a feature map to full resolution, evaluating at pixel centers
    with edge extension beyond the outermost grid cells."""

    def axis_weights(size, factor, count):
        centers = 0.5 + np.arange(size)
        g = (centers - grid_positions(size, factor)[0]) / factor
        g = np.clip(g, 0.0, count - 1.0)
        i0 = np.floor(g).astype(np.int64)
        i0 = np.minimum(i0, count - 1)
        i1 = np.minimum(i0 + 1, count - 1)
        frac = g - i0
        return i0, i1, frac

    rows, cols, _ = fmap.data.shape
    j0, j1, fx = axis_weights(width, fmap.factor, cols)
    i0, i1, fy = axis_weights(height, fmap.factor, rows)
    top = fmap.data[i0][:, j0] * (1 - fx)[None, :, None] + fmap.data[i0][:, j1] * fx[None, :, None]
    bot = fmap.data[i1][:, j0] * (1 - fx)[None, :, None] + fmap.data[i1][:, j1] * fx[None, :, None]
    return top * (1 - fy)[:, None, None] + bot * fy[:, None, None]


def bilinear_average_decode(maps: Sequence[FeatureMap], width: int, height: int) -> np.ndarray:
    """Default decode: upsample each map to full resolution and average."""
    if not maps:
        raise DomainError("no feature maps to decode")
    return sum(bilinear_upsample(m, width, height) for m in maps) / len(maps)


def render_image(scene: Scene, states: Mapping, camera: CameraModel,
                 factors: Sequence[int] = DEFAULT_FACTORS, decoder=bilinear_average_decode,
                 jitter_rng=None) -> np.ndarray:
    """Render feature maps at every factor and decode to an (h, w, d_f) image.

    ``factors=(1,)`` is the dense reference mode: one ray per pixel, identity
    decode.
    """
    maps = [render_feature_map(scene, states, camera, d, jitter_rng=jitter_rng) for d in factors]
    return decoder(maps, camera.width, camera.height)


def ray_budget(width: int, height: int, factors: Sequence[int] = DEFAULT_FACTORS) -> int:
    """Number of rays an image render casts at the given factors."""
    total = 0
    for d in factors:
        if width % d or height % d:
            raise DomainError(f"factor {d} does not divide {width}x{height}")
        total += (width // d) * (height // d)
    return total


FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def frame_hash(image: np.ndarray) -> int:
    """Deterministic 64-bit FNV-1a content hash of a float image.

    Values are rounded to 1e-6 (as little-endian int64 micro-units) before
    hashing, absorbing one 64-bit word per element, so equal images hash
    equally across platforms regardless of sub-1e-6 float noise.
    """
    quantized = np.rint(np.asarray(image, dtype=np.float64) * 1e6).astype("<i8")
    h = FNV_OFFSET
    mask = (1 << 64) - 1
    for word in quantized.ravel().view("<u8").tolist():
        h ^= word
        h = (h * FNV_PRIME) & mask
    return h


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Clamp [0,1] features to 8-bit channels."""
    return np.rint(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, image: np.ndarray) -> None:
    """Write an (h, w, 3) or (h, w) float image as an 8-bit PNG."""
    from PIL import Image

    arr = to_uint8(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    mode = "RGB" if arr.ndim == 3 else "L"
    if arr.ndim == 3 and arr.shape[2] != 3:
        raise DomainError("PNG output supports 1 or 3 channels")
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


def png_bytes(image: np.ndarray) -> bytes:
    """PNG-encode an image to bytes (for the wire protocol)."""
    import io

    from PIL import Image

    arr = to_uint8(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB" if arr.ndim == 3 else "L").save(buf, format="PNG")
    return buf.getvalue()
