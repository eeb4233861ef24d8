"""Radiance fields and their deterministic building blocks.

A field maps a 3D position in object-local coordinates to an opacity density
``sigma`` and a feature vector (RGB by default). All variants are analytic so
rendered values can be checked against closed forms. Style codes modulate the
feature branch only; geometry (sigma) never depends on style.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import BoundingVolume

# Default latent dimensions; scenes may override style/pose sizes.
D_STYLE = 8
D_POSE = 4
D_FEATURE = 3

# StyleCode / PoseCode are plain float vectors of D_STYLE / D_POSE entries.
StyleCode = np.ndarray
PoseCode = np.ndarray


@dataclass(frozen=True)
class RadianceSample:
    """One field evaluation: opacity density per world unit plus a feature."""

    sigma: float
    feature: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "feature", np.asarray(self.feature, dtype=np.float64))
        if self.sigma < 0:
            raise DomainError("sigma must be nonnegative")


def positional_encoding(x, octaves: int) -> np.ndarray:
    """Concatenate x with sin/cos at frequencies 2^0..2^(L-1) times pi.

    Output layout is octave-major: (x, sin(2^0 pi x), cos(2^0 pi x), ...),
    each block holding all components of x. Length is n * (2L + 1).
    """
    if octaves < 0:
        raise DomainError("octave count must be >= 0")
    v = np.atleast_1d(np.asarray(x, dtype=np.float64))
    parts = [v]
    for k in range(octaves):
        scaled = (2.0**k) * math.pi * v
        parts.append(np.sin(scaled))
        parts.append(np.cos(scaled))
    return np.concatenate(parts)


def encoding_anneal_weights(alpha: float, octaves: int) -> np.ndarray:
    """Cosine-eased per-octave weights for gradually introduced encodings.

    Octave k gets weight (1 - cos(pi * clamp(alpha * L - k, 0, 1))) / 2, so
    alpha=0 silences every octave and alpha=1 enables them all.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must lie in [0, 1]")
    k = np.arange(octaves, dtype=np.float64)
    ramp = np.clip(alpha * octaves - k, 0.0, 1.0)
    return (1.0 - np.cos(math.pi * ramp)) / 2.0


@dataclass(frozen=True)
class StyleResponse:
    """Affine maps from a style code to feature-space scale and shift."""

    gamma_w: np.ndarray  # (d_f, d_w)
    gamma_bias: np.ndarray  # (d_f,)
    beta_w: np.ndarray  # (d_f, d_w)
    beta_bias: np.ndarray  # (d_f,)

    def __post_init__(self):
        for name in ("gamma_w", "gamma_bias", "beta_w", "beta_bias"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        d_f = self.gamma_bias.shape[0]
        if self.beta_bias.shape != (d_f,) or self.gamma_w.shape[0] != d_f or self.beta_w.shape[0] != d_f:
            raise DomainError("style response maps disagree on feature dimension")
        if self.gamma_w.shape != self.beta_w.shape:
            raise DomainError("gamma and beta must accept the same style dimension")

    @staticmethod
    def identity(d_feature: int = D_FEATURE, d_style: int = D_STYLE) -> "StyleResponse":
        zeros = np.zeros((d_feature, d_style))
        return StyleResponse(zeros, np.ones(d_feature), zeros, np.zeros(d_feature))

    def gamma(self, w: StyleCode) -> np.ndarray:
        return self.gamma_w @ np.asarray(w, dtype=np.float64) + self.gamma_bias

    def beta(self, w: StyleCode) -> np.ndarray:
        return self.beta_w @ np.asarray(w, dtype=np.float64) + self.beta_bias


def style_modulate(h, w: StyleCode, response: StyleResponse) -> np.ndarray:
    """Scale-and-shift a feature vector: gamma(w) * h + beta(w)."""
    h = np.asarray(h, dtype=np.float64)
    g = response.gamma(w)
    if h.shape[-1] != g.shape[0]:
        raise DomainError(f"feature dimension {h.shape[-1]} does not match style response {g.shape[0]}")
    return g * h + response.beta(w)


@dataclass(frozen=True)
class BendDescriptor:
    """Pose-conditioned deformation x -> x + B(x, pi).

    Variants: ``zero`` (identity), ``constant`` (translate by (pi0, pi1, pi2)),
    ``sway`` (x-offset pi0 * sin(pi1 * y), a height-dependent lean).
    """

    variant: str = "zero"

    def __post_init__(self):
        if self.variant not in ("zero", "constant", "sway"):
            raise DomainError(f"unknown bend variant {self.variant!r}")


def bend_batch(xs: np.ndarray, pi: PoseCode, descriptor: BendDescriptor) -> np.ndarray:
    """Apply a bend to (n, 3) positions."""
    xs = np.asarray(xs, dtype=np.float64)
    if descriptor.variant == "zero":
        return xs
    pi = np.asarray(pi, dtype=np.float64)
    out = xs.copy()
    if descriptor.variant == "constant":
        out += pi[:3]
    else:  # sway
        out[..., 0] += pi[0] * np.sin(pi[1] * xs[..., 1])
    return out


def bend(x, pi: PoseCode, descriptor: BendDescriptor) -> np.ndarray:
    """Single-point convenience wrapper around :func:`bend_batch`."""
    return bend_batch(np.asarray(x, dtype=np.float64)[None, :], pi, descriptor)[0]


class Field:
    """Base class for analytic radiance fields.

    Subclasses implement ``raw_sigma_features`` returning un-modulated
    (sigma, features) for a batch of local-frame positions; style modulation
    of the feature branch is applied here so geometry can never see ``w``.
    """

    style: StyleResponse
    needs_ray = False

    def raw_sigma_features(self, xs, view_dirs=None, origins=None):
        raise NotImplementedError

    def sample_batch(self, xs, w: StyleCode, view_dirs=None, origins=None):
        if self.needs_ray and (view_dirs is None or origins is None):
            raise DomainError("background fields require view directions and ray origins")
        sigma, feats = self.raw_sigma_features(np.asarray(xs, dtype=np.float64), view_dirs, origins)
        g = self.style.gamma(w)
        b = self.style.beta(w)
        return sigma, feats * g + b


def sample_field(field_desc: Field, x, w: StyleCode, view_dir=None, ray_origin=None) -> RadianceSample:
    """Evaluate a field at one local-frame position."""
    xs = np.asarray(x, dtype=np.float64)[None, :]
    vd = None if view_dir is None else np.asarray(view_dir, dtype=np.float64)[None, :]
    ro = None if ray_origin is None else np.asarray(ray_origin, dtype=np.float64)[None, :]
    sigma, feats = field_desc.sample_batch(xs, w, vd, ro)
    return RadianceSample(float(sigma[0]), feats[0])


@dataclass(frozen=True)
class UniformBoxField(Field):
    """Constant density and color inside a local-frame box, empty outside."""

    sigma: float
    color: np.ndarray
    box: BoundingVolume
    style: StyleResponse = field(default_factory=StyleResponse.identity)

    def __post_init__(self):
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64))
        if self.sigma < 0:
            raise DomainError("sigma must be nonnegative")

    def raw_sigma_features(self, xs, view_dirs=None, origins=None):
        inside = self.box.contains(xs)
        sigma = np.where(inside, self.sigma, 0.0)
        feats = np.where(inside[:, None], self.color, 0.0)
        return sigma, feats


@dataclass(frozen=True)
class CheckerPlaneField(Field):
    """Thin horizontal slab with two colors alternating in x/z cells."""

    sigma: float
    cell: float
    color_a: np.ndarray
    color_b: np.ndarray
    y_center: float = 0.0
    thickness: float = 0.2
    style: StyleResponse = field(default_factory=StyleResponse.identity)

    def __post_init__(self):
        object.__setattr__(self, "color_a", np.asarray(self.color_a, dtype=np.float64))
        object.__setattr__(self, "color_b", np.asarray(self.color_b, dtype=np.float64))
        if self.sigma < 0 or self.cell <= 0 or self.thickness < 0:
            raise DomainError("checker plane requires sigma >= 0, cell > 0, thickness >= 0")

    def raw_sigma_features(self, xs, view_dirs=None, origins=None):
        inside = np.abs(xs[:, 1] - self.y_center) <= self.thickness / 2.0
        parity = (np.floor(xs[:, 0] / self.cell) + np.floor(xs[:, 2] / self.cell)).astype(np.int64) % 2
        feats = np.where(parity[:, None] == 0, self.color_a, self.color_b)
        sigma = np.where(inside, self.sigma, 0.0)
        return sigma, np.where(inside[:, None], feats, 0.0)


@dataclass(frozen=True)
class VoxelGridField(Field):
    """Nearest-cell lookup into a dense sigma/color grid over a local box."""

    box: BoundingVolume
    sigma_grid: np.ndarray  # (nx, ny, nz)
    color_grid: np.ndarray  # (nx, ny, nz, d_f)
    style: StyleResponse = field(default_factory=StyleResponse.identity)

    def __post_init__(self):
        object.__setattr__(self, "sigma_grid", np.asarray(self.sigma_grid, dtype=np.float64))
        object.__setattr__(self, "color_grid", np.asarray(self.color_grid, dtype=np.float64))
        if self.sigma_grid.ndim != 3 or min(self.sigma_grid.shape) < 1:
            raise DomainError("sigma grid must be a 3D array with positive dimensions")
        if self.color_grid.shape[:3] != self.sigma_grid.shape:
            raise DomainError("color grid must match sigma grid resolution")
        if np.any(self.sigma_grid < 0):
            raise DomainError("sigma grid must be nonnegative")

    def raw_sigma_features(self, xs, view_dirs=None, origins=None):
        inside = self.box.contains(xs)
        extent = self.box.max_corner - self.box.min_corner
        extent = np.where(extent > 0, extent, 1.0)
        res = np.array(self.sigma_grid.shape)
        idx = np.floor((xs - self.box.min_corner) / extent * res).astype(np.int64)
        idx = np.clip(idx, 0, res - 1)
        sigma = np.where(inside, self.sigma_grid[idx[:, 0], idx[:, 1], idx[:, 2]], 0.0)
        feats = np.where(inside[:, None], self.color_grid[idx[:, 0], idx[:, 1], idx[:, 2]], 0.0)
        return sigma, feats


@dataclass(frozen=True)
class SphereBackgroundField(Field):
    """Terminal-opaque sky: a vertical gradient over the view direction,
    shifted by a linear function of the ray origin to fake parallax."""

    color_zenith: np.ndarray
    color_horizon: np.ndarray
    origin_shift: np.ndarray  # (d_f, 3)
    style: StyleResponse = field(default_factory=StyleResponse.identity)
    needs_ray = True

    def __post_init__(self):
        object.__setattr__(self, "color_zenith", np.asarray(self.color_zenith, dtype=np.float64))
        object.__setattr__(self, "color_horizon", np.asarray(self.color_horizon, dtype=np.float64))
        object.__setattr__(self, "origin_shift", np.asarray(self.origin_shift, dtype=np.float64))
        if self.origin_shift.shape != (self.color_zenith.shape[0], 3):
            raise DomainError("origin_shift must map 3-vectors to the feature dimension")

    def raw_sigma_features(self, xs, view_dirs=None, origins=None):
        u = (view_dirs[:, 1] + 1.0) / 2.0
        feats = self.color_horizon + u[:, None] * (self.color_zenith - self.color_horizon)
        feats = feats + origins @ self.origin_shift.T
        sigma = np.full(len(feats), np.inf)
        return sigma, feats


FieldDescriptor = Field
