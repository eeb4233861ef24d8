"""Environment-state dynamics, discrete-action quantization and losses.

Actions are camera-relative: a discrete action ``a`` names a motion centroid
``mu_a`` in camera coordinates, and stepping applies the world displacement
``M (mu_a + v)`` where ``M`` is the camera-to-world rotation and ``v`` an
optional residual (zero at inference). Conversely, the action of an observed
transition is the nearest centroid to ``M^T (x_next - x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .fields import D_POSE, D_STYLE
from .geometry import CameraModel


@dataclass(frozen=True)
class EnvironmentState:
    """Per-object state at one timestep: position, style code, pose code."""

    x: np.ndarray
    w: np.ndarray
    pi: np.ndarray
    valid: bool = True

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=np.float64))
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=np.float64))
        if self.valid and not (
            np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.pi))
        ):
            raise DomainError("valid states must be finite")

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x, self.w, self.pi])


def make_state(x, w=None, pi=None, valid=True) -> EnvironmentState:
    return EnvironmentState(
        np.asarray(x, dtype=np.float64),
        np.zeros(D_STYLE) if w is None else np.asarray(w, dtype=np.float64),
        np.zeros(D_POSE) if pi is None else np.asarray(pi, dtype=np.float64),
        valid,
    )


@dataclass(frozen=True)
class PoseBank:
    """Cyclic pose update: each step advances to the next preset code."""

    codes: tuple

    def __post_init__(self):
        object.__setattr__(self, "codes", tuple(np.asarray(c, dtype=np.float64) for c in self.codes))
        if not self.codes:
            raise DomainError("pose bank needs at least one code")

    def advance(self, pi: np.ndarray) -> np.ndarray:
        dists = [float(np.linalg.norm(pi - c)) for c in self.codes]
        return self.codes[(int(np.argmin(dists)) + 1) % len(self.codes)]


@dataclass(frozen=True)
class ActionModel:
    """K motion centroids in camera-relative displacement space."""

    centroids: np.ndarray  # (K, 3)
    pose_update: Optional[PoseBank] = None

    def __post_init__(self):
        object.__setattr__(self, "centroids", np.asarray(self.centroids, dtype=np.float64).reshape(-1, 3))
        if len(self.centroids) < 1:
            raise DomainError("need at least one action")
        if not np.all(np.isfinite(self.centroids)):
            raise DomainError("centroids must be finite")

    @property
    def k(self) -> int:
        return len(self.centroids)


@dataclass(frozen=True)
class LossWeights:
    lambda_rec: float = 1.0
    lambda_act: float = 0.15
    lambda_delta: float = 0.1
    lambda_g: float = 0.1

    def __post_init__(self):
        if min(self.lambda_rec, self.lambda_act, self.lambda_delta, self.lambda_g) < 0:
            raise DomainError("loss weights must be nonnegative")


@dataclass(frozen=True)
class LossComponents:
    rec: float
    act: float
    delta: float
    gan: float = 0.0


@dataclass(frozen=True)
class ActionDistribution:
    """A probability vector over the K actions."""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=np.float64))
        if np.any(self.p < 0) or abs(float(np.sum(self.p)) - 1.0) > 1e-9:
            raise DomainError("action distribution must be nonnegative and sum to 1")


def valid_prefix(states: Sequence[EnvironmentState]) -> int:
    """Length of the longest all-valid prefix."""
    n = 0
    for s in states:
        if not s.valid:
            break
        n += 1
    return n


def _require_valid(*states: EnvironmentState):
    if not all(s.valid for s in states):
        raise DomainError("invalid states are masked; trim to the valid prefix first")


def extract_delta(s_t: EnvironmentState, s_next: EnvironmentState, camera: CameraModel) -> np.ndarray:
    """Observed displacement between two states, in camera coordinates."""
    _require_valid(s_t, s_next)
    return camera.rotation.T @ (s_next.x - s_t.x)


def infer_action(s_t: EnvironmentState, s_next: EnvironmentState, camera: CameraModel, model: ActionModel):
    """Quantize a transition: nearest centroid index plus the residual."""
    _require_valid(s_t, s_next)
    delta = extract_delta(s_t, s_next, camera)
    a = int(np.argmin(np.linalg.norm(model.centroids - delta, axis=1)))  # ties -> lowest index
    return a, delta - model.centroids[a]


def dynamics_step(s_t: EnvironmentState, a: int, v, camera: CameraModel, model: ActionModel,
                  clamp_to_ground: bool = True) -> EnvironmentState:
    """Advance one step: x + M(mu_a + v). ``v=None`` means the inference
    default v = 0. Playable objects stay on the ground plane (y = 0)."""
    if not 0 <= a < model.k:
        raise DomainError(f"action index {a} out of range for K={model.k}")
    v = np.zeros(3) if v is None else np.asarray(v, dtype=np.float64)
    x = s_t.x + camera.rotation @ (model.centroids[a] + v)
    if clamp_to_ground:
        x = x.copy()
        x[1] = 0.0
    pi = model.pose_update.advance(s_t.pi) if model.pose_update is not None else s_t.pi
    return EnvironmentState(x, s_t.w, pi, True)


def rollout(s_1: EnvironmentState, actions: Sequence[int], cameras: Sequence[CameraModel],
            model: ActionModel, clamp_to_ground: bool = True):
    """Autoregressive unroll; returns |actions| + 1 states starting at s_1."""
    if len(actions) != len(cameras):
        raise DomainError("need one camera per action")
    states = [s_1]
    for a, cam in zip(actions, cameras):
        states.append(dynamics_step(states[-1], a, None, cam, model, clamp_to_ground))
    return states


def state_reconstruction_loss(states: Sequence[EnvironmentState],
                              reconstructed: Sequence[EnvironmentState]) -> float:
    """Mean squared error over (x, w, pi), restricted to the valid prefix."""
    prefix = min(valid_prefix(states), valid_prefix(reconstructed))
    if len(reconstructed) < prefix or len(states) < prefix:
        raise DomainError("sequences shorter than the valid prefix")
    if prefix == 0:
        return 0.0
    a = np.stack([s.flat() for s in states[:prefix]])
    b = np.stack([s.flat() for s in reconstructed[:prefix]])
    if a.shape != b.shape:
        raise DomainError("state dimensions differ between sequences")
    return float(np.mean((a - b) ** 2))


def mutual_information_loss(ps: Sequence[ActionDistribution], ps_hat: Sequence[ActionDistribution]) -> float:
    """Negative mutual information of the batch joint of paired distributions.

    The joint is the average outer product P(a, a_hat) = mean_j p_j (x) q_j;
    the loss is -MI(P), which is 0 for independent pairs and -log K for
    identical deterministic pairs with uniform marginals.
    """
    if len(ps) != len(ps_hat) or not ps:
        raise DomainError("need equally many distributions on both sides")
    p = np.stack([d.p for d in ps])
    q = np.stack([d.p for d in ps_hat])
    if p.shape != q.shape:
        raise DomainError("distribution sizes differ")
    joint = p.T @ q / len(ps)
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(joint > 0, joint * np.log(joint / (pa * pb)), 0.0)
    mi = float(np.sum(terms))
    k = p.shape[1]
    return -min(max(mi, 0.0), math.log(k))  # clamp float noise to the MI bounds


def total_variance(deltas: np.ndarray) -> float:
    """Per-point total variance: mean squared distance to the mean vector."""
    d = np.asarray(deltas, dtype=np.float64)
    return float(np.mean(np.sum((d - d.mean(axis=0)) ** 2, axis=1)))


def delta_loss(deltas, assignments: Sequence[ActionDistribution]) -> float:
    """Soft within-action scatter of displacements, variance-normalized.

    With soft assignments p_jk, each action's centroid is the p-weighted mean
    of its displacements and the loss is sum_jk p_jk ||delta_j - mu_k||^2
    divided by the total variance of the displacements.
    """
    d = np.asarray(deltas, dtype=np.float64)
    if len(d) < 2 or len(d) != len(assignments):
        raise DomainError("need at least two displacement/assignment pairs")
    p = np.stack([a.p for a in assignments])  # (J, K)
    var = total_variance(d)
    if var <= 0:
        raise DomainError("displacement variance is zero")
    mass = p.sum(axis=0)  # (K,)
    active = mass > 0
    mu = np.zeros((p.shape[1], d.shape[1]))
    mu[active] = (p.T @ d)[active] / mass[active, None]
    sq = np.sum((d[:, None, :] - mu[None, :, :]) ** 2, axis=2)  # (J, K)
    return float(np.sum(p[:, active] * sq[:, active]) / var)


def total_loss(components: LossComponents, weights: LossWeights) -> float:
    vals = (components.rec, components.act, components.delta, components.gan)
    if not all(math.isfinite(v) for v in vals):
        raise DomainError("loss components must be finite")
    return (
        weights.lambda_rec * components.rec
        + weights.lambda_act * components.act
        + weights.lambda_delta * components.delta
        + weights.lambda_g * components.gan
    )


def gumbel_softmax_sample(logits, temperature: float, seed=0, noise: bool = True) -> ActionDistribution:
    """Tempered softmax over logits plus (optionally) Gumbel noise.

    ``seed`` may be an integer or a numpy Generator; zero-noise mode gives the
    plain tempered softmax.
    """
    if temperature <= 0:
        raise DomainError("temperature must be positive")
    logits = np.asarray(logits, dtype=np.float64)
    if noise:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        u = np.clip(rng.uniform(size=logits.shape), 1e-300, 1.0 - 1e-16)
        logits = logits - np.log(-np.log(u))
    z = logits / temperature
    z = z - np.max(z)
    y = np.exp(z)
    return ActionDistribution(y / np.sum(y))


def _kmeans(points: np.ndarray, k: int, seed: int):
    """Lloyd iterations with seeded farthest-point init.

    Returns (centroids, labels, sse_history); runs to an assignment fixpoint
    or 100 iterations. Empty clusters keep their previous centroid.
    """
    pts = np.asarray(points, dtype=np.float64)
    rng = np.random.default_rng(seed)
    centroids = [pts[int(rng.integers(len(pts)))]]
    dist = np.linalg.norm(pts - centroids[0], axis=1)
    for _ in range(k - 1):
        centroids.append(pts[int(np.argmax(dist))])
        dist = np.minimum(dist, np.linalg.norm(pts - centroids[-1], axis=1))
    centroids = np.stack(centroids)

    labels = None
    history = []
    for _ in range(100):
        d2 = np.sum((pts[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(np.sum(d2[np.arange(len(pts)), new_labels])))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        for j in range(k):
            members = pts[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return centroids, labels, history


def fit_action_space(deltas, k: int, seed: int = 0) -> ActionModel:
    """Quantize observed displacements into K motion centroids (k-means)."""
    pts = np.asarray(deltas, dtype=np.float64).reshape(-1, 3)
    if len(np.unique(pts, axis=0)) < k:
        raise DomainError(f"need at least {k} distinct displacements")
    centroids, _, _ = _kmeans(pts, k, seed)
    return ActionModel(centroids)
