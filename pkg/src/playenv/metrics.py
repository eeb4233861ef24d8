"""Action-space and detection-based evaluation metrics.

Given displacements and the discrete actions paired with them, the two action
metrics measure how predictable each is from the other: delta_mse is the
variance-normalized error of regressing the displacement from the action
(0 when each action always moves the same way, 1 when actions carry no
information), and delta_acc classifies the action back from the displacement
with a nearest-mean rule. ADD/MDR compare two detection sequences, and
warp_eval scores novel-view renders against originals through a homography.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from .calibration import Homography
from .errors import DomainError
from .geometry import Detection


def _per_action_means(deltas: np.ndarray, actions: np.ndarray):
    labels = np.unique(actions)
    means = np.stack([deltas[actions == k].mean(axis=0) for k in labels])
    return labels, means


def delta_mse(deltas, actions) -> float:
    """Expected squared error of the per-action mean displacement estimator,
    normalized by the total variance of the displacements."""
    d = np.asarray(deltas, dtype=np.float64)
    a = np.asarray(actions)
    if len(d) != len(a):
        raise DomainError("one action per displacement required")
    if len(d) < 2:
        raise DomainError("need at least two samples")
    variance = float(np.mean(np.sum((d - d.mean(axis=0)) ** 2, axis=1)))
    if variance <= 0:
        raise DomainError("displacement variance is zero")
    labels, means = _per_action_means(d, a)
    lookup = {k: i for i, k in enumerate(labels)}
    assigned = means[np.array([lookup[k] for k in a])]
    numerator = float(np.mean(np.sum((d - assigned) ** 2, axis=1)))
    return numerator / variance


def delta_acc(deltas, actions) -> float:
    """Accuracy (percent) of recovering the action from the displacement with
    a nearest-per-action-mean classifier fit on the same data."""
    d = np.asarray(deltas, dtype=np.float64)
    a = np.asarray(actions)
    if len(d) == 0 or len(d) != len(a):
        raise DomainError("need equally many displacements and actions")
    labels, means = _per_action_means(d, a)
    d2 = np.sum((d[:, None, :] - means[None, :, :]) ** 2, axis=2)
    predicted = labels[np.argmin(d2, axis=1)]
    return float(np.mean(predicted == a) * 100.0)


def _matched_pairs(gt_frame: Sequence[Detection], rec_frame: Sequence[Detection]):
    rec_by_id = {}
    for det in rec_frame:
        if det.valid and det.object_id not in rec_by_id:
            rec_by_id[det.object_id] = det
    for det in gt_frame:
        if det.valid:
            yield det, rec_by_id.get(det.object_id)


def add_metric(gt: Sequence[Sequence[Detection]], rec: Sequence[Sequence[Detection]]) -> Optional[float]:
    """Mean center distance (pixels) over id-matched detections; None when
    nothing matches (the misses are MDR's job)."""
    if len(gt) != len(rec):
        raise DomainError("detection sequences must have equal frame counts")
    distances = []
    for gt_frame, rec_frame in zip(gt, rec):
        for det, match in _matched_pairs(gt_frame, rec_frame):
            if match is not None:
                distances.append(float(np.linalg.norm(det.center - match.center)))
    if not distances:
        return None
    return float(np.mean(distances))


def mdr(gt: Sequence[Sequence[Detection]], rec: Sequence[Sequence[Detection]]) -> float:
    """Percentage of ground-truth detections with no same-id match."""
    if len(gt) != len(rec):
        raise DomainError("detection sequences must have equal frame counts")
    total = 0
    missing = 0
    for gt_frame, rec_frame in zip(gt, rec):
        for _, match in _matched_pairs(gt_frame, rec_frame):
            total += 1
            if match is None:
                missing += 1
    if total == 0:
        raise DomainError("no ground-truth detections")
    return 100.0 * missing / total


def warp_eval(original: np.ndarray, rendered: np.ndarray, h: Homography) -> Tuple[float, float]:
    """L1 error between ``original`` and ``rendered`` warped into its frame.

    ``h`` maps original pixel coordinates to rendered pixel coordinates;
    the warp samples ``rendered`` bilinearly and excludes pixels that land
    outside it. Returns (mean absolute error over covered pixels, coverage).
    """
    orig = np.asarray(original, dtype=np.float64)
    rend = np.asarray(rendered, dtype=np.float64)
    if orig.shape != rend.shape:
        raise DomainError("images must have the same shape")
    height, width = orig.shape[:2]
    ys, xs = np.mgrid[0:height, 0:width]
    pixels = np.stack([xs.ravel() + 0.5, ys.ravel() + 0.5, np.ones(height * width)], axis=1)
    q = pixels @ h.matrix.T
    with np.errstate(divide="ignore", invalid="ignore"):
        mapped = q[:, :2] / q[:, 2:3]
    # Sample positions in pixel-center space; require all 4 neighbors in-bounds.
    gx = mapped[:, 0] - 0.5
    gy = mapped[:, 1] - 0.5
    covered = (q[:, 2] > 0) & (gx >= 0) & (gx <= width - 1) & (gy >= 0) & (gy <= height - 1)
    if not np.any(covered):
        raise DomainError("warp covers no pixels")
    gx, gy = gx[covered], gy[covered]
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = (gx - x0)[:, None]
    fy = (gy - y0)[:, None]
    flat = rend.reshape(height * width, -1)
    idx = lambda yy, xx: flat[yy * width + xx]
    warped = (
        idx(y0, x0) * (1 - fx) * (1 - fy)
        + idx(y0, x1) * fx * (1 - fy)
        + idx(y1, x0) * (1 - fx) * fy
        + idx(y1, x1) * fx * fy
    )
    target = orig.reshape(height * width, -1)[covered]
    l1 = float(np.mean(np.abs(target - warped)))
    return l1, float(np.mean(covered))


def metrics_report(delta_mse_value=None, delta_acc_value=None, add_value=None,
                   mdr_value=None, warp_l1=None, coverage=None) -> dict:
    """Assemble the report dictionary written by the metrics CLI."""
    return {
        "version": 1,
        "delta_mse": delta_mse_value,
        "delta_acc": delta_acc_value,
        "add": add_value,
        "mdr": mdr_value,
        "warp_l1": warp_l1,
        "coverage": coverage,
    }
