"""Reconstruction losses on point sets: Chamfer variants, the arccosh-compressed
Chamfer, its staged sum, and the retrieval-style set metrics.

All nearest-neighbor searches are exact brute force with ties broken toward
the lower index (argmin takes the first occurrence). Gradients, where offered,
are the true analytic derivatives through the argmin correspondences, which
are locally constant away from ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import PointCloud

ARC_GRAD_CAP = 1e6


@dataclass
class LossValue:
    """Scalar loss with optional gradient payloads.

    ``d_X`` is the (N, 3) gradient with respect to the first cloud;
    ``grad_clamped`` marks an arc-compression chain factor cut at its cap;
    ``d_stages`` is per-stage gradients, populated only by total_loss.
    """

    value: float
    d_X: np.ndarray | None = None
    grad_clamped: bool = False
    d_stages: list[np.ndarray] | None = None


def _points_of(x) -> np.ndarray:
    pts = x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise InvalidInputError(f"expected a point cloud of shape (N, 3), got {np.shape(pts)}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("point coordinates must be finite")
    return pts


def _nn_sq(a: np.ndarray, b: np.ndarray, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Per row of a: (squared distance to, index of) the nearest row of b.

    Chunked over query rows; each chunk's argmin is the plain first-occurrence
    argmin, so results are identical to the row-at-a-time loop.
    """
    n = a.shape[0]
    d = np.empty(n, dtype=np.float64)
    idx = np.empty(n, dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        diff = a[start:stop, None, :] - b[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        best = np.argmin(d2, axis=1)
        idx[start:stop] = best
        d[start:stop] = d2[np.arange(stop - start), best]
    return d, idx


def chamfer(x, y, with_grad: bool = False) -> LossValue:
    """Squared-L2 Chamfer distance: mean of both directed nearest-neighbor means."""
    xp, yp = _points_of(x), _points_of(y)
    d_xy, idx_xy = _nn_sq(xp, yp)
    d_yx, idx_yx = _nn_sq(yp, xp)
    value = float(d_xy.mean() + d_yx.mean())
    grad = None
    if with_grad:
        grad = 2.0 * (xp - yp[idx_xy]) / xp.shape[0]
        np.add.at(grad, idx_yx, 2.0 * (xp[idx_yx] - yp) / yp.shape[0])
    return LossValue(value, grad)


def chamfer_l1(x, y, halved: bool = True) -> LossValue:
    """Unsquared (L1-style) Chamfer: mean nearest distances, halved by default."""
    xp, yp = _points_of(x), _points_of(y)
    d_xy, _ = _nn_sq(xp, yp)
    d_yx, _ = _nn_sq(yp, xp)
    value = float(np.sqrt(d_xy).mean() + np.sqrt(d_yx).mean())
    if halved:
        value *= 0.5
    return LossValue(value)


def arc_cd(x, y, lam: float, with_grad: bool = False, grad_cap: float = ARC_GRAD_CAP) -> LossValue:
    """Arc-compressed Chamfer: lam * arccosh(1 + chamfer(x, y)).

    The chain factor 1/sqrt(c^2 + 2c) blows up as c -> 0; it is clamped at
    ``grad_cap`` and the result flagged when that happens.
    """
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0:
        raise InvalidInputError("lam must be finite and nonnegative")
    if grad_cap <= 0:
        raise InvalidInputError("grad_cap must be positive")
    base = chamfer(x, y, with_grad=with_grad)
    c = base.value
    value = lam * float(np.arccosh(1.0 + c))
    grad = None
    clamped = False
    if with_grad:
        denom_sq = c * c + 2.0 * c
        factor = 1.0 / math.sqrt(denom_sq) if denom_sq > 0 else math.inf
        if factor > grad_cap:
            factor = grad_cap
            clamped = True
        grad = lam * factor * base.d_X
    return LossValue(value, grad, grad_clamped=clamped)


def total_loss(stages, gt, lambdas, with_grad: bool = False) -> LossValue:
    """Sum of arc-compressed Chamfer terms, one per decoder stage output.

    ``stages`` and ``lambdas`` must have equal length >= 1. With gradients
    requested, d_stages holds one (N_k, 3) array per stage.
    """
    stages = list(stages)
    lambdas = [float(v) for v in lambdas]
    if len(stages) < 1 or len(stages) != len(lambdas):
        raise InvalidInputError("stages and lambdas must have equal length >= 1")
    value = 0.0
    grads: list[np.ndarray] = []
    clamped = False
    for stage, lam in zip(stages, lambdas):
        term = arc_cd(stage, gt, lam, with_grad=with_grad)
        value += term.value
        if with_grad:
            grads.append(term.d_X)
            clamped = clamped or term.grad_clamped
    return LossValue(value, None, grad_clamped=clamped, d_stages=grads if with_grad else None)


def fscore(x, y, tau: float) -> float:
    """F-score at threshold tau: harmonic mean of precision and recall.

    Precision counts x-points within tau of y; recall counts y-points within
    tau of x; distances compare with <= tau. Returns 0 when both are 0.
    """
    if not (math.isfinite(tau) and tau > 0):
        raise InvalidInputError("tau must be finite and positive")
    xp, yp = _points_of(x), _points_of(y)
    d_xy, _ = _nn_sq(xp, yp)
    d_yx, _ = _nn_sq(yp, xp)
    precision = float((np.sqrt(d_xy) <= tau).mean())
    recall = float((np.sqrt(d_yx) <= tau).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def fidelity(p_in, p_out) -> float:
    """One-sided mean unsquared distance from each input point to the output."""
    ip, op = _points_of(p_in), _points_of(p_out)
    d, _ = _nn_sq(ip, op)
    return float(np.sqrt(d).mean())


def mmd(p_out, refs) -> tuple[float, int]:
    """Minimum Chamfer distance from p_out to any reference cloud.

    Returns (value, index of the minimizing reference); ties break toward the
    lower index.
    """
    refs = list(refs)
    if len(refs) < 1:
        raise InvalidInputError("refs must contain at least one cloud")
    values = np.array([chamfer(p_out, r).value for r in refs])
    best = int(np.argmin(values))
    return float(values[best]), best
