"""Bayesian update of the predicted field and per-node readouts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateUpdateError, InvalidArgument
from .geometry import VelocityGrid
from .prediction.field import ProbabilityField

DEGENERATE_N = 1e-300


@dataclass(frozen=True)
class NodeMetrics:
    sharpness: float
    confidence: float
    mean_velocity: tuple
    peak_channel: int


def update(alpha_pred: ProbabilityField, L: np.ndarray, mask=None):
    """Multiply by the likelihood and renormalize every node.

    Returns ``(posterior, confidence)`` where ``confidence[x]`` is the
    normalizer sum_mu alpha_mu(x) L_mu(x). Nodes flagged in the boolean
    ``mask`` keep their prediction and report confidence 1/M (the value a
    uniform likelihood would give).
    """
    a = alpha_pred.alpha
    L = np.asarray(L, dtype=float)
    if L.shape != a.shape:
        raise InvalidArgument(f"likelihood shape {L.shape} does not match field {a.shape}")
    if not np.all(L > 0):
        raise InvalidArgument("likelihood must be strictly positive")
    prod = a * L
    N = prod.sum(axis=1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        N = np.where(mask, 1.0, N)
    bad = N < DEGENERATE_N
    if np.any(bad):
        raise DegenerateUpdateError(
            f"prediction and measurement are incompatible at node {int(np.flatnonzero(bad)[0])}")
    new = prod / N[:, None]
    if mask is not None and mask.any():
        new[mask] = a[mask]
        N = np.where(mask, 1.0 / a.shape[1], N)
    return alpha_pred.replace(new), N


def _check_distribution(alpha: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    err = np.abs(alpha.sum(axis=-1) - 1.0)
    if np.any(err > tol):
        raise InvalidArgument(f"distribution not normalized (off by {err.max():.3e})")
    return alpha


def sharpness(alpha) -> np.ndarray | float:
    """KL divergence from the uniform distribution, in nats.

    Works on a single distribution or on the rows of an array.
    """
    alpha = _check_distribution(alpha)
    M = alpha.shape[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(alpha > 0, alpha * np.log(M * alpha), 0.0)
    out = terms.sum(axis=-1)
    # rounding can push an exactly uniform row a hair below zero
    out = np.clip(out, 0.0, np.log(M))
    return float(out) if np.ndim(out) == 0 else out


def mean_velocity(alpha, vgrid: VelocityGrid) -> np.ndarray:
    alpha = _check_distribution(alpha)
    return alpha @ vgrid.velocities


def peak_track(field: ProbabilityField):
    """Node whose best channel is the most probable anywhere; lowest index wins ties."""
    best = field.alpha.max(axis=1)
    node = int(np.argmax(best))
    return node, field.lattice.positions[node]


def node_metrics(alpha, vgrid: VelocityGrid, confidence: float) -> NodeMetrics:
    alpha = np.asarray(alpha, dtype=float)
    mv = mean_velocity(alpha, vgrid)
    return NodeMetrics(float(sharpness(alpha)), float(confidence),
                       (float(mv[0]), float(mv[1])), int(np.argmax(alpha)))
