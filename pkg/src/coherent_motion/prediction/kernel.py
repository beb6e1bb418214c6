"""Discrete Gaussian-kernel prediction (large-kernel convolution engine).

Each channel's mass is carried along its velocity by a lattice-sampled
Gaussian displacement kernel, then mixed over channels by a Gaussian in
velocity space, then each node is renormalized (the factor K).
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ..errors import InvalidArgument
from ..geometry import ROW_PITCH, SpatialLattice, VelocityGrid
from .field import PriorParams, ProbabilityField

TRUNCATION_SIGMAS = 4.0
SUBSAMPLES = 8  # Gaussian samples per jump along each axis
_MIN_VAR = 1e-12


def _rotated_cov(theta: float, var_L: float, var_T: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return R @ np.diag([max(var_L, _MIN_VAR), max(var_T, _MIN_VAR)]) @ R.T


def _logsumexp_normalize(logw: np.ndarray, axis: int) -> np.ndarray:
    logw = logw - logw.max(axis=axis, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=axis, keepdims=True)


def _deposit(points: np.ndarray, weights: np.ndarray, h: float):
    """Spread point masses onto lattice nodes with piecewise-linear weights.

    Uses the triangulation formed by the axial basis vectors, so every
    point contributes to the three corners of its triangle and the
    weighted mean position is reproduced exactly.
    """
    rf = points[:, 1] / (ROW_PITCH * h)
    qf = points[:, 0] / h - 0.5 * rf
    q0, r0 = np.floor(qf), np.floor(rf)
    a, b = qf - q0, rf - r0
    lo = a + b < 1
    q = np.concatenate([np.where(lo, q0, q0 + 1), np.where(lo, q0 + 1, q0), np.where(lo, q0, q0 + 1)])
    r = np.concatenate([np.where(lo, r0, r0 + 1), np.where(lo, r0, r0 + 1), np.where(lo, r0 + 1, r0)])
    w = np.concatenate([np.where(lo, 1 - a - b, a + b - 1), np.where(lo, a, 1 - a),
                        np.where(lo, b, 1 - b)]) * np.tile(weights, 3)
    q = q.astype(np.int64)
    r = r.astype(np.int64)
    q_lo, r_lo = q.min(), r.min()
    span = int(r.max() - r_lo) + 1
    code = (q - q_lo) * span + (r - r_lo)
    acc = np.bincount(code, weights=w)
    hit = np.flatnonzero(acc > 1e-300)
    return np.stack([hit // span + q_lo, hit % span + r_lo], axis=1), acc[hit]


@lru_cache(maxsize=64)
def _kernel_table(spacing: float, vgrid: VelocityGrid, var_L: float, var_T: float,
                  delta: float):
    """Displacement kernels of all channels on a common set of offsets.

    Returns ``(offsets, W)``: axial offsets (K, 2) and weights (K, M), each
    column summing to one. The continuous Gaussian (mean delta * v, rotated
    covariance) is sampled on a sub-lattice grid and deposited onto the
    nodes; plain point sampling at the nodes would lose sub-jump
    displacements.
    """
    h = spacing
    sub = SUBSAMPLES
    sigma = math.sqrt(max(var_L, var_T, _MIN_VAR))
    n = int(math.ceil((TRUNCATION_SIGMAS * sigma + h) / h * sub))
    g = (np.arange(-n, n + 1) + 0.5) / sub * h
    X, Y = np.meshgrid(g, g, indexing="ij")
    d = np.stack([X.ravel(), Y.ravel()], axis=1)
    r2 = np.einsum("ij,ij->i", d, d)
    d = d[r2 <= (TRUNCATION_SIGMAS * sigma + h) ** 2]

    per_channel = []
    for s, th in vgrid.channels:
        P = np.linalg.inv(_rotated_cov(th, var_L, var_T))
        w = _logsumexp_normalize(-0.5 * np.einsum("ij,jk,ik->i", d, P, d), axis=0)
        mean = delta * s * np.array([math.cos(th), math.sin(th)])
        per_channel.append(_deposit(d + mean, w, h))
    offsets = sorted({(int(q), int(r)) for keys, _ in per_channel for q, r in keys})
    row = {o: i for i, o in enumerate(offsets)}
    W = np.zeros((len(offsets), vgrid.M))
    for mu, (keys, wk) in enumerate(per_channel):
        idx = [row[(int(q), int(r))] for q, r in keys]
        W[idx, mu] = wk / wk.sum()
    offsets = np.array(offsets, dtype=np.int64).reshape(-1, 2)
    W.setflags(write=False)
    return offsets, W


@lru_cache(maxsize=64)
def velocity_transition(vgrid: VelocityGrid, var_L: float, var_T: float) -> np.ndarray:
    """``T[mu, nu]``: weight of source channel ``nu`` in the prediction for
    ``mu``. Rows are normalized with the polar area element as quadrature
    weight, so a constant density is a fixed point."""
    v = vgrid.velocities
    theta = vgrid.channel_theta
    d = v[:, None, :] - v[None, :, :]  # v_mu - v_nu
    c, s = np.cos(theta)[None, :], np.sin(theta)[None, :]
    lon = d[..., 0] * c + d[..., 1] * s
    tra = -d[..., 0] * s + d[..., 1] * c
    logw = -0.5 * (lon ** 2 / max(var_L, _MIN_VAR) + tra ** 2 / max(var_T, _MIN_VAR))
    logw = logw + np.log(vgrid.channel_speed)[None, :]
    T = _logsumexp_normalize(logw, axis=1)
    T.setflags(write=False)
    return T


@lru_cache(maxsize=16)
def _source_table(lattice_key, offsets_bytes: bytes) -> np.ndarray:
    from ..geometry import build_hex_lattice

    width, height, spacing = lattice_key
    lattice = build_hex_lattice(width, height, spacing)
    offsets = np.frombuffer(offsets_bytes, dtype=np.int64).reshape(-1, 2)
    return np.stack([lattice.shift_index(-int(q), -int(r)) for q, r in offsets])


def transport(alpha: np.ndarray, lattice: SpatialLattice, vgrid: VelocityGrid,
              var_L: float, var_T: float, delta: float) -> np.ndarray:
    """Per-channel spatial step of the kernel engine (mass preserving)."""
    offsets, W = _kernel_table(lattice.spacing, vgrid, var_L, var_T, delta)
    src = _source_table(lattice.key, offsets.tobytes())
    # out[x, mu] = sum_k W[k, mu] * alpha[x - offset_k, mu]
    return np.einsum("kxm,km->xm", alpha[src], W)


def predict_kernel(field: ProbabilityField, params: PriorParams, delta: float,
                   scale_covariances: bool = False) -> ProbabilityField:
    """Advance ``field`` by ``delta`` seconds with the Gaussian-kernel prior.

    With ``scale_covariances`` every covariance is multiplied by ``delta``
    (params then act as diffusion rates, matching the PDE engine);
    otherwise they are applied once, as per-frame covariances.
    """
    if not delta > 0:
        raise InvalidArgument("delta must be positive")
    f = delta if scale_covariances else 1.0
    S = transport(field.alpha, field.lattice, field.vgrid,
                  f * params.sigma_x_L ** 2, f * params.sigma_x_T ** 2, float(delta))
    T = velocity_transition(field.vgrid, f * params.sigma_v_L ** 2, f * params.sigma_v_T ** 2)
    new = np.einsum("xn,mn->xm", S, T)
    new /= new.sum(axis=1, keepdims=True)
    return field.replace(new, field.time + delta)
