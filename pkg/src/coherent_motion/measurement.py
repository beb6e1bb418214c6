"""Measurement layer: dot frames -> normalized observation activities phi."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .geometry import SpatialLattice, VelocityGrid


@dataclass(frozen=True)
class MeasurementParams:
    sigma_mx_L: float = 0.8
    sigma_mx_T: float = 0.4
    sigma_mv_L: float = 3.2
    sigma_mv_T: float = 2.6
    floor_eps: float = 1e-3
    cutoff_radius: float = 2.0

    def __post_init__(self):
        for name in ("sigma_mx_L", "sigma_mx_T", "sigma_mv_L", "sigma_mv_T",
                     "floor_eps", "cutoff_radius"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")


class MeasurementField:
    """Per-node observation activities, shape (n_nodes, M); rows sum to one."""

    def __init__(self, phi: np.ndarray):
        self.phi = phi

    @property
    def shape(self):
        return self.phi.shape

    @classmethod
    def uniform(cls, n_nodes: int, M: int) -> "MeasurementField":
        return cls(np.full((n_nodes, M), 1.0 / M))


def _aligned_quadratic(d: np.ndarray, theta: np.ndarray, sig_L: float, sig_T: float):
    """Mahalanobis form of offsets d (..., 2) in frames aligned with each
    direction in ``theta``; result has a trailing axis over theta."""
    c, s = np.cos(theta), np.sin(theta)
    lon = d[..., 0, None] * c + d[..., 1, None] * s
    tra = -d[..., 0, None] * s + d[..., 1, None] * c
    return (lon / sig_L) ** 2 + (tra / sig_T) ** 2


def raw_activity(dots, lattice: SpatialLattice, vgrid: VelocityGrid,
                 params: MeasurementParams) -> np.ndarray:
    """Un-normalized responses a_mu(x) including the baseline floor."""
    if vgrid.M < 1:
        raise InvalidArgument("empty velocity grid")
    dots = np.asarray(dots, dtype=float).reshape(-1, 4)
    if not np.all(np.isfinite(dots)):
        raise InvalidArgument("dot positions and velocities must be finite")

    n, M = lattice.n_nodes, vgrid.M
    act = np.full((n, M), params.floor_eps)
    if len(dots) == 0:
        return act

    nodes = lattice.positions
    theta = vgrid.channel_theta
    # velocity tuning does not depend on the node: (n_dots, M)
    dv = dots[:, None, 2:4] - vgrid.velocities[None]
    lon = dv[..., 0] * np.cos(theta) + dv[..., 1] * np.sin(theta)
    tra = -dv[..., 0] * np.sin(theta) + dv[..., 1] * np.cos(theta)
    g_vel = np.exp(-0.5 * ((lon / params.sigma_mv_L) ** 2 + (tra / params.sigma_mv_T) ** 2))

    r2 = params.cutoff_radius ** 2
    for k in range(len(dots)):
        d = lattice.wrap_offset(dots[k, :2] - nodes)
        near = np.flatnonzero(np.einsum("ij,ij->i", d, d) <= r2)
        if near.size == 0:
            continue
        q = _aligned_quadratic(d[near], theta, params.sigma_mx_L, params.sigma_mx_T)
        act[near] += np.exp(-0.5 * q) * g_vel[k]
    return act


def respond(frame, lattice: SpatialLattice, vgrid: VelocityGrid,
            params: MeasurementParams | None = None) -> MeasurementField:
    """Observation activities for one frame.

    ``frame`` is a sequence of ``(x, y, vx, vy)`` dots (or a ``Frame``).
    Dots superpose additively on top of the floor, then each node is
    normalized over channels.
    """
    params = params or MeasurementParams()
    dots = getattr(frame, "dots", frame)
    act = raw_activity(dots, lattice, vgrid, params)
    phi = act / act.sum(axis=1, keepdims=True)
    # nodes no dot reaches get exactly 1/M rather than floor/(M*floor)
    phi[np.all(act == params.floor_eps, axis=1)] = 1.0 / vgrid.M
    return MeasurementField(phi)
