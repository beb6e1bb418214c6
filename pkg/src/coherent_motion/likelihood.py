"""Robust likelihood: dot product of observation activities with tuning curves."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .geometry import VelocityGrid
from .measurement import MeasurementField

TINY = 1e-300


@dataclass(frozen=True, eq=False)
class TuningMatrix:
    """``F[i, mu] = f_i(v_mu)``; every column sums to one."""

    F: np.ndarray
    sigma_lv_L: float
    sigma_lv_T: float

    @property
    def M(self) -> int:
        return self.F.shape[0]


def tuning_matrix(vgrid: VelocityGrid, sigma_lv_L: float = 2.2,
                  sigma_lv_T: float = 1.1) -> TuningMatrix:
    if sigma_lv_L <= 0 or sigma_lv_T <= 0:
        raise InvalidArgument("likelihood sigmas must be positive")
    if sigma_lv_L < sigma_lv_T:
        warnings.warn("longitudinal likelihood sigma is smaller than the transverse one; "
                      "speed will be estimated more sharply than direction", stacklevel=2)
    v = vgrid.velocities
    theta = vgrid.channel_theta
    # d[i, mu] = v_i - v_mu, expressed in the frame of v_mu
    d = v[:, None, :] - v[None, :, :]
    c, s = np.cos(theta)[None, :], np.sin(theta)[None, :]
    lon = d[..., 0] * c + d[..., 1] * s
    tra = -d[..., 0] * s + d[..., 1] * c
    logw = -0.5 * ((lon / sigma_lv_L) ** 2 + (tra / sigma_lv_T) ** 2)
    logw -= logw.max(axis=0, keepdims=True)
    # keep every entry strictly positive even when the Gaussian underflows,
    # so no hypothesis can be zeroed out by a single observation
    w = np.maximum(np.exp(logw), TINY)
    F = w / w.sum(axis=0, keepdims=True)
    F.setflags(write=False)
    return TuningMatrix(F, float(sigma_lv_L), float(sigma_lv_T))


def evaluate(phi: MeasurementField | np.ndarray, F: TuningMatrix) -> np.ndarray:
    """Per-node likelihood ``L[x, mu] = sum_i phi[x, i] F[i, mu]``."""
    phi = getattr(phi, "phi", phi)
    if phi.ndim != 2 or phi.shape[1] != F.M:
        raise InvalidArgument(
            f"measurement field has {phi.shape[-1]} channels, tuning matrix has {F.M}")
    # einsum keeps a fixed summation order (no threaded BLAS)
    return np.einsum("xi,im->xm", phi, F.F)
