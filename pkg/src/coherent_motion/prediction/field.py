from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from ..geometry import SpatialLattice, VelocityGrid

NORM_TOL = 1e-9


@dataclass(frozen=True)
class PriorParams:
    """Prior noise scales, longitudinal/transverse to the channel direction.

    Read as per-frame standard deviations by the kernel engine and as
    per-second diffusion rates (variance / s) by the PDE engine.
    """

    sigma_x_L: float = 0.6
    sigma_x_T: float = 0.3
    sigma_v_L: float = 0.8
    sigma_v_T: float = 0.4

    def __post_init__(self):
        for name in ("sigma_x_L", "sigma_x_T", "sigma_v_L", "sigma_v_T"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be non-negative")

    def scaled(self, factor: float) -> "PriorParams":
        """Multiply every variance by ``factor``."""
        r = float(np.sqrt(factor))
        return PriorParams(self.sigma_x_L * r, self.sigma_x_T * r,
                           self.sigma_v_L * r, self.sigma_v_T * r)


@dataclass(eq=False)
class ProbabilityField:
    """Estimation-layer state: ``alpha[x, mu]`` sums to one over ``mu``."""

    alpha: np.ndarray
    lattice: SpatialLattice
    vgrid: VelocityGrid
    time: float = 0.0

    def __post_init__(self):
        shape = (self.lattice.n_nodes, self.vgrid.M)
        if self.alpha.shape != shape:
            raise InvalidArgument(f"alpha has shape {self.alpha.shape}, expected {shape}")

    @classmethod
    def uniform(cls, lattice, vgrid, time=0.0) -> "ProbabilityField":
        return cls(np.full((lattice.n_nodes, vgrid.M), 1.0 / vgrid.M), lattice, vgrid, time)

    @classmethod
    def from_weights(cls, weights, lattice, vgrid, time=0.0) -> "ProbabilityField":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum(axis=1, keepdims=True), lattice, vgrid, time)

    def replace(self, alpha, time=None) -> "ProbabilityField":
        return ProbabilityField(alpha, self.lattice, self.vgrid,
                                self.time if time is None else time)

    def check(self, tol: float = NORM_TOL) -> None:
        a = self.alpha
        if not np.all(np.isfinite(a)):
            raise InvalidArgument("field contains non-finite values")
        if a.min() < 0:
            raise InvalidArgument(f"field has negative entry {a.min():.3e}")
        err = np.abs(a.sum(axis=1) - 1.0).max()
        if err > tol:
            raise InvalidArgument(f"field not normalized (max error {err:.3e})")

    def translated(self, dq: int, dr: int) -> "ProbabilityField":
        """Field moved by the axial lattice vector (dq, dr)."""
        src = self.lattice.shift_index(-dq, -dr)
        return self.replace(self.alpha[src])
