"""Spatial hexagonal lattice and polar velocity grid.

Lengths are in jumps (horizontal distance between neighbouring nodes),
speeds in jumps per second (jps).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

ROW_PITCH = math.sqrt(3.0) / 2.0

# Axial displacements of the six neighbours, ordered by angle 0, 60, ..., 300 deg.
# Axial basis: a1 = (1, 0), a2 = (1/2, sqrt(3)/2).
HEX_DIRECTIONS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))


def hex_unit_vectors() -> np.ndarray:
    """(6, 2) unit vectors pointing at the neighbours, same order as the table."""
    ang = np.arange(6) * (math.pi / 3.0)
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


@dataclass(frozen=True, eq=False)
class SpatialLattice:
    """Periodic hexagonal lattice with row-major node indexing.

    Rows whose parity equals ``row_offset_parity`` (the odd rows) are shifted
    right by half a jump. Node ``n`` sits at column ``n % width`` and row
    ``n // width``.
    """

    width: int
    height: int
    spacing: float = 1.0
    row_offset_parity: int = 1
    neighbor_table: np.ndarray = field(repr=False, default=None)

    @property
    def key(self) -> tuple:
        """Hashable identity of the geometry (for caches)."""
        return self.width, self.height, self.spacing

    @property
    def n_nodes(self) -> int:
        return self.width * self.height

    @property
    def extent(self) -> tuple[float, float]:
        """Periodic extent (Lx, Ly) of the torus in jumps."""
        return self.width * self.spacing, self.height * ROW_PITCH * self.spacing

    @property
    def positions(self) -> np.ndarray:
        cols = np.tile(np.arange(self.width), self.height)
        rows = np.repeat(np.arange(self.height), self.width)
        return self._position(cols, rows)

    def _position(self, cols, rows) -> np.ndarray:
        shift = 0.5 * ((rows % 2) == self.row_offset_parity)
        x = (cols + shift) * self.spacing
        y = rows * ROW_PITCH * self.spacing
        return np.stack([x, y], axis=-1).astype(float)

    def index(self, col: int, row: int) -> int:
        return (row % self.height) * self.width + (col % self.width)

    def col_row(self, node: int) -> tuple[int, int]:
        return node % self.width, node // self.width

    def shift_index(self, dq: int, dr: int) -> np.ndarray:
        """Array ``src`` with ``src[n]`` the node displaced from ``n`` by the
        axial vector ``(dq, dr)`` (periodic)."""
        cols = np.tile(np.arange(self.width), self.height)
        rows = np.repeat(np.arange(self.height), self.width)
        return self._shift(cols, rows, dq, dr)

    def _shift(self, cols, rows, dq, dr):
        # offset -> axial, displace, back to offset, wrap in offset coordinates
        q = cols - rows // 2 + dq
        r = rows + dr
        return (r % self.height) * self.width + ((q + r // 2) % self.width)

    def wrap_offset(self, d: np.ndarray) -> np.ndarray:
        """Minimum-image reduction of displacement vectors (..., 2)."""
        lx, ly = self.extent
        out = np.array(d, dtype=float, copy=True)
        out[..., 0] -= lx * np.round(out[..., 0] / lx)
        out[..., 1] -= ly * np.round(out[..., 1] / ly)
        return out

    def wrap_position(self, p: np.ndarray) -> np.ndarray:
        lx, ly = self.extent
        out = np.array(p, dtype=float, copy=True)
        out[..., 0] = np.mod(out[..., 0], lx)
        out[..., 1] = np.mod(out[..., 1], ly)
        return out

    def nearest_node(self, point) -> int:
        """Node closest to a continuous position (periodic metric)."""
        x, y = self.wrap_position(np.asarray(point, dtype=float))
        row0 = int(math.floor(y / (ROW_PITCH * self.spacing)))
        best, best_d = 0, math.inf
        for row in (row0 - 1, row0, row0 + 1, row0 + 2):
            shift = 0.5 if (row % 2) == self.row_offset_parity else 0.0
            col0 = int(math.floor(x / self.spacing - shift))
            for col in (col0, col0 + 1):
                node = self.index(col, row)
                d = self.wrap_offset(self.positions_of(node) - (x, y))
                dd = float(d @ d)
                if dd < best_d - 1e-12 or (abs(dd - best_d) <= 1e-12 and node < best):
                    best, best_d = node, dd
        return best

    def positions_of(self, node: int) -> np.ndarray:
        col, row = self.col_row(node)
        return self._position(np.asarray(col), np.asarray(row))

    def rows_in_band(self, y_min: float, y_max: float) -> np.ndarray:
        ys = np.arange(self.height) * ROW_PITCH * self.spacing
        return np.flatnonzero((ys >= y_min) & (ys <= y_max))


def build_hex_lattice(width: int, height: int, spacing: float = 1.0) -> SpatialLattice:
    if width < 1 or height < 1:
        raise InvalidArgument(f"lattice dimensions must be >= 1, got {width}x{height}")
    if spacing <= 0:
        raise InvalidArgument("spacing must be positive")

    lat = SpatialLattice(width, height, float(spacing))
    n = lat.n_nodes
    cols = np.tile(np.arange(width), height)
    rows = np.repeat(np.arange(height), width)
    table = np.empty((n, 6), dtype=np.int64)
    # right/left and the two upward links come from the axial map; the
    # downward links are their inverses, which keeps the relation symmetric
    # even across the half-jump seam of an odd-height torus
    for k in (0, 1, 2, 3):
        dq, dr = HEX_DIRECTIONS[k]
        table[:, k] = lat._shift(cols, rows, dq, dr)
    for k_down, k_up in ((4, 1), (5, 2)):
        inv = np.empty(n, dtype=np.int64)
        inv[table[:, k_up]] = np.arange(n)
        table[:, k_down] = inv
    table.setflags(write=False)
    object.__setattr__(lat, "neighbor_table", table)
    return lat


@dataclass(frozen=True)
class VelocityGrid:
    """Polar velocity channels, enumerated speed-major:
    ``mu = speed_index * n_dirs + dir_index``."""

    n_dirs: int
    n_speeds: int
    dtheta: float
    dr: float
    s_min: float

    @property
    def M(self) -> int:
        return self.n_dirs * self.n_speeds

    @property
    def speeds(self) -> np.ndarray:
        return self.s_min + self.dr * np.arange(self.n_speeds)

    @property
    def directions(self) -> np.ndarray:
        return self.dtheta * np.arange(self.n_dirs)

    @property
    def s_max(self) -> float:
        return self.s_min + self.dr * (self.n_speeds - 1)

    @property
    def channel_speed(self) -> np.ndarray:
        return np.repeat(self.speeds, self.n_dirs)

    @property
    def channel_theta(self) -> np.ndarray:
        return np.tile(self.directions, self.n_speeds)

    @property
    def channels(self) -> list[tuple[float, float]]:
        return list(zip(self.channel_speed.tolist(), self.channel_theta.tolist()))

    @property
    def velocities(self) -> np.ndarray:
        """(M, 2) Cartesian channel velocities."""
        s, th = self.channel_speed, self.channel_theta
        return np.stack([s * np.cos(th), s * np.sin(th)], axis=1)

    @property
    def volume(self) -> float:
        """Area of the velocity annulus covered by the channels (jps^2)."""
        lo = self.s_min - self.dr / 2
        hi = self.s_max + self.dr / 2
        return math.pi * (hi * hi - lo * lo) * (self.n_dirs * self.dtheta) / (2 * math.pi)

    @property
    def quad_weights(self) -> np.ndarray:
        """Polar area element s*dr*dtheta per channel; sums to ``volume``."""
        return self.channel_speed * self.dr * self.dtheta

    def index(self, speed_index: int, dir_index: int) -> int:
        if not (0 <= speed_index < self.n_speeds and 0 <= dir_index < self.n_dirs):
            raise InvalidArgument("channel index out of range")
        return speed_index * self.n_dirs + dir_index

    def unravel(self, mu: int) -> tuple[int, int]:
        return divmod(int(mu), self.n_dirs)

    def nearest_channel(self, velocity) -> int:
        d = self.velocities - np.asarray(velocity, dtype=float)
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))


def build_velocity_grid(n_dirs: int, n_speeds: int, dtheta: float | None = None,
                        dr: float = 2.0, s_min: float = 2.0) -> VelocityGrid:
    if n_dirs < 1 or n_speeds < 1:
        raise InvalidArgument("channel counts must be >= 1")
    if dtheta is None:
        dtheta = 2 * math.pi / n_dirs
    if abs(dtheta * n_dirs - 2 * math.pi) > 1e-9:
        raise InvalidArgument(
            f"direction step {dtheta!r} x {n_dirs} does not close the circle")
    if dr <= 0 or s_min <= 0:
        raise InvalidArgument("dr and s_min must be positive")
    return VelocityGrid(int(n_dirs), int(n_speeds), float(dtheta), float(dr), float(s_min))
