"""Local finite-difference solver for the prediction PDE.

The state ``alpha[x, mu]`` is read as samples of the velocity density at
the channel velocities. Velocity diffusion works on ``s * alpha`` on the
polar (speed, direction) grid; the spatial part (anisotropic diffusion plus
drift) uses the six hexagonal neighbours. One step is

    alpha' = alpha + dt * Lv[alpha]             (velocity)
    alpha'' = alpha' + dt * Ls[alpha]           (space)
    alpha''' = normalization(alpha'', alpha)

with every operator evaluated on the incoming field, followed by a per-node
renormalization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import InvalidArgument, StabilityError
from ..geometry import SpatialLattice, VelocityGrid, hex_unit_vectors
from .field import PriorParams, ProbabilityField

NEGATIVE_TOL = 1e-12

# phase of each neighbour direction as a function of the two basis phases
# (p, q) = (k.e0, k.e1); e2 = e1 - e0, e3 = -e0, e4 = -e1, e5 = e0 - e1
_PHASE = np.array([[1, 0], [0, 1], [-1, 1], [-1, 0], [0, -1], [1, -1]], dtype=float)


@dataclass(frozen=True)
class PdeOptions:
    speed_boundary: str = "periodic"      # or "noflux"
    drift_scheme: str = "upwind"          # or "central"
    normalization: str = "multiplicative"  # or "linear"
    drift: bool = True
    spatial_diffusion: bool = True
    velocity_diffusion: bool = True

    def __post_init__(self):
        if self.speed_boundary not in ("periodic", "noflux"):
            raise InvalidArgument(f"unknown speed boundary {self.speed_boundary!r}")
        if self.drift_scheme not in ("upwind", "central"):
            raise InvalidArgument(f"unknown drift scheme {self.drift_scheme!r}")
        if self.normalization not in ("multiplicative", "linear"):
            raise InvalidArgument(f"unknown normalization {self.normalization!r}")


def hex_diffusion_weights(cov: np.ndarray, h: float = 1.0) -> np.ndarray:
    """Weights c_k (k = 0..5) with sum_k c_k (u_k - u_0) ~ 1/2 div(cov grad u).

    Opposite neighbours share a weight; the three pair weights solve
    2 * sum_k c_k e_k e_k^T = cov / h^2.
    """
    e = hex_unit_vectors()[:3]
    A = np.stack([2 * np.array([ek[0] ** 2, ek[0] * ek[1], ek[1] ** 2]) for ek in e], axis=1)
    b = np.array([cov[0, 0], cov[0, 1], cov[1, 1]]) / (h * h)
    c3 = np.linalg.solve(A, b)
    return np.concatenate([c3, c3])


def hex_drift_weights(v: np.ndarray, h: float = 1.0, scheme: str = "upwind") -> np.ndarray:
    """Weights b_k with sum_k b_k (u_k - u_0) ~ -v . grad u."""
    e = hex_unit_vectors()
    if scheme == "central":
        # grad u ~ (1 / 3h) sum_k e_k (u_k - u_0)
        return -(e @ v) / (3 * h)
    b = np.zeros(6)
    speed = math.hypot(v[0], v[1])
    if speed == 0:
        return b
    # -v written with non-negative coefficients on the two lattice
    # directions bracketing it: only upstream neighbours contribute
    ang = math.atan2(-v[1], -v[0]) % (2 * math.pi)
    k = int(math.floor(ang / (math.pi / 3) + 1e-12)) % 6
    k2 = (k + 1) % 6
    M = np.stack([e[k], e[k2]], axis=1)
    coef = np.linalg.solve(M, -np.asarray(v, dtype=float)) / h
    coef[np.abs(coef) < 1e-14] = 0.0
    b[k], b[k2] = coef
    return b


def _rotated_cov(theta, var_L, var_T):
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return R @ np.diag([var_L, var_T]) @ R.T


class PdeOperator:
    """Precomputed stencils for one (lattice, velocity grid, params) setup."""

    def __init__(self, lattice: SpatialLattice, vgrid: VelocityGrid,
                 params: PriorParams, options: PdeOptions = PdeOptions()):
        self.lattice, self.vgrid, self.params, self.options = lattice, vgrid, params, options
        h = lattice.spacing
        M = vgrid.M
        vel = vgrid.velocities
        theta = vgrid.channel_theta

        self.diff_w = np.zeros((M, 6))
        self.drift_w = np.zeros((M, 6))
        for mu in range(M):
            if options.spatial_diffusion:
                cov = _rotated_cov(theta[mu], params.sigma_x_L ** 2, params.sigma_x_T ** 2)
                self.diff_w[mu] = hex_diffusion_weights(cov, h)
            if options.drift:
                self.drift_w[mu] = hex_drift_weights(vel[mu], h, options.drift_scheme)
        self.space_w = self.diff_w + self.drift_w

        # velocity stencil, one row of coefficients per speed
        s = vgrid.speeds
        ds, dth = vgrid.dr, vgrid.dtheta
        vL, vT = (params.sigma_v_L ** 2, params.sigma_v_T ** 2) if options.velocity_diffusion \
            else (0.0, 0.0)
        k_r = vL - 0.5 * vT
        self.a_plus = vL * (s + ds) / (2 * s * ds * ds) - k_r / (2 * s * ds)
        self.a_minus = vL * (s - ds) / (2 * s * ds * ds) + k_r / (2 * s * ds)
        self.a_theta = vT / (2 * s * s * dth * dth)
        if options.speed_boundary == "noflux":
            self.a_plus = self.a_plus.copy()
            self.a_minus = self.a_minus.copy()
            self.a_plus[-1] = 0.0
            self.a_minus[0] = 0.0
        self._weights = vgrid.quad_weights / vgrid.volume

    # -- individual operators (rates, no dt) ---------------------------------

    def velocity_rate(self, alpha: np.ndarray) -> np.ndarray:
        g = self.vgrid
        a = alpha.reshape(-1, g.n_speeds, g.n_dirs)
        up = np.roll(a, -1, axis=1) - a
        dn = np.roll(a, 1, axis=1) - a
        th = np.roll(a, -1, axis=2) + np.roll(a, 1, axis=2) - 2 * a
        out = (self.a_plus[:, None] * up + self.a_minus[:, None] * dn
               + self.a_theta[:, None] * th)
        return out.reshape(alpha.shape)

    def _stencil(self, alpha: np.ndarray, w: np.ndarray) -> np.ndarray:
        nbr = self.lattice.neighbor_table
        out = np.zeros_like(alpha)
        for k in range(6):
            out += w[:, k] * (alpha[nbr[:, k]] - alpha)
        return out

    def space_rate(self, alpha: np.ndarray) -> np.ndarray:
        return self._stencil(alpha, self.space_w)

    def drift_rate(self, alpha: np.ndarray) -> np.ndarray:
        return self._stencil(alpha, self.drift_w)

    def diffusion_rate(self, alpha: np.ndarray) -> np.ndarray:
        return self._stencil(alpha, self.diff_w)

    def normalization_term(self, alpha: np.ndarray) -> np.ndarray:
        """(1/|V|) div of the velocity flux, added equally to every channel.

        Built from the same drift stencil, so together with the drift it
        leaves the quadrature-weighted mass of each node unchanged.
        """
        flux_div = -(self.drift_rate(alpha) @ self._weights)
        return np.repeat(flux_div[:, None], alpha.shape[1], axis=1)

    # -- time stepping -------------------------------------------------------

    def step(self, alpha: np.ndarray, dt: float) -> np.ndarray:
        a1 = alpha + dt * self.velocity_rate(alpha)
        a2 = a1 + dt * self.space_rate(alpha)
        if self.options.normalization == "linear":
            a3 = a2 + dt * self.normalization_term(alpha)
        else:
            a3 = a2 * (alpha.sum(axis=1, keepdims=True) / a2.sum(axis=1, keepdims=True))
        return _repair(a3)

    def positivity_bound(self) -> float:
        off = [self.space_w, self.a_plus, self.a_minus, self.a_theta]
        if min(float(np.min(w)) for w in off) < 0:
            return math.inf
        diag = self.space_w.sum(axis=1) + np.repeat(
            self.a_plus + self.a_minus + 2 * self.a_theta, self.vgrid.n_dirs)
        top = float(diag.max())
        return math.inf if top <= 0 else 1.0 / top

    def symbols(self, n_space: int = 25, n_speed: int = 9, n_dir: int = 9):
        """Fourier symbols of the frozen-coefficient operators.

        Returns (space[M, Ks], velocity[n_speeds, Kv]).
        """
        p = np.linspace(-math.pi, math.pi, n_space)
        P, Q = np.meshgrid(p, p, indexing="ij")
        phase = np.stack([P.ravel(), Q.ravel()], axis=1) @ _PHASE.T  # (Ks, 6)
        sp = (np.exp(1j * phase) - 1.0) @ self.space_w.T  # (Ks, M)
        xi = np.linspace(-math.pi, math.pi, n_speed)
        eta = np.linspace(-math.pi, math.pi, n_dir)
        X, E = np.meshgrid(xi, eta, indexing="ij")
        X, E = X.ravel(), E.ravel()
        vel = (self.a_plus[:, None] * (np.exp(1j * X) - 1)
               + self.a_minus[:, None] * (np.exp(-1j * X) - 1)
               + self.a_theta[:, None] * (2 * np.cos(E) - 2))
        return sp.T, vel


def _repair(a: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise StabilityError("non-finite values in PDE step")
    lo = a.min()
    if lo < 0:
        if lo < -NEGATIVE_TOL:
            raise StabilityError(f"negative probability {lo:.3e} in PDE step")
        a = np.maximum(a, 0.0)
    return a / a.sum(axis=1, keepdims=True)


def get_operator(lattice, vgrid, params: PriorParams, options: PdeOptions) -> PdeOperator:
    """Operator for this setup, shared between lattices of equal geometry."""
    return _operator(lattice.key, vgrid, params, options)


@lru_cache(maxsize=32)
def _operator(lattice_key, vgrid, params, options) -> PdeOperator:
    from ..geometry import build_hex_lattice

    return PdeOperator(build_hex_lattice(*lattice_key), vgrid, params, options)


def _mode_bound(lam: np.ndarray) -> float:
    """Largest dt with |1 + dt*lam| <= 1 for every mode in ``lam``."""
    lam = lam.ravel()
    mag2 = np.abs(lam) ** 2
    live = mag2 > 1e-24
    if not np.any(live):
        return math.inf
    re = lam.real[live]
    if np.any(re > 1e-12 * np.sqrt(mag2[live])):
        return 0.0
    return float(np.min(-2.0 * re / mag2[live]))


@dataclass(frozen=True)
class StabilityReport:
    """Step bounds in seconds.

    ``velocity``, ``space`` and ``fourier`` come from the von Neumann
    symbols of the velocity operator, the spatial operator and their sum.
    ``positivity`` is the largest step keeping every update a convex
    combination of old values (inf when some stencil weight is negative,
    e.g. central drift). ``combined`` is the smaller of the last two.
    """

    velocity: float
    space: float
    fourier: float
    positivity: float

    @property
    def combined(self) -> float:
        return min(self.fourier, self.positivity)


def stability_report(params: PriorParams, lattice: SpatialLattice, vgrid: VelocityGrid,
                     options: PdeOptions = PdeOptions()) -> StabilityReport:
    """Von Neumann step bounds for the velocity part, the spatial part and
    the full update (frozen coefficients, every channel)."""
    return _stability_report(params, lattice.key, vgrid, options)


@lru_cache(maxsize=32)
def _stability_report(params, lattice_key, vgrid, options) -> StabilityReport:
    op = _operator(lattice_key, vgrid, params, options)
    sp, vel = op.symbols()
    speed_idx = np.repeat(np.arange(vgrid.n_speeds), vgrid.n_dirs)
    b_v = _mode_bound(vel)
    b_s = _mode_bound(sp)
    b_c = math.inf
    for mu in range(vgrid.M):
        joint = sp[mu][:, None] + vel[speed_idx[mu]][None, :]
        b_c = min(b_c, _mode_bound(joint))
    return StabilityReport(b_v, b_s, b_c, op.positivity_bound())


def stability_max_dt(params: PriorParams, lattice: SpatialLattice, vgrid: VelocityGrid,
                     options: PdeOptions = PdeOptions()) -> float:
    """Largest explicit step for which no (frozen-coefficient) Fourier mode of
    the combined velocity + space update is amplified."""
    return stability_report(params, lattice, vgrid, options).combined


def predict_pde_step(field: ProbabilityField, params: PriorParams, dt: float,
                     options: PdeOptions = PdeOptions(), check_dt: bool = True) -> ProbabilityField:
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    if check_dt:
        bound = stability_max_dt(params, field.lattice, field.vgrid, options)
        if dt > bound * (1 + 1e-9):
            raise StabilityError(f"dt={dt:.3e} s exceeds stability bound {bound:.3e} s")
    op = get_operator(field.lattice, field.vgrid, params, options)
    return field.replace(op.step(field.alpha, dt), field.time + dt)


def predict_pde(field: ProbabilityField, params: PriorParams, duration: float, dt: float,
                options: PdeOptions = PdeOptions(), check_dt: bool = True) -> ProbabilityField:
    """Advance over ``duration`` with ceil(duration/dt) equal steps."""
    n = max(1, int(math.ceil(duration / dt - 1e-9)))
    step = duration / n
    if check_dt:
        bound = stability_max_dt(params, field.lattice, field.vgrid, options)
        if step > bound * (1 + 1e-9):
            raise StabilityError(f"dt={step:.3e} s exceeds stability bound {bound:.3e} s")
    op = get_operator(field.lattice, field.vgrid, params, options)
    a = field.alpha
    for _ in range(n):
        a = op.step(a, step)
    return field.replace(a, field.time + duration)
