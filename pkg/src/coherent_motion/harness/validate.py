"""Self-checks of the prediction engines on small problems.

Compares the finite-difference solver with the Gaussian-kernel engine and
checks diffusion and advection against closed-form answers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument
from ..geometry import build_hex_lattice, build_velocity_grid
from ..prediction import (PdeOperator, PdeOptions, PriorParams, ProbabilityField, predict_kernel,
                          predict_pde, stability_max_dt)
from .config import ExperimentConfig

ORACLE_L1 = 0.05
DIFFUSION_RTOL = 0.05


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.6g} (limit {self.limit:.6g}) {self.detail}".rstrip()


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def text(self) -> str:
        return "\n".join(c.line() for c in self.checks) + "\n"


def smooth_field(lattice, vgrid, seed: int = 0) -> ProbabilityField:
    """Positive field with one long-wavelength spatial mode per channel."""
    rng = np.random.default_rng(seed)
    pos = lattice.positions
    lx, ly = lattice.extent
    a = np.ones((lattice.n_nodes, vgrid.M))
    for m in range(vgrid.M):
        px, py = rng.uniform(0, 2 * math.pi, 2)
        a[:, m] += 0.5 * np.cos(2 * math.pi * pos[:, 0] / lx + px) * np.cos(2 * math.pi * pos[:, 1] / ly + py)
        a[:, m] += 0.3 * math.cos(vgrid.channel_theta[m] - 1.0)
    return ProbabilityField.from_weights(a, lattice, vgrid)


def oracle_distance(f0: ProbabilityField, rates: PriorParams, n_steps: int, dt: float,
                    options: PdeOptions = PdeOptions()) -> float:
    """Max over nodes of the L1 distance between ``n_steps`` PDE steps and
    one kernel prediction with covariances scaled to the same total time."""
    T = n_steps * dt
    pde = predict_pde(f0, rates, T, dt, options)
    ker = predict_kernel(f0, rates, T, scale_covariances=True)
    return float(np.abs(pde.alpha - ker.alpha).sum(axis=1).max())


def _weighted_cov(points: np.ndarray, w: np.ndarray) -> np.ndarray:
    w = w / w.sum()
    mu = w @ points
    d = points - mu
    return np.einsum("i,ij,ik->jk", w, d, d)


def velocity_diffusion_check(sigma: float = 1.0, t: float = 0.5, sigma0: float = 0.7,
                             center=(5.0, 0.0)):
    """Isotropic velocity diffusion of a Gaussian bump on a fine polar grid.

    Returns (measured variance growth per axis, expected growth sigma^2 t).
    Space is a single node, so only the velocity operator acts.
    """
    vgrid = build_velocity_grid(72, 48, None, 0.25, 0.25)
    lattice = build_hex_lattice(1, 1)
    v = vgrid.velocities
    d = v - np.asarray(center)
    a = np.exp(-0.5 * np.einsum("ij,ij->i", d, d) / sigma0 ** 2)
    f = ProbabilityField.from_weights(a[None, :], lattice, vgrid)
    rates = PriorParams(1e-9, 1e-9, sigma, sigma)
    opts = PdeOptions(speed_boundary="noflux", drift=False, spatial_diffusion=False)
    dt = 0.5 * stability_max_dt(rates, lattice, vgrid, opts)
    w = vgrid.quad_weights
    c0 = _weighted_cov(v, w * f.alpha[0])
    g = predict_pde(f, rates, t, dt, opts)
    c1 = _weighted_cov(v, w * g.alpha[0])
    growth = np.diag(c1 - c0)
    return growth, sigma ** 2 * t


def spatial_diffusion_check(var_L: float = 2.0, var_T: float = 0.5, theta: float = math.pi / 3,
                            t: float = 1.0, sigma0: float = 1.5, size: int = 32):
    """Anisotropic diffusion of a Gaussian bump over the hex stencil.

    Integrates the spatial diffusion operator alone, without the per-node
    renormalization, and reads the channel whose direction is nearest
    ``theta``. Returns (measured covariance growth, expected
    R diag(var_L, var_T) R^T t).
    """
    lattice = build_hex_lattice(size, size)
    vgrid = build_velocity_grid(6, 1, None, 1.0, 1.0)
    mu = int(np.argmin(np.abs(np.angle(np.exp(1j * (vgrid.channel_theta - theta))))))
    th = vgrid.channel_theta[mu]
    c, s = math.cos(th), math.sin(th)
    R = np.array([[c, -s], [s, c]])
    S = R @ np.diag([var_L, var_T]) @ R.T
    rates = PriorParams(math.sqrt(var_L), math.sqrt(var_T), 0.0, 0.0)
    op = PdeOperator(lattice, vgrid, rates, PdeOptions(drift=False, velocity_diffusion=False))

    pos = lattice.positions
    center = np.array(lattice.extent) / 2
    d = pos - center
    u = np.exp(-0.5 * np.einsum("ij,ij->i", d, d) / sigma0 ** 2)
    u = np.repeat(u[:, None], vgrid.M, axis=1)
    c0 = _weighted_cov(pos, u[:, mu])
    lam = 2 * np.abs(op.diff_w).sum(axis=1).max()
    n = int(math.ceil(t / (0.5 / lam)))
    dt = t / n
    for _ in range(n):
        u = u + dt * op.diffusion_rate(u)
    c1 = _weighted_cov(pos, u[:, mu])
    return c1 - c0, S * t


def advection_check(speed: float = 6.0, theta: float = 0.0, t: float = 0.5, size: int = 16):
    """Pure drift of a narrow bump; returns (peak displacement, expected)."""
    lattice = build_hex_lattice(size, size)
    vgrid = build_velocity_grid(6, 1, None, 1.0, speed)
    rates = PriorParams(0.0, 0.0, 0.0, 0.0)
    op = PdeOperator(lattice, vgrid, rates, PdeOptions(velocity_diffusion=False))
    mu = vgrid.nearest_channel((speed * math.cos(theta), speed * math.sin(theta)))
    pos = lattice.positions
    start = lattice.index(size // 4, size // 2)
    d = lattice.wrap_offset(pos - pos[start])
    u = np.exp(-0.5 * np.einsum("ij,ij->i", d, d) / 0.5 ** 2)
    u = np.repeat(u[:, None], vgrid.M, axis=1)
    dt = 0.5 * lattice.spacing / speed
    n = int(math.ceil(t / dt))
    dt = t / n
    for _ in range(n):
        u = u + dt * op.drift_rate(u)
    peak = int(np.argmax(u[:, mu]))
    moved = lattice.wrap_offset(pos[peak] - pos[start])
    expected = speed * t * np.array([math.cos(vgrid.channel_theta[mu]), math.sin(vgrid.channel_theta[mu])])
    return float(np.linalg.norm(moved - expected)), expected


def validate(cfg: ExperimentConfig | None = None) -> ValidationReport:
    cfg = cfg or ExperimentConfig(width=8, height=8, n_speeds=3)
    cfg.validate()
    if cfg.width > 8 or cfg.height > 8 or cfg.n_dirs * cfg.n_speeds > 18:
        raise InvalidArgument("validate expects a lattice of at most 8x8 and at most 18 channels")
    lattice, vgrid = cfg.lattice(), cfg.vgrid()
    rates = cfg.prior_rates()
    opts = cfg.pde_options()
    rep = ValidationReport()

    # the uniform density is a fixed point of both engines
    u = ProbabilityField.uniform(lattice, vgrid)
    dev = max(np.abs(predict_pde(u, rates, cfg.frame_interval, cfg.frame_interval / 8, opts).alpha
                     - u.alpha).max(),
              np.abs(predict_kernel(u, cfg.prior_params(), cfg.frame_interval).alpha - u.alpha).max())
    rep.checks.append(Check("uniform fixed point", dev <= 1e-12, dev, 1e-12))

    f0 = smooth_field(lattice, vgrid, cfg.seed)
    n = 8
    dt = cfg.frame_interval / n
    e1 = oracle_distance(f0, rates, n, dt, opts)
    e2 = oracle_distance(f0, rates, n, dt / 2, opts)
    rep.checks.append(Check("pde vs kernel L1", e1 < ORACLE_L1, e1, ORACLE_L1,
                            f"({n} steps of {dt:.4g} s)"))
    rep.checks.append(Check("pde vs kernel L1, dt halved", e2 < e1, e2, e1))

    growth, expected = velocity_diffusion_check()
    err = float(np.max(np.abs(growth - expected)) / expected)
    rep.checks.append(Check("velocity diffusion variance growth", err < DIFFUSION_RTOL, err,
                            DIFFUSION_RTOL, "relative error"))

    growth, expected = spatial_diffusion_check()
    err = float(np.max(np.abs(growth - expected)) / np.max(np.abs(expected)))
    rep.checks.append(Check("spatial diffusion covariance growth", err < DIFFUSION_RTOL, err,
                            DIFFUSION_RTOL, "relative error"))

    miss, _ = advection_check()
    rep.checks.append(Check("advection peak displacement", miss <= 0.5, miss, 0.5, "jumps"))

    zero = PriorParams(0.0, 0.0, 0.0, 0.0)
    bound = stability_max_dt(zero, lattice, vgrid, opts)
    cfl = lattice.spacing / vgrid.s_max
    rep.checks.append(Check("advection-only stability bound", abs(bound - cfl) <= 1e-9 * cfl,
                            bound, cfl, "s"))
    return rep
