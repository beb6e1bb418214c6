"""Experiment configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields

from ..errors import InvalidArgument
from ..geometry import build_hex_lattice, build_velocity_grid
from ..measurement import MeasurementParams
from ..prediction import PdeOptions, PriorParams

STIMULI = ("single_dot", "circular", "black_occluder", "motion_occluder", "outlier", "file")


@dataclass
class ExperimentConfig:
    # lattice and velocity channels
    width: int = 32
    height: int = 32
    n_dirs: int = 6
    n_speeds: int = 5
    dr: float = 2.0
    s_min: float = 2.0
    # measurement
    sigma_mx_L: float = 0.8
    sigma_mx_T: float = 0.4
    sigma_mv_L: float = 3.2
    sigma_mv_T: float = 2.6
    floor_eps: float = 1e-3
    cutoff_radius: float = 2.0
    # likelihood
    sigma_lv_L: float = 2.2
    sigma_lv_T: float = 1.1
    # prior, as standard deviations accumulated over one frame interval
    sigma_x_L: float = 0.6
    sigma_x_T: float = 0.3
    sigma_v_L: float = 0.8
    sigma_v_T: float = 0.4
    # time stepping
    frame_interval: float = 1.0 / 6.0
    dt: float = 6e-4
    engine: str = "pde"
    speed_boundary: str = "periodic"
    drift_scheme: str = "upwind"
    normalization: str = "multiplicative"
    # stimulus
    stimulus: str = "single_dot"
    stimulus_file: str = ""
    n_frames: int = 30
    speed: float = 6.0
    direction_deg: float = 0.0
    start_x: float = 4.0
    start_y: float = 12.124355652982141  # on row 14
    radius: float = 6.0
    angular_speed: float = 1.0
    occluder_y_min: float = 15.0
    occluder_y_max: float = 22.0
    band_axis: str = "x"
    band_lo: float = 12.0
    band_hi: float = 19.0
    distractor_speed: float = 6.0
    distractor_direction_deg: float = 90.0
    density: float = 1.0
    n_distractors: int = 30
    brownian_step: float = 1.0
    # speed discrimination
    base_speed: float = 2.0
    jitter: float = 0.25
    dv_grid: tuple = (0.05, 0.0765, 0.117, 0.179, 0.273, 0.418, 0.639, 1.0)
    n_jumps_list: tuple = (2, 4, 8)
    trials: int = 100
    # output
    snapshot_frames: tuple = ()
    out: str = "results"
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        if self.width < 1 or self.height < 1:
            raise InvalidArgument("lattice dimensions must be >= 1")
        if self.engine not in ("kernel", "pde"):
            raise InvalidArgument(f"engine must be 'kernel' or 'pde', got {self.engine!r}")
        if self.stimulus not in STIMULI:
            raise InvalidArgument(f"unknown stimulus {self.stimulus!r}")
        for f in fields(self):
            if f.name.startswith("sigma_") and not getattr(self, f.name) > 0:
                raise InvalidArgument(f"{f.name} must be positive")
        if not self.frame_interval > 0 or not self.dt > 0:
            raise InvalidArgument("frame_interval and dt must be positive")
        if self.n_frames < 1:
            raise InvalidArgument("n_frames must be >= 1")
        self.pde_options()
        return self

    # -- derived objects ---------------------------------------------------

    def lattice(self):
        return build_hex_lattice(self.width, self.height)

    def vgrid(self):
        return build_velocity_grid(self.n_dirs, self.n_speeds, None, self.dr, self.s_min)

    def measurement_params(self) -> MeasurementParams:
        return MeasurementParams(self.sigma_mx_L, self.sigma_mx_T, self.sigma_mv_L,
                                 self.sigma_mv_T, self.floor_eps, self.cutoff_radius)

    def prior_params(self) -> PriorParams:
        return PriorParams(self.sigma_x_L, self.sigma_x_T, self.sigma_v_L, self.sigma_v_T)

    def prior_rates(self) -> PriorParams:
        """Prior as diffusion rates (variance per second) for the PDE engine."""
        return self.prior_params().scaled(1.0 / self.frame_interval)

    def pde_options(self) -> PdeOptions:
        return PdeOptions(self.speed_boundary, self.drift_scheme, self.normalization)

    @property
    def direction(self) -> float:
        return math.radians(self.direction_deg)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})


def _convert(f: dataclasses.Field, text: str):
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    text = text.strip()
    if isinstance(default, tuple):
        items = [t for t in text.replace(",", " ").split() if t]
        kind = int if f.name in ("n_jumps_list", "snapshot_frames") else float
        return tuple(kind(t) for t in items)
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        if "/" in text:
            num, den = text.split("/", 1)
            return float(num) / float(den)
        return float(text)
    return text


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Fractions such as
    ``1/6`` are accepted for float fields."""
    cfg = base or ExperimentConfig()
    known = {f.name: f for f in fields(ExperimentConfig)}
    updates = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"config line {n}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise InvalidArgument(f"config line {n}: unknown key {key!r}")
        try:
            updates[key] = _convert(known[key], value)
        except ValueError as exc:
            raise InvalidArgument(f"config line {n}: bad value for {key}: {value!r}") from exc
    return dataclasses.replace(cfg, **updates).validate()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidArgument(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"
