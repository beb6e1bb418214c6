"""Predict-measure-update loop and the speed discrimination experiment."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import stimuli
from ..errors import InvalidArgument, StabilityError
from ..estimation import mean_velocity, peak_track, sharpness, update
from ..likelihood import evaluate, tuning_matrix
from ..measurement import respond
from ..prediction import ProbabilityField, get_operator, predict_kernel, stability_max_dt
from .config import ExperimentConfig


@dataclass
class FrameMetrics:
    frame: int
    target_node: int
    sharpness: float
    confidence: float
    peak_node: int
    peak_x: float
    peak_y: float
    mean_vx: float
    mean_vy: float


@dataclass
class RunRecord:
    frames: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    final: ProbabilityField | None = None
    final_confidence: np.ndarray | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.frames])


def build_stimulus(cfg: ExperimentConfig) -> stimuli.StimulusSequence:
    geo = dict(width=cfg.width, height=cfg.height, frame_interval=cfg.frame_interval)
    start = (cfg.start_x, cfg.start_y)
    kind = cfg.stimulus
    if kind == "file":
        with open(cfg.stimulus_file) as fh:
            return stimuli.StimulusSequence.loads(fh.read())
    if kind == "circular":
        return stimuli.gen_circular(cfg.radius, cfg.angular_speed, cfg.n_frames, seed=cfg.seed, **geo)
    if kind == "outlier":
        return stimuli.gen_outlier(cfg.speed, cfg.n_distractors, cfg.brownian_step, cfg.n_frames,
                                   cfg.seed, start, **geo)
    base = stimuli.gen_single_dot(cfg.speed, cfg.direction, start, cfg.n_frames, seed=cfg.seed, **geo)
    if kind == "black_occluder":
        return stimuli.gen_black_occluder(base, cfg.occluder_y_min, cfg.occluder_y_max)
    if kind == "motion_occluder":
        return stimuli.gen_motion_occluder(
            base, (cfg.band_axis, cfg.band_lo, cfg.band_hi), cfg.distractor_speed,
            math.radians(cfg.distractor_direction_deg), cfg.density, cfg.seed)
    return base


class Predictor:
    """Advances a field across one frame interval with the configured engine."""

    def __init__(self, cfg: ExperimentConfig, lattice, vgrid):
        self.cfg = cfg
        self.engine = cfg.engine
        if cfg.engine == "pde":
            rates = cfg.prior_rates()
            opts = cfg.pde_options()
            bound = stability_max_dt(rates, lattice, vgrid, opts)
            if cfg.dt > bound * (1 + 1e-9):
                raise StabilityError(
                    f"dt={cfg.dt:.3e} s exceeds stability bound {bound:.3e} s")
            self.n_steps = max(1, math.ceil(cfg.frame_interval / cfg.dt - 1e-9))
            self.step_dt = cfg.frame_interval / self.n_steps
            self.op = get_operator(lattice, vgrid, rates, opts)
        else:
            self.params = cfg.prior_params()

    def __call__(self, f: ProbabilityField, on_step=None) -> ProbabilityField:
        if self.engine == "kernel":
            return predict_kernel(f, self.params, self.cfg.frame_interval)
        a = f.alpha
        for _ in range(self.n_steps):
            a = self.op.step(a, self.step_dt)
            if on_step is not None:
                on_step(a)
        return f.replace(a, f.time + self.cfg.frame_interval)


def run(cfg: ExperimentConfig, seq: stimuli.StimulusSequence | None = None,
        on_step=None) -> RunRecord:
    """Start from a uniform field; per frame predict, then fuse the frame's
    measurements everywhere except at black-occluded nodes.

    ``on_step`` (optional) is called with the raw array after every
    prediction step and every update.
    """
    cfg.validate()
    seq = seq if seq is not None else build_stimulus(cfg)
    if (seq.width, seq.height) != (cfg.width, cfg.height):
        raise InvalidArgument("stimulus lattice does not match the configuration")
    lattice, vgrid = cfg.lattice(), cfg.vgrid()
    mparams = cfg.measurement_params()
    F = tuning_matrix(vgrid, cfg.sigma_lv_L, cfg.sigma_lv_T)
    predict = Predictor(cfg, lattice, vgrid)
    snaps = set(cfg.snapshot_frames)

    f = ProbabilityField.uniform(lattice, vgrid)
    rec = RunRecord()
    for k, frame in enumerate(seq.frames):
        f = predict(f, on_step)
        phi = respond(frame, lattice, vgrid, mparams)
        mask = frame.mask(lattice)
        f, conf = update(f, evaluate(phi, F), mask if mask.any() else None)
        if on_step is not None:
            on_step(f.alpha)
        rec.frames.append(_metrics(k, f, conf, frame, lattice, vgrid))
        if k in snaps:
            rec.snapshots[k] = f.alpha.copy()
    rec.final = f
    rec.final_confidence = conf
    return rec


def _metrics(k, f, conf, frame, lattice, vgrid) -> FrameMetrics:
    if frame.target is not None:
        target = lattice.nearest_node(frame.target[:2])
    else:
        target = peak_track(f)[0]
    a = f.alpha[target]
    peak, ppos = peak_track(f)
    mv = mean_velocity(a, vgrid)
    return FrameMetrics(k, target, float(sharpness(a)), float(conf[target]), peak,
                        float(ppos[0]), float(ppos[1]), float(mv[0]), float(mv[1]))


# -- speed discrimination ------------------------------------------------------

def estimated_speed(rec: RunRecord, last: int = 3) -> float:
    """Speed of the target-node mean velocity averaged over the final frames."""
    v = np.stack([rec.column("mean_vx"), rec.column("mean_vy")], axis=1)[-last:]
    return float(np.mean(np.hypot(v[:, 0], v[:, 1])))


def threshold_crossing(dv_grid, pc, level: float = 0.8):
    """First crossing of ``level`` by linear interpolation in log dv.

    Grid points with dv <= 0 are ignored. Returns None (out of range) when
    percent correct never reaches ``level`` inside the grid or is already
    above it at the smallest dv.
    """
    dv = np.asarray(dv_grid, dtype=float)
    pc = np.asarray(pc, dtype=float)
    keep = dv > 0
    dv, pc = dv[keep], pc[keep]
    for i in range(len(dv)):
        if pc[i] >= level:
            if i == 0:
                return float(dv[0]) if pc[0] == level else None
            x0, x1 = math.log(dv[i - 1]), math.log(dv[i])
            t = (level - pc[i - 1]) / (pc[i] - pc[i - 1])
            return float(math.exp(x0 + t * (x1 - x0)))
    return None


@dataclass
class DiscriminationResult:
    dv_grid: tuple
    n_jumps_list: tuple
    trials: int
    percent_correct: np.ndarray  # (len(n_jumps_list), len(dv_grid))
    thresholds: dict

    def table(self) -> str:
        rows = ["n_jumps,threshold_dv_over_v"]
        for n in self.n_jumps_list:
            t = self.thresholds[n]
            rows.append(f"{n},{'out-of-range' if t is None else repr(t)}")
        return "\n".join(rows) + "\n"


def discrimination_trial(cfg: ExperimentConfig, dv: float, n_jumps: int, seed) -> bool:
    ref, test = stimuli.gen_speed_pair(cfg.base_speed, dv, n_jumps, cfg.jitter, seed,
                                       (cfg.start_x, cfg.start_y), cfg.direction,
                                       width=cfg.width, height=cfg.height,
                                       frame_interval=cfg.frame_interval)
    s_ref = estimated_speed(run(cfg, ref))
    s_test = estimated_speed(run(cfg, test))
    return s_test > s_ref


def speed_discrimination(cfg: ExperimentConfig, dv_grid=None, n_jumps_list=None,
                         trials: int | None = None) -> DiscriminationResult:
    dv_grid = tuple(cfg.dv_grid if dv_grid is None else dv_grid)
    n_jumps_list = tuple(cfg.n_jumps_list if n_jumps_list is None else n_jumps_list)
    trials = cfg.trials if trials is None else trials
    if trials < 20:
        raise InvalidArgument("speed discrimination needs at least 20 trials per cell")
    root = np.random.SeedSequence(cfg.seed)
    cells = root.spawn(len(n_jumps_list) * len(dv_grid))
    pc = np.zeros((len(n_jumps_list), len(dv_grid)))
    for i, n in enumerate(n_jumps_list):
        for j, dv in enumerate(dv_grid):
            seeds = cells[i * len(dv_grid) + j].generate_state(trials)
            wins = sum(discrimination_trial(cfg, dv, n, int(s)) for s in seeds)
            pc[i, j] = wins / trials
    thresholds = {n: threshold_crossing(dv_grid, pc[i]) for i, n in enumerate(n_jumps_list)}
    return DiscriminationResult(dv_grid, n_jumps_list, trials, pc, thresholds)
