"""Seedable random-dot stimuli on the periodic hex lattice.

Positions are in jumps, velocities in jps. Every frame is one measurement
instant; frames are ``frame_interval`` seconds apart.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgument
from .geometry import ROW_PITCH, build_hex_lattice

DEFAULT_FRAME_INTERVAL = 1.0 / 6.0
DEFAULT_JITTER = 0.25
DEFAULT_BROWNIAN_STEP = 1.0


def _dots(a) -> np.ndarray:
    out = np.asarray(a, dtype=float).reshape(-1, 4)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Frame:
    """Dots visible in one frame plus the black-occluder bands active in it.

    ``target`` is the ground-truth state (x, y, vx, vy) of the tracked dot,
    kept even when the dot itself is hidden.
    """

    dots: np.ndarray
    occluders: tuple = ()
    target: tuple | None = None

    def mask(self, lattice) -> np.ndarray:
        """Boolean node mask of measurement-free nodes."""
        m = np.zeros(lattice.n_nodes, dtype=bool)
        for y_min, y_max in self.occluders:
            rows = lattice.rows_in_band(y_min, y_max)
            m.reshape(lattice.height, lattice.width)[rows] = True
        return m


@dataclass(frozen=True, eq=False)
class StimulusSequence:
    frames: list
    width: int = 32
    height: int = 32
    frame_interval: float = DEFAULT_FRAME_INTERVAL
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)

    @property
    def extent(self):
        return float(self.width), self.height * ROW_PITCH

    def lattice(self):
        return build_hex_lattice(self.width, self.height)

    def wrap(self, xy: np.ndarray) -> np.ndarray:
        lx, ly = self.extent
        out = np.array(xy, dtype=float, copy=True)
        out[..., 0] = np.mod(out[..., 0], lx)
        out[..., 1] = np.mod(out[..., 1], ly)
        # mod of a tiny negative number rounds up to the full extent
        out[..., 0][out[..., 0] >= lx] = 0.0
        out[..., 1][out[..., 1] >= ly] = 0.0
        return out

    def equals(self, other: "StimulusSequence") -> bool:
        """Bit-for-bit comparison of geometry and every frame."""
        if (self.width, self.height, self.frame_interval, self.seed, len(self)) != \
                (other.width, other.height, other.frame_interval, other.seed, len(other)):
            return False
        for a, b in zip(self.frames, other.frames):
            if a.dots.shape != b.dots.shape or a.dots.tobytes() != b.dots.tobytes():
                return False
            if tuple(a.occluders) != tuple(b.occluders) or a.target != b.target:
                return False
        return True

    def dumps(self) -> str:
        lines = [f"lattice {self.width} {self.height}",
                 f"frame_interval {self.frame_interval!r}",
                 f"seed {self.seed}"]
        for k, fr in enumerate(self.frames):
            lines.append(f"frame {k}")
            if fr.target is not None:
                lines.append("target " + " ".join(repr(float(v)) for v in fr.target))
            for d in fr.dots:
                lines.append(" ".join(repr(float(v)) for v in d))
            for y0, y1 in fr.occluders:
                lines.append(f"occlude {float(y0)!r} {float(y1)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "StimulusSequence":
        width = height = None
        fi, seed = DEFAULT_FRAME_INTERVAL, 0
        frames, cur = [], None

        def close():
            if cur is not None:
                frames.append(Frame(_dots(cur["dots"]), tuple(cur["occ"]), cur["target"]))

        for n, raw in enumerate(text.splitlines(), 1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            key = parts[0]
            try:
                if key == "lattice":
                    width, height = int(parts[1]), int(parts[2])
                elif key == "frame_interval":
                    fi = float(parts[1])
                elif key == "seed":
                    seed = int(parts[1])
                elif key == "frame":
                    close()
                    if int(parts[1]) != len(frames):
                        raise InvalidArgument(f"line {n}: frames out of order")
                    cur = {"dots": [], "occ": [], "target": None}
                elif cur is None:
                    raise InvalidArgument(f"line {n}: data before first frame")
                elif key == "occlude":
                    cur["occ"].append((float(parts[1]), float(parts[2])))
                elif key == "target":
                    cur["target"] = tuple(float(v) for v in parts[1:5])
                elif len(parts) == 4:
                    cur["dots"].append([float(v) for v in parts])
                else:
                    raise InvalidArgument(f"line {n}: cannot parse {raw!r}")
            except (ValueError, IndexError) as exc:
                raise InvalidArgument(f"line {n}: cannot parse {raw!r}") from exc
        close()
        if width is None:
            raise InvalidArgument("missing 'lattice' header")
        return cls(frames, width, height, fi, seed)


def _check_frames(n_frames):
    if n_frames < 1:
        raise InvalidArgument("n_frames must be >= 1")


def _straight_track(start, velocity, n_frames, frame_interval, t0=0):
    k = np.arange(t0, t0 + n_frames, dtype=float)[:, None]
    step = frame_interval * np.asarray(velocity, dtype=float)
    return np.asarray(start, dtype=float) + k * step


def _from_track(pos, vel, width, height, frame_interval, seed, meta=None):
    seq = StimulusSequence([], width, height, frame_interval, seed, dict(meta or {}))
    pos = seq.wrap(pos)
    frames = []
    for p, v in zip(pos, vel):
        t = (float(p[0]), float(p[1]), float(v[0]), float(v[1]))
        frames.append(Frame(_dots([t]), (), t))
    return replace(seq, frames=frames)


def gen_single_dot(speed: float, direction: float, start=(4.0, 16.0), n_frames: int = 30, *,
                   width: int = 32, height: int = 32,
                   frame_interval: float = DEFAULT_FRAME_INTERVAL, seed: int = 0):
    _check_frames(n_frames)
    v = speed * np.array([math.cos(direction), math.sin(direction)])
    pos = _straight_track(start, v, n_frames, frame_interval)
    return _from_track(pos, np.tile(v, (n_frames, 1)), width, height, frame_interval, seed)


def gen_circular(radius: float, angular_speed: float, n_frames: int, center=None,
                 phase: float = 0.0, *, width: int = 32, height: int = 32,
                 frame_interval: float = DEFAULT_FRAME_INTERVAL, seed: int = 0):
    if not radius > 0:
        raise InvalidArgument("radius must be positive")
    _check_frames(n_frames)
    if center is None:
        center = (width / 2, height * ROW_PITCH / 2)
    ang = phase + angular_speed * frame_interval * np.arange(n_frames)
    pos = np.asarray(center, dtype=float) + radius * np.stack([np.cos(ang), np.sin(ang)], 1)
    vel = radius * angular_speed * np.stack([-np.sin(ang), np.cos(ang)], 1)
    return _from_track(pos, vel, width, height, frame_interval, seed)


def gen_black_occluder(base: StimulusSequence, y_min: float, y_max: float) -> StimulusSequence:
    """Hide every dot with y in [y_min, y_max] and mask that band of rows."""
    if not y_min <= y_max:
        raise InvalidArgument("y_min must not exceed y_max")
    if y_min < 0 or y_max > base.extent[1]:
        raise InvalidArgument("occluder band outside the lattice")
    lat = base.lattice()
    if len(lat.rows_in_band(y_min, y_max)) == 0:
        return base
    frames = []
    for fr in base.frames:
        y = fr.dots[:, 1]
        keep = ~((y >= y_min) & (y <= y_max))
        frames.append(Frame(_dots(fr.dots[keep]), tuple(fr.occluders) + ((float(y_min), float(y_max)),),
                            fr.target))
    meta = dict(base.meta, black_band=(float(y_min), float(y_max)))
    return replace(base, frames=frames, meta=meta)


def gen_motion_occluder(target: StimulusSequence, band=("x", 12.0, 19.0),
                        distractor_speed: float = 6.0, distractor_direction: float = math.pi / 2,
                        density: float = 1.0, seed: int | None = None) -> StimulusSequence:
    """Replace the target inside ``band`` with coherently moving distractors.

    ``band`` is ``(axis, lo, hi)``: the strip of the torus with x (axis "x")
    or y (axis "y") in [lo, hi]. Distractors are placed uniformly in the
    strip, ``density`` dots per lattice node, and move together; a dot
    leaving the strip across its width re-enters on the other side.
    """
    axis, lo, hi = band
    if axis not in ("x", "y"):
        raise InvalidArgument("band axis must be 'x' or 'y'")
    if density < 0:
        raise InvalidArgument("density must be non-negative")
    if not lo <= hi:
        raise InvalidArgument("band limits reversed")
    ax = 0 if axis == "x" else 1
    lx, ly = target.extent
    span = (lx, ly)[1 - ax]
    width = hi - lo
    area = width * span
    n_dots = int(round(density * area / ROW_PITCH)) if width > 0 else 0
    seed = target.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    p0 = np.empty((n_dots, 2))
    p0[:, ax] = lo + width * rng.random(n_dots)
    p0[:, 1 - ax] = span * rng.random(n_dots)
    v = distractor_speed * np.array([math.cos(distractor_direction), math.sin(distractor_direction)])

    frames = []
    for k, fr in enumerate(target.frames):
        c = fr.dots[:, ax]
        keep = ~((c >= lo) & (c <= hi))
        p = p0 + k * target.frame_interval * v
        if width > 0:
            p[:, ax] = lo + np.mod(p[:, ax] - lo, width)
        p = target.wrap(p)
        d = np.concatenate([p, np.tile(v, (n_dots, 1))], axis=1)
        frames.append(Frame(_dots(np.concatenate([fr.dots[keep], d])), fr.occluders, fr.target))
    meta = dict(target.meta, motion_band=(axis, float(lo), float(hi)))
    return replace(target, frames=frames, seed=seed, meta=meta)


def gen_outlier(target_speed: float = 6.0, n_distractors: int = 30,
                brownian_step_sigma: float = DEFAULT_BROWNIAN_STEP, n_frames: int = 30,
                seed: int = 0, start=(4.0, 13.0), *, width: int = 32, height: int = 32,
                frame_interval: float = DEFAULT_FRAME_INTERVAL) -> StimulusSequence:
    """Horizontal target among randomly walking distractors.

    Each distractor takes an isotropic Gaussian step every frame; its
    reported velocity is that step divided by the frame interval.
    """
    if n_distractors < 0:
        raise InvalidArgument("n_distractors must be >= 0")
    base = gen_single_dot(target_speed, 0.0, start, n_frames, width=width, height=height,
                          frame_interval=frame_interval, seed=seed)
    if n_distractors == 0:
        return base
    rng = np.random.default_rng(seed)
    lx, ly = base.extent
    p = rng.random((n_distractors, 2)) * (lx, ly)
    steps = rng.normal(0.0, brownian_step_sigma, (n_frames + 1, n_distractors, 2))
    frames = []
    for k, fr in enumerate(base.frames):
        # the first frame already carries a displacement so every reported
        # velocity is a realized step
        prev = p
        p = prev + steps[k]
        d = np.concatenate([base.wrap(p), (p - prev) / frame_interval], axis=1)
        frames.append(Frame(_dots(np.concatenate([fr.dots, d])), (), fr.target))
    return replace(base, frames=frames, meta={"n_distractors": n_distractors})


def _jittered_track(speed, n_jumps, jitter_sigma, rng, start, direction, width, height,
                    frame_interval):
    v = speed * np.array([math.cos(direction), math.sin(direction)])
    clean = _straight_track(start, v, n_jumps + 1, frame_interval)
    noisy = clean + rng.normal(0.0, jitter_sigma, clean.shape) if jitter_sigma > 0 else clean
    vel = np.diff(noisy, axis=0) / frame_interval
    truth = clean[1:]
    seq = _from_track(noisy[1:], vel, width, height, frame_interval, 0)
    # ground truth follows the noiseless trajectory
    frames = [Frame(fr.dots, (), (float(t[0]), float(t[1]), float(v[0]), float(v[1])))
              for fr, t in zip(seq.frames, seq.wrap(truth))]
    return frames


def gen_speed_pair(base_speed: float = 2.0, dv_over_v: float = 0.5, n_jumps: int = 4,
                   jitter_sigma: float = DEFAULT_JITTER, seed: int = 0, start=(8.0, 13.0),
                   direction: float = 0.0, *, width: int = 32, height: int = 32,
                   frame_interval: float = DEFAULT_FRAME_INTERVAL):
    """Reference dot at ``base_speed`` and a test dot ``dv_over_v`` faster.

    Each sequence has ``n_jumps`` frames. Positions carry independent
    Gaussian jitter, and the reported velocity in a frame is the jittered
    displacement from the previous position divided by the frame interval.
    """
    if dv_over_v < 0:
        raise InvalidArgument("dv_over_v must be >= 0")
    _check_frames(n_jumps)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]
    out = []
    for speed, rng in zip((base_speed, base_speed * (1.0 + dv_over_v)), rngs):
        frames = _jittered_track(speed, n_jumps, jitter_sigma, rng, start, direction,
                                 width, height, frame_interval)
        out.append(StimulusSequence(frames, width, height, frame_interval, seed,
                                    {"speed": speed}))
    return out[0], out[1]
