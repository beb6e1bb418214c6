import math
import os
import subprocess
import sys

import numpy as np
import pytest

from coherent_motion.errors import InvalidArgument, StabilityError
from coherent_motion.estimation import update
from coherent_motion.harness import ExperimentConfig, emit, parse_config, run, validate
from coherent_motion.harness.cli import main
from coherent_motion.harness.config import dump_config
from coherent_motion.harness.emit import CSV_HEADER, metrics_csv, read_pgm, sharpness_pgm
from coherent_motion.harness.run import (estimated_speed, speed_discrimination,
                                         threshold_crossing)
from coherent_motion.prediction import ProbabilityField
from coherent_motion.stimuli import Frame, StimulusSequence

SMALL = ExperimentConfig(width=16, height=16, n_speeds=3, n_frames=10,
                         start_y=5.196152422706632)


# -- configuration ---------------------------------------------------------

def test_parse_config_values_and_comments():
    cfg = parse_config("""
        # geometry
        width = 12   # trailing comment
        frame_interval = 1/6
        engine = kernel
        n_jumps_list = 2, 4
        dv_grid = 0.1 0.2
    """)
    assert cfg.width == 12
    assert cfg.frame_interval == 1 / 6
    assert cfg.engine == "kernel"
    assert cfg.n_jumps_list == (2, 4)
    assert cfg.dv_grid == (0.1, 0.2)


@pytest.mark.parametrize("text", ["nonsense", "colour = red", "width = wide", "engine = euler",
                                  "sigma_x_L = -1", "dt = 0"])
def test_parse_config_errors(text):
    with pytest.raises(InvalidArgument):
        parse_config(text)


def test_dump_parse_round_trip():
    cfg = ExperimentConfig(width=10, dv_grid=(0.1, 0.3), snapshot_frames=(1, 5), seed=4)
    assert parse_config(dump_config(cfg)) == cfg


# -- the loop ----------------------------------------------------------------

@pytest.mark.parametrize("engine", ["pde", "kernel"])
def test_single_dot_sharpens_then_saturates(engine):
    rec = run(SMALL.with_overrides(engine=engine))
    s = rec.column("sharpness")
    assert s[0] < s[3] < s[-1]
    assert s[-1] < math.log(18)
    assert np.all(rec.column("confidence") > 0)


def test_empty_stimulus_stays_uniform():
    seq = StimulusSequence([Frame(np.zeros((0, 4)))] * 4, 16, 16)
    rec = run(SMALL, seq)
    assert np.abs(rec.final.alpha - 1 / 18).max() < 1e-12
    assert np.all(rec.column("sharpness") < 1e-12)


def test_masked_update_matches_uniform_likelihood(rng, lat8, grid18):
    f = ProbabilityField.from_weights(rng.random((64, 18)) + 0.01, lat8, grid18)
    L = rng.random((64, 18)) + 0.1
    mask = np.zeros(64, dtype=bool)
    mask[10:30] = True
    g, N = update(f, L, mask)
    h, Nh = update(f, np.ones((64, 18)), None)
    assert np.abs(g.alpha[mask] - h.alpha[mask]).max() < 1e-12
    assert np.abs(N[mask] - 1 / 18).max() < 1e-15
    assert np.abs(Nh - 1).max() < 1e-12


def test_dt_above_bound_is_refused():
    with pytest.raises(StabilityError):
        run(SMALL.with_overrides(dt=0.2))


def test_mismatched_stimulus_refused():
    seq = StimulusSequence([Frame(np.zeros((0, 4)))], 8, 8)
    with pytest.raises(InvalidArgument):
        run(SMALL, seq)


def test_on_step_sees_every_step():
    calls = []
    run(SMALL.with_overrides(n_frames=2), on_step=lambda a: calls.append(a.min()))
    steps = math.ceil(SMALL.frame_interval / SMALL.dt - 1e-9)
    assert len(calls) == 2 * (steps + 1)
    assert min(calls) >= 0


def test_estimated_speed_tracks_stimulus():
    rec = run(SMALL.with_overrides(engine="kernel", n_frames=12))
    assert estimated_speed(rec) == pytest.approx(6.0, abs=1.0)


# -- outputs ----------------------------------------------------------------------

def test_emit_files(tmp_path):
    cfg = SMALL.with_overrides(snapshot_frames=(0, 9))
    rec = run(cfg)
    paths = emit(rec, tmp_path, cfg.width, cfg.height)
    assert len(paths) == 5
    csv = (tmp_path / "run_metrics.csv").read_text().splitlines()
    assert csv[0] == ",".join(CSV_HEADER)
    assert len(csv) == 11
    img = read_pgm((tmp_path / "run_frame009.pgm").read_bytes())
    assert img.shape == (16, 16) and img.max() > 0
    again = run(cfg)
    assert metrics_csv(again) == metrics_csv(rec)


def test_uniform_pgm_is_flat():
    img = read_pgm(sharpness_pgm(np.full((12, 5), 0.2), 4, 3))
    assert img.shape == (3, 4)
    assert np.all(img == 0)


def test_emit_reports_unwritable_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit(run(SMALL.with_overrides(n_frames=1)), blocker / "sub", 16, 16)


# -- speed discrimination ------------------------------------------------------

def test_threshold_crossing():
    dv = [0.0, 0.1, 0.2, 0.4]
    assert threshold_crossing(dv, [0.5, 0.6, 0.7, 0.9]) == pytest.approx(math.sqrt(0.2 * 0.4))
    assert threshold_crossing(dv, [0.5, 0.6, 0.7, 0.75]) is None
    assert threshold_crossing(dv, [0.5, 0.85, 0.9, 0.95]) is None
    assert threshold_crossing(dv[1:], [0.8, 0.9, 1.0]) == 0.1


def test_discrimination_needs_enough_trials():
    with pytest.raises(InvalidArgument):
        speed_discrimination(SMALL, trials=5)


def test_discrimination_is_reproducible():
    cfg = ExperimentConfig(width=16, height=8, n_speeds=3, engine="kernel", start_x=3.0,
                           start_y=5.196152422706632)
    a = speed_discrimination(cfg, (0.1, 1.0), (2,), trials=20)
    b = speed_discrimination(cfg, (0.1, 1.0), (2,), trials=20)
    assert np.array_equal(a.percent_correct, b.percent_correct)
    assert a.percent_correct[0, 1] >= a.percent_correct[0, 0]
    assert a.table().startswith("n_jumps,threshold_dv_over_v\n2,")


# -- self-checks and command line ------------------------------------------------------

def test_validate_passes():
    rep = validate()
    assert rep.passed, rep.text()
    with pytest.raises(InvalidArgument):
        validate(ExperimentConfig())


def _cfg_file(tmp_path, **kw):
    cfg = SMALL.with_overrides(**kw)
    p = tmp_path / "exp.cfg"
    p.write_text(dump_config(cfg))
    return str(p)


def test_cli_run_and_stimulus(tmp_path, capsys):
    path = _cfg_file(tmp_path, n_frames=3)
    assert main(["run", path, "--out", str(tmp_path / "o"), "--engine", "kernel"]) == 0
    assert (tmp_path / "o" / "run_metrics.csv").exists()
    assert main(["emit-stimulus", path, "--seed", "3"]) == 0
    out = capsys.readouterr().out
    seq = StimulusSequence.loads(out[out.index("lattice"):])
    assert len(seq) == 3 and seq.seed == 3


def test_cli_errors_exit_one(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.cfg")]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("width = -2\n")
    assert main(["validate", str(bad)]) == 1
    assert "error:" in capsys.readouterr().err


def test_results_do_not_depend_on_thread_count(tmp_path):
    path = _cfg_file(tmp_path, n_frames=4)
    outs = []
    for threads in ("1", "4"):
        env = dict(os.environ, OMP_NUM_THREADS=threads, OPENBLAS_NUM_THREADS=threads,
                   MKL_NUM_THREADS=threads)
        out = tmp_path / f"t{threads}"
        subprocess.run([sys.executable, "-m", "coherent_motion", "run", path, "--out", str(out)],
                       check=True, env=env, capture_output=True)
        outs.append((out / "run_metrics.csv").read_bytes())
    assert outs[0] == outs[1]


def test_same_direction_distractors_keep_target_trackable():
    cfg = ExperimentConfig(stimulus="motion_occluder", n_speeds=3, start_x=2.0, n_frames=20,
                           distractor_direction_deg=0.0, density=0.25,
                           snapshot_frames=tuple(range(20)))
    from coherent_motion.harness import build_stimulus
    seq = build_stimulus(cfg)
    rec = run(cfg, seq)
    s = rec.column("sharpness")
    tx = np.array([fr.target[0] for fr in seq.frames])
    band = np.flatnonzero((tx >= 12) & (tx <= 19))
    assert s[band].min() >= s[band[0] - 1]
    vg, lat = cfg.vgrid(), cfg.lattice()
    for k in band:
        node = lat.nearest_node(seq.frames[k].target[:2])
        prof = rec.snapshots[k][node].reshape(vg.n_speeds, vg.n_dirs).sum(axis=0)
        assert int(np.argmax(prof)) == 0
