import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coherent_motion.errors import InvalidArgument, StabilityError
from coherent_motion.estimation import sharpness
from coherent_motion.geometry import build_hex_lattice, build_velocity_grid, hex_unit_vectors
from coherent_motion.prediction import (PdeOperator, PdeOptions, PriorParams, ProbabilityField,
                                        predict_kernel, predict_pde, predict_pde_step,
                                        stability_max_dt, stability_report, velocity_transition)
from coherent_motion.prediction.pde import hex_diffusion_weights, hex_drift_weights

LAT = build_hex_lattice(8, 8)
GRID = build_velocity_grid(6, 3)
RATES = PriorParams().scaled(6.0)  # per-frame defaults as rates for 1/6 s frames

weights = arrays(np.float64, (64, 18), elements=st.floats(0.0, 1.0)).map(lambda a: a + 1e-6)
params_st = st.builds(PriorParams, st.floats(0.05, 2), st.floats(0.05, 2),
                      st.floats(0.05, 2), st.floats(0.05, 2))


def bump(node=27, mu=2, floor=1e-4):
    a = np.full((LAT.n_nodes, GRID.M), floor)
    a[node, mu] = 1.0
    return ProbabilityField.from_weights(a, LAT, GRID)


# -- field -------------------------------------------------------------------

def test_field_validation():
    with pytest.raises(InvalidArgument):
        ProbabilityField(np.ones((3, 3)), LAT, GRID)
    with pytest.raises(InvalidArgument):
        PriorParams(-1.0)
    f = ProbabilityField.uniform(LAT, GRID)
    f.check()
    with pytest.raises(InvalidArgument):
        f.replace(f.alpha * 2).check()


# -- kernel engine -------------------------------------------------------------

@given(params_st, st.floats(0.02, 0.5))
@settings(max_examples=15, deadline=None)
def test_kernel_keeps_uniform(p, delta):
    u = ProbabilityField.uniform(LAT, GRID)
    assert np.abs(predict_kernel(u, p, delta).alpha - 1 / 18).max() < 1e-14


def test_kernel_near_delta_moves_one_node():
    # 6 jps for 1/6 s is exactly one jump toward neighbour k
    p = PriorParams(1e-3, 1e-3, 1e-3, 1e-3)
    for k in range(6):
        mu = GRID.index(2, k)
        out = predict_kernel(bump(27, mu), p, 1 / 6)
        node = int(np.argmax(out.alpha.max(axis=1)))
        assert node == LAT.neighbor_table[27, k]
        assert int(np.argmax(out.alpha[node])) == mu


@given(weights, params_st)
@settings(max_examples=15, deadline=None)
def test_kernel_output_normalized(w, p):
    out = predict_kernel(ProbabilityField.from_weights(w, LAT, GRID), p, 1 / 6)
    assert out.alpha.min() >= 0
    assert np.abs(out.alpha.sum(axis=1) - 1).max() < 1e-9


def test_velocity_transition_rows_and_uniform():
    T = velocity_transition(GRID, 0.64, 0.16)
    assert np.allclose(T.sum(axis=1), 1)
    dens = np.full(18, 1 / 18)
    assert np.allclose(T @ dens, dens, atol=1e-15)


@given(weights, st.integers(-4, 4), st.integers(-4, 4))
@settings(max_examples=10, deadline=None)
def test_kernel_translation_equivariance_exact(w, dq, dr):
    f = ProbabilityField.from_weights(w, LAT, GRID)
    p = PriorParams()
    a = predict_kernel(f.translated(dq, dr), p, 1 / 6).alpha
    b = predict_kernel(f, p, 1 / 6).translated(dq, dr).alpha
    assert np.array_equal(a, b)


def test_kernel_prediction_does_not_sharpen_a_bump():
    f = bump(27, GRID.index(0, 0))
    s0 = sharpness(f.alpha[27])
    g = predict_kernel(f, PriorParams(), 1 / 6)
    assert sharpness(g.alpha[27]) <= s0


# -- finite-difference engine --------------------------------------------------

def test_pde_keeps_uniform():
    u = ProbabilityField.uniform(LAT, GRID)
    for opts in (PdeOptions(), PdeOptions(speed_boundary="noflux"),
                 PdeOptions(normalization="linear"), PdeOptions(drift_scheme="central")):
        out = predict_pde_step(u, RATES, 1e-3, opts)
        assert np.abs(out.alpha - 1 / 18).max() < 1e-15


@pytest.mark.parametrize("boundary", ["periodic", "noflux"])
def test_velocity_stencil_kills_constants_and_is_monotone(boundary):
    op = PdeOperator(LAT, GRID, RATES, PdeOptions(speed_boundary=boundary))
    assert np.abs(op.velocity_rate(np.ones((64, 18)))).max() < 1e-12
    for c in (op.a_plus, op.a_minus, op.a_theta):
        assert np.all(c >= 0)


def test_drift_and_linear_term_conserve_weighted_mass(rng):
    op = PdeOperator(LAT, GRID, RATES, PdeOptions(normalization="linear"))
    a = rng.random((64, 18))
    rate = op.drift_rate(a) + op.normalization_term(a)
    assert np.abs(rate @ GRID.quad_weights).max() < 1e-12


def test_diffusion_weights_reproduce_covariance():
    e = hex_unit_vectors()
    for th in np.linspace(0, math.pi, 7):
        c, s = math.cos(th), math.sin(th)
        R = np.array([[c, -s], [s, c]])
        S = R @ np.diag([2.0, 0.7]) @ R.T
        w = hex_diffusion_weights(S)
        assert np.allclose(np.einsum("k,ki,kj->ij", w, e, e), S)


def test_drift_weights_first_moment_and_sign():
    e = hex_unit_vectors()
    for ang in np.linspace(0, 2 * math.pi, 13):
        v = 5.0 * np.array([math.cos(ang), math.sin(ang)])
        b = hex_drift_weights(v)
        assert np.all(b >= 0)
        assert np.allclose(b @ e, -v)
        c = hex_drift_weights(v, scheme="central")
        assert np.allclose(c @ e, -v)


@given(weights, st.sampled_from(["periodic", "noflux"]))
@settings(max_examples=10, deadline=None)
def test_pde_positive_and_normalized_at_bound(w, boundary):
    opts = PdeOptions(speed_boundary=boundary)
    f = ProbabilityField.from_weights(w, LAT, GRID)
    dt = stability_max_dt(RATES, LAT, GRID, opts)
    g = f
    for _ in range(5):
        g = predict_pde_step(g, RATES, dt, opts)
    assert g.alpha.min() >= 0
    assert np.abs(g.alpha.sum(axis=1) - 1).max() < 1e-9


@given(weights, st.integers(-4, 4), st.integers(-4, 4))
@settings(max_examples=10, deadline=None)
def test_pde_translation_equivariance_exact(w, dq, dr):
    f = ProbabilityField.from_weights(w, LAT, GRID)
    a = predict_pde_step(f.translated(dq, dr), RATES, 0.01).alpha
    b = predict_pde_step(f, RATES, 0.01).translated(dq, dr).alpha
    assert np.array_equal(a, b)


def test_pde_prediction_does_not_sharpen_a_bump():
    f = bump(27, GRID.index(0, 0))
    prev = sharpness(f.alpha[27])
    for _ in range(5):
        f = predict_pde(f, RATES, 1 / 30, 0.01)
        s = sharpness(f.alpha[27])
        assert s <= prev + 1e-12
        prev = s


def test_central_drift_loses_positivity_at_default_scale():
    opts = PdeOptions(drift_scheme="central")
    f = bump(27, GRID.index(2, 0), floor=1e-12)
    with pytest.raises(StabilityError):
        predict_pde(f, RATES, 1 / 6, 6e-4, opts)


def test_linear_normalization_can_go_negative():
    # the additive flux term is not sign preserving; the per-node rescaling is
    from coherent_motion.harness import ExperimentConfig, run
    cfg = ExperimentConfig(width=16, height=16, n_frames=12, start_y=5.196152422706632)
    with pytest.raises(StabilityError):
        run(cfg.with_overrides(normalization="linear"))
    assert run(cfg).final.alpha.min() >= 0


# -- stability bound ------------------------------------------------------------

def test_default_step_is_accepted():
    lat, grid = build_hex_lattice(32, 32), build_velocity_grid(6, 5)
    assert stability_max_dt(RATES, lat, grid) >= 6e-4


def test_zero_covariance_bound_is_advection_cfl():
    zero = PriorParams(0, 0, 0, 0)
    for grid in (GRID, build_velocity_grid(6, 5)):
        assert stability_max_dt(zero, LAT, grid) == pytest.approx(1.0 / grid.s_max, rel=1e-9)


def test_velocity_component_halves_when_variance_doubles():
    p1 = PriorParams(0.1, 0.1, 1.0, 0.0)
    p2 = PriorParams(0.1, 0.1, math.sqrt(2.0), 0.0)
    r1 = stability_report(p1, LAT, GRID)
    r2 = stability_report(p2, LAT, GRID)
    assert r2.velocity == pytest.approx(r1.velocity / 2, rel=1e-12)


def test_step_above_bound_rejected():
    f = ProbabilityField.uniform(LAT, GRID)
    bound = stability_max_dt(RATES, LAT, GRID)
    with pytest.raises(StabilityError):
        predict_pde_step(f, RATES, 1.01 * bound)
    with pytest.raises(InvalidArgument):
        predict_pde_step(f, RATES, 0.0)


def test_forced_oversized_steps_raise_instead_of_nan():
    f = bump(27, GRID.index(2, 0))
    bound = stability_max_dt(RATES, LAT, GRID)
    with pytest.raises(StabilityError):
        for _ in range(50):
            f = predict_pde_step(f, RATES, 10 * bound, check_dt=False)
