import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coherent_motion.errors import InvalidArgument
from coherent_motion.geometry import build_velocity_grid
from coherent_motion.likelihood import evaluate, tuning_matrix
from coherent_motion.measurement import MeasurementField

GRID = build_velocity_grid(6, 5)


@given(st.floats(0.3, 6), st.floats(0.3, 6))
@settings(max_examples=30, deadline=None)
def test_columns_sum_to_one_and_entries_positive(sl, st_):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        F = tuning_matrix(GRID, sl, st_).F
    assert np.abs(F.sum(axis=0) - 1).max() < 1e-12
    assert np.all(F > 0)


def test_diagonal_is_column_maximum():
    F = tuning_matrix(GRID).F
    assert np.all(np.diag(F) == F.max(axis=0))


def test_two_opposite_channels_closed_form():
    g = build_velocity_grid(2, 1, None, 1.0, 3.0)
    sigma = 2.5
    F = tuning_matrix(g, sigma, sigma).F
    a = 1.0 / (1.0 + math.exp(-((2 * 3.0) ** 2) / (2 * sigma ** 2)))
    assert np.allclose(F, [[a, 1 - a], [1 - a, a]], rtol=0, atol=1e-14)


def test_anisotropy_warning_and_bad_sigma():
    with pytest.warns(UserWarning):
        tuning_matrix(GRID, 1.0, 2.0)
    with pytest.raises(InvalidArgument):
        tuning_matrix(GRID, 0.0, 1.0)


def test_uniform_phi_gives_uniform_likelihood():
    F = tuning_matrix(GRID)
    L = evaluate(MeasurementField.uniform(5, GRID.M), F)
    assert np.abs(L - 1.0 / GRID.M).max() < 1e-15


def test_one_hot_phi_selects_row():
    F = tuning_matrix(GRID)
    phi = np.zeros((1, GRID.M))
    phi[0, 11] = 1.0
    assert np.array_equal(evaluate(phi, F)[0], F.F[11])


@given(arrays(np.float64, (4, 30), elements=st.floats(0.0, 1.0)))
@settings(max_examples=30, deadline=None)
def test_matches_double_loop_and_respects_floor(raw):
    phi = raw + 1e-3
    phi /= phi.sum(axis=1, keepdims=True)
    F = tuning_matrix(GRID)
    L = evaluate(phi, F)
    ref = np.zeros_like(L)
    for x in range(phi.shape[0]):
        for mu in range(GRID.M):
            ref[x, mu] = sum(phi[x, i] * F.F[i, mu] for i in range(GRID.M))
    assert np.abs(L - ref).max() < 1e-12
    assert L.min() >= F.F.min() * (1 - 1e-12)


def test_linear_in_phi(rng):
    F = tuning_matrix(GRID)
    a, b = rng.random((3, 30)), rng.random((3, 30))
    assert np.allclose(evaluate(2 * a + b, F), 2 * evaluate(a, F) + evaluate(b, F), atol=1e-14)


def test_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        evaluate(np.ones((2, 18)) / 18, tuning_matrix(GRID))
