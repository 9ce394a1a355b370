import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quadmfg import GridError, build_grid, discrete_norm, grid_from_steps, sup_norm
from quadmfg.grid import read_field_csv, steps_for, write_field_csv


def test_builtin_grid_steps():
    g = build_grid(0.5, 50, 50)
    assert g.dt == pytest.approx(0.01, rel=1e-15)
    assert g.dx == pytest.approx(0.02, rel=1e-15)
    assert g.shape == (51, 51)


def test_minimal_grid():
    g = build_grid(1.0, 1, 1)
    np.testing.assert_array_equal(g.times, [0.0, 1.0])
    np.testing.assert_array_equal(g.nodes, [0.0, 1.0])


@pytest.mark.parametrize("I,J", [(0, 5), (5, 0)])
def test_zero_steps_rejected(I, J):
    with pytest.raises(GridError):
        build_grid(1.0, I, J)


def test_reference_grid_from_steps():
    g = grid_from_steps(0.5, 1 / 600, 1 / 300)
    assert (g.n_time_steps, g.n_space_steps) == (300, 300)
    g = grid_from_steps(0.5, 1 / 300, 1 / 300)
    assert (g.n_time_steps, g.n_space_steps) == (150, 300)
    with pytest.raises(GridError, match="whole number"):
        grid_from_steps(0.5, 1 / 25 * 1.001, 0.02)
    with pytest.raises(GridError):
        steps_for(0.5, 0.2)


@settings(max_examples=50)
@given(T=st.floats(0.01, 10), I=st.integers(1, 500), J=st.integers(1, 500))
def test_grid_invariants(T, I, J):
    g = build_grid(T, I, J)
    assert abs(g.dt * I - T) <= 1e-12 * T
    assert abs(g.dx * J - 1.0) <= 1e-12
    assert np.all(np.diff(g.times) > 0) and np.all(np.diff(g.nodes) > 0)
    np.testing.assert_allclose(np.diff(g.times), g.dt, rtol=1e-9)


def test_discrete_norm_examples():
    assert discrete_norm(np.ones((4, 5))) == 1.0
    f = np.zeros((4, 3))
    f[2] = 3.0
    assert discrete_norm(f) == 3.0
    assert discrete_norm(np.array([[1.0, 2.0], [3.0, 4.0]])) == pytest.approx(np.sqrt(12.5), rel=1e-15)


def test_sup_norm_examples():
    assert sup_norm(np.ones((2, 2))) == 1.0
    assert sup_norm(np.array([[1.0, -5.0], [2.0, 0.0]])) == 5.0
    with pytest.raises(GridError):
        sup_norm(np.zeros((0, 3)))


fields = arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(-1e6, 1e6))


@settings(max_examples=80)
@given(f=fields, c=st.floats(-1e3, 1e3))
def test_norm_properties(f, c):
    assert discrete_norm(c * f) == pytest.approx(abs(c) * discrete_norm(f), rel=1e-12, abs=1e-300)
    assert discrete_norm(f) <= sup_norm(f) * (1 + 1e-15)


def test_field_csv_round_trip_is_bit_identical(tmp_path):
    g = build_grid(0.5, 7, 9)
    rng = np.random.default_rng(1)
    f = rng.normal(size=g.shape) * 10.0 ** rng.integers(-12, 12, size=g.shape)
    write_field_csv(tmp_path / "f.csv", g, f)
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header.startswith("t\\x,")
    t, x, v = read_field_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(v, f)
    np.testing.assert_array_equal(t, g.times)
    np.testing.assert_array_equal(x, g.nodes)


def test_check_rejects_wrong_shape():
    g = build_grid(1.0, 3, 3)
    with pytest.raises(GridError):
        g.check(np.zeros((3, 4)))
