import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfde_lyap.history import HistorySegment


def cubic_segment(span=1.0, g=0.125):
    # x(theta) = theta^3 - theta, cubic so Hermite dense output is exact
    f = lambda t: np.array([t**3 - t])
    df = lambda t: np.array([3 * t * t - 1])
    return HistorySegment.from_function(f, span, g, df), f, df


def test_node_values_exact():
    x, f, _ = cubic_segment()
    for theta in x.thetas:
        assert x.value(theta)[0] == pytest.approx(f(theta)[0], abs=1e-14)


def test_hermite_reproduces_cubics():
    x, f, df = cubic_segment()
    for theta in np.linspace(-1.0, 0.0, 41):
        assert x.value(theta)[0] == pytest.approx(f(theta)[0], abs=1e-12)
        assert x.derivative(theta)[0] == pytest.approx(df(theta)[0], abs=1e-10)


def test_linear_fallback_without_derivs():
    samples = np.array([[0.0], [1.0], [2.0]])
    x = HistorySegment(1.0, 0.5, samples)
    assert x.value(-0.75)[0] == pytest.approx(0.5)
    assert x.value(-0.25)[0] == pytest.approx(1.5)


def test_constructor_validation():
    with pytest.raises(ValueError):
        HistorySegment(1.0, 0.3, np.zeros((3, 1)))  # 0.3 does not divide 1.0
    with pytest.raises(ValueError):
        HistorySegment(1.0, 0.5, np.zeros((4, 1)))  # wrong sample count
    with pytest.raises(ValueError):
        HistorySegment(1.0, 0.5, np.full((3, 1), np.nan))
    with pytest.raises(ValueError):
        # derivs_end needs derivs
        HistorySegment(1.0, 0.5, np.zeros((3, 1)), None, np.zeros((2, 1)))


def test_immutability():
    x = HistorySegment.constant([1.0], 1.0, 0.25)
    with pytest.raises(ValueError):
        x.samples[0, 0] = 2.0


def test_sup_norm_interior_maximum():
    # flat node values with a derivative bump: the max is inside a cell
    samples = np.zeros((3, 1))
    derivs = np.array([[1.0], [-1.0], [0.0]])
    x = HistorySegment(1.0, 0.5, samples, derivs)
    assert x.sup_norm() > 0.0
    assert x.sup_norm() >= np.max(np.abs(samples))


def test_sup_norm_on_cubic():
    x, f, _ = cubic_segment()
    dense = max(abs(f(t)[0]) for t in np.linspace(-1, 0, 2001))
    assert x.sup_norm() == pytest.approx(dense, rel=1e-6)


def test_splice_front_ray_shifts_and_appends():
    x, f, _ = cubic_segment(span=1.0, g=0.125)
    v = np.array([2.0])
    h = 0.25
    y = x.splice_front_ray(v, h)
    # back portion is the old window advanced by h
    for theta in (-1.0, -0.75, -0.5):
        assert y.value(theta)[0] == pytest.approx(f(theta + h)[0], abs=1e-12)
    # front portion is the ray x(0) + (theta + h) v
    for theta in (-0.125, 0.0):
        assert y.value(theta)[0] == pytest.approx(f(0.0)[0] + (theta + h) * 2.0)


def test_splice_front_ray_with_cell_end_derivs():
    g = 0.25
    samples = np.array([[0.0], [1.0], [0.5], [0.25]])
    derivs = np.array([[4.0], [-2.0], [-1.0], [0.0]])
    ends = np.array([[4.0], [-2.0], [-1.0]])
    x = HistorySegment(0.75, g, samples, derivs, ends)
    y = x.splice_front_ray(np.array([3.0]), g)
    assert y.derivs_end is not None
    # ray cell carries the ray slope on both ends
    assert y.derivs[-1][0] == 3.0
    assert y.derivs_end[-1][0] == 3.0
    # the cell left of the ray keeps its one-sided end derivative
    assert y.derivs_end[-2][0] == ends[-1][0]


def test_modulus_of_continuity_constant_is_zero():
    x = HistorySegment.constant([3.0, -1.0], 2.0, 0.5)
    assert x.modulus_of_continuity(0.3) == 0.0


def test_csv_roundtrip():
    x, _, _ = cubic_segment()
    y = HistorySegment.from_csv(x.to_csv())
    assert y.span == pytest.approx(x.span)
    assert np.allclose(y.samples, x.samples)
    assert np.allclose(y.derivs, x.derivs)


def test_zero_span_degenerates_to_point():
    x = HistorySegment(0.0, 1.0, np.array([[2.0, 3.0]]))
    assert np.allclose(x.front, [2.0, 3.0])
    assert np.allclose(x.value(0.0), [2.0, 3.0])
    assert x.sup_norm() == pytest.approx(np.hypot(2.0, 3.0))


@given(
    vals=st.lists(st.floats(-10, 10), min_size=5, max_size=5),
    theta=st.floats(-1.0, 0.0),
)
@settings(max_examples=60, deadline=None)
def test_linear_interpolant_within_node_range(vals, theta):
    x = HistorySegment(1.0, 0.25, np.asarray(vals)[:, None])
    v = x.value(theta)[0]
    assert min(vals) - 1e-9 <= v <= max(vals) + 1e-9


@given(h=st.floats(0.0, 0.9))
@settings(max_examples=40, deadline=None)
def test_modulus_of_continuity_nonnegative_and_bounded(h):
    t = np.linspace(-1, 0, 9)
    x = HistorySegment(1.0, 0.125, np.sin(3 * t)[:, None])
    m = x.modulus_of_continuity(h)
    assert m >= 0.0
    assert m <= 4.0 * 1.0 + 1e-9  # <= 2 * diameter
