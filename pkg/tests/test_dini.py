import numpy as np
import pytest

from rfde_lyap.dini import DiniEstimate, derivative_along, estimate_directional
from rfde_lyap.errors import ModelError
from rfde_lyap.functionals import extinction_functional
from rfde_lyap.history import HistorySegment
from rfde_lyap.integrator import integrate
from rfde_lyap.signals import make_signal
from rfde_lyap.system import eval_rhs


def smooth_window(rng, span, g, dim=1, scale=1.0):
    a = scale * rng.normal(size=(3, dim))
    f = lambda t: a[0] + a[1] * np.sin(2 * t) + a[2] * np.cos(3 * t)
    df = lambda t: 2 * a[1] * np.cos(2 * t) - 3 * a[2] * np.sin(3 * t)
    return HistorySegment.from_function(f, span, g, df)


def test_directional_matches_closed_form_feedback(feedback_functional, rng):
    V = feedback_functional
    for _ in range(25):
        x = smooth_window(rng, V.window_span, 0.02)
        v = rng.normal(size=1)
        est = estimate_directional(V, 0.7, x, v)
        exact = V.directional(0.7, x, v)
        assert est.richardson == pytest.approx(exact, rel=1e-3, abs=1e-6)


def test_directional_matches_closed_form_extinction(rng):
    V = extinction_functional()
    for _ in range(10):
        x = smooth_window(rng, V.window_span, 0.05, dim=2)
        v = rng.normal(size=2)
        est = estimate_directional(V, 0.3, x, v)
        exact = V.directional(0.3, x, v)
        assert est.richardson == pytest.approx(exact, rel=1e-3, abs=1e-3)


def test_derivative_along_matches_directional(feedback_system, feedback_functional, rng):
    sys_, V = feedback_system, feedback_functional
    d = make_signal("constant", sys_.box, value=[1.05])
    x0 = smooth_window(rng, sys_.delay_span, 0.02)
    traj = integrate(sys_, 0.0, x0, d, 4.0, grid_step=0.02)
    for t in (1.0, 2.0, 3.0):
        w = traj.window_at(t, V.window_span, extend=True)
        v = eval_rhs(sys_, t, traj.window_at(t), d.value(t))
        est = derivative_along(V, traj, t)
        exact = V.directional(t, w, v)
        assert est.richardson == pytest.approx(exact, rel=1e-3, abs=1e-6)


def test_derivative_along_rejects_end_of_domain(feedback_system, feedback_functional, rng):
    sys_, V = feedback_system, feedback_functional
    d = make_signal("constant", sys_.box, value=[1.0])
    x0 = smooth_window(rng, sys_.delay_span, 0.02)
    traj = integrate(sys_, 0.0, x0, d, 2.0, grid_step=0.02)
    with pytest.raises(ValueError):
        derivative_along(V, traj, traj.t_end)


def test_from_quotients_fields():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    q = np.array([1.0, 0.6, 0.4, 0.3])
    est = DiniEstimate.from_quotients(h, q)
    assert est.value == pytest.approx(0.6)          # max of last three
    assert est.richardson == pytest.approx(2 * 0.3 - 0.4)
    with pytest.raises(ModelError):
        DiniEstimate.from_quotients(h, [1.0, np.nan, 0.4, 0.3])


def test_quotients_converge_monotonically_in_h(feedback_functional, rng):
    # the quotient error should shrink as h shrinks (first-order envelope)
    V = feedback_functional
    x = smooth_window(rng, V.window_span, 0.02)
    v = np.array([0.5])
    est = estimate_directional(V, 0.0, x, v)
    exact = V.directional(0.0, x, v)
    errs = np.abs(est.quotients - exact)
    assert errs[-1] <= errs[0] + 1e-12
