import warnings

import numpy as np
import pytest

from rfde_lyap.certify import (
    KLEnvelope,
    check_theorem_conditions,
    empirical_envelope,
    front_subwindow,
    generate_reachable_states,
    node_norm,
    periodic_reduction_check,
    random_fourier_histories,
)
from rfde_lyap.errors import ConfigurationError
from rfde_lyap.functionals import extinction_functional
from rfde_lyap.history import HistorySegment
from rfde_lyap.signals import make_signal
from rfde_lyap.system import build_sampled_data, extinction_planar_system


def test_random_histories_hit_requested_scale(rng):
    hs = random_fourier_histories(2, 1.0, 0.05, 6, rng, scales=[0.5, 2.0])
    assert len(hs) == 6
    for i, x in enumerate(hs):
        want = 0.5 if i % 2 == 0 else 2.0
        assert node_norm(x) == pytest.approx(want, rel=1e-12)
        assert x.derivs is not None


def test_random_histories_reproducible():
    a = random_fourier_histories(1, 0.4, 0.02, 3, np.random.default_rng(7))
    b = random_fourier_histories(1, 0.4, 0.02, 3, np.random.default_rng(7))
    for xa, xb in zip(a, b):
        assert np.array_equal(xa.samples, xb.samples)


def test_front_subwindow_slices_tail(rng):
    x = random_fourier_histories(1, 1.0, 0.1, 1, rng)[0]
    sub = front_subwindow(x, 0.4)
    assert sub.span == pytest.approx(0.4)
    assert np.array_equal(sub.samples, x.samples[-5:])
    assert np.allclose(sub.front, x.front)
    with pytest.raises(ConfigurationError):
        front_subwindow(x, 2.0)


def test_reachable_states_validated(feedback_system):
    sys_ = feedback_system
    with warnings.catch_warnings():
        warnings.simplefilter("error")  # any discard warning fails the test
        states = generate_reachable_states(
            sys_, t=1.0, tau=0.4, count=6, grid_step=0.02, seed=3
        )
    assert len(states) == 6
    for x in states:
        assert x.span == pytest.approx(0.8)
    with pytest.raises(ConfigurationError):
        generate_reachable_states(sys_, t=0.1, tau=0.4, count=2, grid_step=0.02)


def test_theorem_suite_uniform_reachable_passes(feedback_system, feedback_functional):
    sys_, V = feedback_system, feedback_functional
    rng = np.random.default_rng(11)
    samples = [
        (0.0, x) for x in random_fourier_histories(1, 0.8, 0.02, 12, rng)
    ]
    reach = [
        (1.0, x)
        for x in generate_reachable_states(sys_, 1.0, 0.4, 12, 0.02, seed=5)
    ]
    report = check_theorem_conditions(
        sys_, V, "uniform-reachable", samples, reach
    )
    names = [c["name"] for c in report.checks]
    assert "lower_bound_front" in names
    assert "upper_bound" in names
    assert "growth" in names
    assert "decrease_reachable" in names
    assert report.passed, report.to_json()


def test_theorem_suite_detects_wrong_decay(feedback_system, feedback_functional):
    # demanding a much faster decay than the functional certifies must fail
    sys_, V = feedback_system, feedback_functional
    from dataclasses import replace

    bad = replace(V, rho=lambda s: 50.0 * s)
    reach = [
        (1.0, x)
        for x in generate_reachable_states(sys_, 1.0, 0.4, 12, 0.02, seed=5)
    ]
    report = check_theorem_conditions(sys_, bad, "uniform-reachable", [], reach)
    decrease = [c for c in report.checks if c["name"] == "decrease_reachable"][0]
    assert not decrease["passed"]
    assert decrease["witness"] is not None


def test_theorem_suite_nonuniform_reachable_extinction():
    sys_ = extinction_planar_system()
    V = extinction_functional()
    rng = np.random.default_rng(13)
    samples = [
        (0.5, x) for x in random_fourier_histories(2, 6.0, 0.05, 8, rng)
    ]
    reach = [
        (5.0, x)
        for x in generate_reachable_states(
            sys_, 5.0, 5.0, 8, 0.025, seed=9, scales=[0.4, 0.8]
        )
    ]
    report = check_theorem_conditions(
        sys_, V, "nonuniform-reachable", samples, reach
    )
    assert report.passed, report.to_json()


def test_theorem_form_validated(feedback_system, feedback_functional):
    with pytest.raises(ConfigurationError):
        check_theorem_conditions(
            feedback_system, feedback_functional, "sideways", []
        )


def test_empirical_envelope_and_settle_time(feedback_system):
    env = empirical_envelope(
        feedback_system,
        s_values=[0.5, 1.0],
        t0_values=[0.0],
        horizon=6.0,
        n_histories=3,
        n_signals=3,
        grid_step=0.02,
        seed=2,
    )
    assert env.values.shape == (2, len(env.t_grid))
    # stable system: every row eventually settles below a loose threshold
    for i in range(2):
        ts = env.settle_time(0.45, i)
        assert ts is not None
    # initial value of each row is at most the start scale (window max at t0)
    assert env.values[0, 0] <= 0.5 + 1e-9
    csv = env.to_csv()
    assert csv.splitlines()[0].startswith("s\\t,")


def test_settle_time_none_when_never_settles():
    env = KLEnvelope(
        s_grid=np.array([1.0]),
        t_grid=np.array([0.0, 1.0, 2.0]),
        values=np.array([[1.0, 0.5, 0.7]]),
    )
    assert env.settle_time(0.6, 0) is None
    assert env.settle_time(0.75, 0) == pytest.approx(1.0)


def test_periodic_reduction_sampled_loop():
    sys_ = build_sampled_data(
        f=lambda t, x, u: u, k=lambda t, x, xh: -0.5 * xh, period=1.0
    )
    d = make_signal("constant", sys_.box, value=[0.0])
    x0 = HistorySegment.constant([0.8], 1.0, 1.0 / 64)
    report = periodic_reduction_check(
        sys_, x0, d, n_periods=2, horizon=3.0, grid_step=1.0 / 64
    )
    assert report.passed
    assert report.checks[0]["worst_slack"] <= 1e-12


def test_periodic_reduction_needs_period(feedback_system):
    d = make_signal("constant", feedback_system.box, value=[1.0])
    x0 = HistorySegment.constant([1.0], 0.4, 0.02)
    with pytest.raises(ConfigurationError):
        periodic_reduction_check(feedback_system, x0, d, 1, 1.0, 0.02)
