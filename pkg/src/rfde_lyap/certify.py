"""Empirical stability certification.

Everything in this module is sampling-based falsification: a "pass" means no
violation was found over the stated sample (batch sizes and seeds are
recorded in reports), never a proof.  The pieces are

* ``random_fourier_histories`` - seeded smooth random initial windows,
* ``empirical_envelope`` - max window norm over a simulation batch as a
  function of (initial size, elapsed time), the numerical stand-in for a
  KL decay estimate,
* ``generate_reachable_states`` - long windows obtained by actually running
  the system, the only states on which reachable-set-restricted decrease
  inequalities may be checked (each is validated against the integral
  equation residual),
* ``check_theorem_conditions`` - the Lyapunov inequality suites in four
  forms (uniform/non-uniform x global/reachable),
* ``periodic_reduction_check`` - time-shift invariance of trajectories for
  periodic systems.

Inequality slack tolerance is relative: lhs <= rhs + tol*(1 + |lhs| + |rhs|).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .functionals import Functional, evaluate
from .history import HistorySegment
from .integrator import Trajectory, integrate
from .signals import DisturbanceSignal, make_signal, random_piecewise_signals
from .system import RfdeSystem, eval_rhs
from . import dini

THEOREM_FORMS = (
    "uniform-global",
    "uniform-reachable",
    "nonuniform-global",
    "nonuniform-reachable",
)

DEFAULT_SLACK_TOL = 1e-3
RESIDUAL_TOL = 1e-6


def node_norm(x: HistorySegment) -> float:
    """Node-sampled window norm (the convention used in all certification)."""
    return float(np.max(np.linalg.norm(x.samples, axis=1)))


@dataclass
class CertReport:
    """Aggregated check outcomes with replayable failure witnesses."""

    name: str
    checks: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def add(
        self,
        check_name: str,
        passed: bool,
        worst_slack: float,
        tolerance: float,
        witness: Optional[dict] = None,
        details: Optional[dict] = None,
    ) -> None:
        self.checks.append(
            {
                "name": check_name,
                "passed": bool(passed),
                "worst_slack": float(worst_slack),
                "tolerance": float(tolerance),
                "witness": witness,
                "details": details or {},
            }
        )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "checks": self.checks,
            "metadata": self.metadata,
        }


# ---------------------------------------------------------------------------
# random histories and batches
# ---------------------------------------------------------------------------


def random_fourier_histories(
    n_dim: int,
    span: float,
    grid_step: float,
    count: int,
    rng: np.random.Generator,
    scales: Optional[Sequence[float]] = None,
    n_modes: int = 3,
) -> list[HistorySegment]:
    """Smooth random windows: truncated Fourier series with bounded
    coefficients, rescaled so the node-sampled norm hits the target scale."""
    out = []
    n_nodes = int(round(span / grid_step)) + 1 if span > 0 else 1
    thetas = -span + grid_step * np.arange(n_nodes) if span > 0 else np.zeros(1)
    for i in range(count):
        scale = scales[i % len(scales)] if scales is not None else rng.uniform(0.2, 1.5)
        samples = np.zeros((len(thetas), n_dim))
        derivs = np.zeros_like(samples)
        for k in range(n_modes + 1):
            w = k * np.pi / span if span > 0 else 0.0
            a = rng.uniform(-1, 1, n_dim)
            b = rng.uniform(-1, 1, n_dim)
            samples += np.outer(np.cos(w * thetas), a) + np.outer(
                np.sin(w * thetas), b
            )
            derivs += np.outer(-w * np.sin(w * thetas), a) + np.outer(
                w * np.cos(w * thetas), b
            )
        norm = np.max(np.linalg.norm(samples, axis=1))
        if norm == 0:
            samples[:, 0] = 1.0
            derivs[:, 0] = 0.0
            norm = 1.0
        factor = scale / norm
        out.append(HistorySegment(span, grid_step, samples * factor, derivs * factor))
    return out


def batch_signals(
    sys: RfdeSystem,
    count: int,
    horizon: float,
    grid_step: float,
    rng: np.random.Generator,
) -> list[DisturbanceSignal]:
    """Vertex constants first, then seeded random piecewise-constant signals."""
    vertices = [make_signal("constant", sys.box, value=v) for v in sys.box.vertices()]
    if count <= len(vertices):
        return vertices[:count]
    extra = random_piecewise_signals(
        sys.box, count - len(vertices), horizon, grid_step, rng
    )
    return vertices + extra


def rebase_signal(d: DisturbanceSignal, t0: float) -> DisturbanceSignal:
    """Move a time-origin-0 signal so its switching starts at absolute t0."""
    if t0 <= 0:
        return d
    head = make_signal("constant", d.box, value=d.box.clip(d.value(0.0)))
    return head.concat(t0, d)


# ---------------------------------------------------------------------------
# decay envelope
# ---------------------------------------------------------------------------


@dataclass
class KLEnvelope:
    """Empirical decay surface m(s, t) = max window norm over a batch."""

    s_grid: np.ndarray
    t_grid: np.ndarray           # elapsed time since t0
    values: np.ndarray           # shape (len(s_grid), len(t_grid))
    metadata: dict = field(default_factory=dict)

    def settle_time(self, eps: float, s_index: int) -> Optional[float]:
        """First grid time after which the row stays <= eps, None if never."""
        row = self.values[s_index]
        ok = row <= eps
        for j in range(len(row)):
            if ok[j:].all():
                return float(self.t_grid[j])
        return None

    def to_csv(self) -> str:
        lines = ["s\\t," + ",".join(repr(float(t)) for t in self.t_grid)]
        for i, s in enumerate(self.s_grid):
            lines.append(
                repr(float(s)) + "," + ",".join(repr(float(v)) for v in self.values[i])
            )
        return "\n".join(lines) + "\n"


def empirical_envelope(
    sys: RfdeSystem,
    s_values: Sequence[float],
    t0_values: Sequence[float],
    horizon: float,
    n_histories: int,
    n_signals: int,
    grid_step: float,
    seed: int = 0,
) -> KLEnvelope:
    """Batch-max window norms on a (s, elapsed-time) grid, max over t0."""
    t_grid = None
    values = np.zeros((len(s_values), 0))
    blow_ups = []
    for i, s in enumerate(s_values):
        rng = np.random.default_rng([seed, i])
        histories = random_fourier_histories(
            sys.state_dim,
            sys.delay_span,
            grid_step,
            n_histories,
            rng,
            scales=[s],
        )
        for t0 in t0_values:
            signals = batch_signals(sys, n_signals, horizon, grid_step, rng)
            for x0 in histories:
                for d in signals:
                    traj = integrate(
                        sys, t0, x0, rebase_signal(d, t0), t0 + horizon, grid_step
                    )
                    if traj.status != "completed":
                        blow_ups.append(
                            {"s": float(s), "t0": float(t0), "t": traj.t_blow_estimate}
                        )
                        continue
                    times, sups = traj.window_sup_norms()
                    if t_grid is None:
                        t_grid = times - t0
                        values = np.zeros((len(s_values), len(t_grid)))
                    values[i] = np.maximum(values[i], sups)
    if t_grid is None:
        raise ConfigurationError("no completed trajectories in envelope batch")
    return KLEnvelope(
        s_grid=np.asarray(s_values, dtype=float),
        t_grid=t_grid,
        values=values,
        metadata={
            "seed": seed,
            "t0_values": [float(t) for t in t0_values],
            "n_histories": n_histories,
            "n_signals": n_signals,
            "grid_step": grid_step,
            "blow_ups": blow_ups,
        },
    )


# ---------------------------------------------------------------------------
# reachable long windows
# ---------------------------------------------------------------------------


def generate_reachable_states(
    sys: RfdeSystem,
    t: float,
    tau: float,
    count: int,
    grid_step: float,
    seed: int = 0,
    scales: Optional[Sequence[float]] = None,
) -> list[HistorySegment]:
    """Windows of span delay+tau at time t, reached by running the system
    from random initial windows at t - tau.  Each candidate is validated
    against the stored integral-equation residual; blow-ups and bad
    residuals are discarded with a warning."""
    if t < tau:
        raise ConfigurationError("need t >= tau so the start time is non-negative")
    rng = np.random.default_rng([seed, int(round(t * 1000)) % (2**31)])
    histories = random_fourier_histories(
        sys.state_dim, sys.delay_span, grid_step, count, rng, scales=scales
    )
    signals = batch_signals(sys, max(count, 4), tau, grid_step, rng)
    out = []
    for i, x0 in enumerate(histories):
        d = rebase_signal(signals[i % len(signals)], t - tau)
        traj = integrate(sys, t - tau, x0, d, t, grid_step)
        if traj.status != "completed":
            warnings.warn(f"reachable-state sample {i} blew up; discarded")
            continue
        residual = traj.integral_residual()
        if residual > RESIDUAL_TOL:
            warnings.warn(
                f"reachable-state sample {i} residual {residual:.2e}; discarded"
            )
            continue
        out.append(traj.window_at(t, sys.delay_span + tau))
    return out


# ---------------------------------------------------------------------------
# theorem-condition suites
# ---------------------------------------------------------------------------


def front_subwindow(x: HistorySegment, span: float) -> HistorySegment:
    """The trailing sub-window of the given span (the short-delay state)."""
    if span > x.span + 1e-12:
        raise ConfigurationError("sub-window span exceeds window span")
    m = int(round(span / x.grid_step)) if span > 0 else 0
    sl = slice(len(x.samples) - m - 1, None)
    ends = None
    if x.derivs_end is not None and m > 0:
        ends = x.derivs_end[len(x.derivs_end) - m :]
    return HistorySegment(
        span,
        x.grid_step,
        x.samples[sl],
        None if x.derivs is None else x.derivs[sl],
        ends,
    )


def check_theorem_conditions(
    sys: RfdeSystem,
    V: Functional,
    form: str,
    samples: Sequence[tuple[float, HistorySegment]],
    reachable_samples: Sequence[tuple[float, HistorySegment]] = (),
    tol: float = DEFAULT_SLACK_TOL,
    use_closed_form: bool = True,
) -> CertReport:
    """Lyapunov inequality suite for the chosen theorem form.

    ``samples`` are (t, window) pairs for the unrestricted inequalities;
    ``reachable_samples`` (from generate_reachable_states) for the
    reachable-set-restricted decrease.  Directional derivatives use the
    functional's closed form when available, the numerical estimator
    otherwise.
    """
    if form not in THEOREM_FORMS:
        raise ConfigurationError(f"unknown theorem form {form!r}")
    report = CertReport(
        name=f"{form} conditions for {V.name} on {sys.name}",
        metadata={"form": form, "tolerance": tol, "n_samples": len(samples),
                  "n_reachable": len(reachable_samples)},
    )
    uniform = form.startswith("uniform")
    reachable = form.endswith("reachable")
    vertices = sys.box.vertices()

    def band(lhs, rhs):
        return tol * (1 + abs(lhs) + abs(rhs))

    def run_inequality(name, pairs, lhs_fn, rhs_fn, with_d=False):
        worst_excess = -np.inf
        worst_slack, w_tol = 0.0, tol
        witness = None
        for idx, (t, x) in enumerate(pairs):
            d_list = vertices if with_d else [None]
            for d in d_list:
                lhs = lhs_fn(t, x, d)
                rhs = rhs_fn(t, x, d)
                slack = lhs - rhs
                b = band(lhs, rhs)
                if slack - b > worst_excess:
                    worst_excess = slack - b
                    worst_slack, w_tol = slack, b
                    if slack > b:
                        witness = {
                            "t": float(t),
                            "sample_index": idx,
                            "d": None if d is None else [float(v) for v in d],
                            "lhs": float(lhs),
                            "rhs": float(rhs),
                        }
        report.add(name, witness is None, worst_slack, w_tol, witness)

    def v_of(t, x):
        return evaluate(V, t, x)

    def v0_of(t, x, d):
        sub = front_subwindow(x, sys.delay_span)
        v = eval_rhs(sys, t, sub, d)
        if V.directional is not None and use_closed_form:
            return float(V.directional(t, x, v))
        return dini.estimate_directional(V, t, x, v).richardson

    # sandwich bounds
    if V.a1 is None or V.a2 is None:
        raise ConfigurationError("theorem suites need declared a1/a2 bounds")
    if reachable:
        run_inequality(
            "lower_bound_front", samples,
            lambda t, x, d: V.a1(float(np.linalg.norm(x.front))),
            lambda t, x, d: v_of(t, x),
        )
    else:
        run_inequality(
            "lower_bound_window", samples,
            lambda t, x, d: V.a1(node_norm(x)),
            lambda t, x, d: v_of(t, x),
        )
    if uniform:
        run_inequality(
            "upper_bound", samples,
            lambda t, x, d: v_of(t, x),
            lambda t, x, d: V.a2(node_norm(x)),
        )
    else:
        if V.beta1 is None:
            raise ConfigurationError("non-uniform forms need the beta1 weight")
        run_inequality(
            "upper_bound_weighted", samples,
            lambda t, x, d: v_of(t, x),
            lambda t, x, d: V.a2(V.beta1(t) * node_norm(x)),
        )

    # growth inequality (everywhere)
    if reachable:
        if uniform:
            if V.beta is None:
                raise ConfigurationError("uniform-reachable needs growth constant beta")
            run_inequality(
                "growth", samples, v0_of,
                lambda t, x, d: V.beta * v_of(t, x),
                with_d=True,
            )
        else:
            if V.beta2 is None or V.beta3 is None:
                raise ConfigurationError(
                    "nonuniform-reachable needs beta2/beta3 weights"
                )
            run_inequality(
                "growth_weighted", samples, v0_of,
                lambda t, x, d: V.beta2(t) * v_of(t, x) + V.R_const * V.beta3(t),
                with_d=True,
            )

    # decrease inequality
    if reachable:
        if V.rho is None:
            raise ConfigurationError("reachable forms need the decay function rho")
        if uniform:
            run_inequality(
                "decrease_reachable", reachable_samples, v0_of,
                lambda t, x, d: -V.rho(v_of(t, x)),
                with_d=True,
            )
        else:
            if V.beta4 is None:
                raise ConfigurationError("nonuniform-reachable needs beta4")
            mu = V.mu or (lambda t: 0.0)
            run_inequality(
                "decrease_reachable_weighted", reachable_samples, v0_of,
                lambda t, x, d: -V.beta4(t) * V.rho(v_of(t, x)) + V.beta4(t) * mu(t),
                with_d=True,
            )
    else:
        run_inequality(
            "decrease_global", samples, v0_of,
            lambda t, x, d: -v_of(t, x),
            with_d=True,
        )

    # Lipschitz estimate when a modulus is declared
    if V.lipschitz_modulus is not None and len(samples) >= 2:
        worst = -np.inf
        witness = None
        passed = True
        w_tol = tol
        for (t1, x1), (t2, x2) in zip(samples[:-1], samples[1:]):
            if abs(x1.span - x2.span) > 1e-12 or abs(t1 - t2) > 1e-12:
                continue
            R = max(node_norm(x1), node_norm(x2))
            gap = node_norm(
                HistorySegment(x1.span, x1.grid_step, x1.samples - x2.samples)
            )
            lhs = abs(v_of(t1, x1) - v_of(t1, x2))
            rhs = V.lipschitz_modulus(R) * gap
            slack = lhs - rhs
            b = band(lhs, rhs)
            if slack > worst:
                worst, w_tol = slack, b
            if slack > b and passed:
                passed = False
                witness = {"t": float(t1), "lhs": float(lhs), "rhs": float(rhs)}
        if np.isfinite(worst):
            report.add("lipschitz_estimate", passed, worst, w_tol, witness)

    return report


# ---------------------------------------------------------------------------
# periodic reduction
# ---------------------------------------------------------------------------


def periodic_reduction_check(
    sys: RfdeSystem,
    x0: HistorySegment,
    d_base: DisturbanceSignal,
    n_periods: int,
    horizon: float,
    grid_step: float,
    tol: float = 1e-12,
) -> CertReport:
    """Trajectory from t0 = k*period equals the time-shifted trajectory from
    0 under the shifted disturbance, node by node."""
    if sys.period is None:
        raise ConfigurationError("system declares no period")
    t0 = n_periods * sys.period
    k = t0 / grid_step
    if abs(k - round(k)) > 1e-9:
        raise ConfigurationError("t0 must be grid-aligned")
    traj_shifted = integrate(
        sys, t0, x0, rebase_signal(d_base, t0), t0 + horizon, grid_step
    )
    traj_base = integrate(sys, 0.0, x0, d_base, horizon, grid_step)
    m = min(len(traj_base.times), len(traj_shifted.times))
    gap = float(np.max(np.abs(traj_base.states[:m] - traj_shifted.states[:m])))
    report = CertReport(
        name=f"periodic reduction for {sys.name}",
        metadata={"t0": float(t0), "period": float(sys.period),
                  "grid_step": float(grid_step)},
    )
    report.add("shift_identity", gap <= tol, gap, tol)
    return report
