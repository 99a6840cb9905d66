"""Delay-system right-hand sides, built-in examples and validation probes.

A system is dx/dt = f(t, x_window, d(t)) where x_window is the state history
over the last ``delay_span`` time units and d is a disturbance taking values
in a box.  The right-hand side must vanish on the zero history (the origin is
an equilibrium for every disturbance).

The probes at the bottom are falsification tests, not proofs: they sample
the analytic hypotheses (equilibrium, periodicity, one-sided Lipschitz
bound, local smallness) and report violations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ModelError
from .history import HistorySegment
from .signals import DisturbanceBox


@dataclass(frozen=True)
class RfdeSystem:
    """Right-hand side bundle for a retarded functional differential equation.

    ``rhs(t, window, d)`` may read the window only through ``value(theta)``
    for theta in [-delay_span, 0] and must be pure.
    """

    delay_span: float
    state_dim: int
    box: DisturbanceBox
    rhs: Callable
    discontinuity_times: tuple = ()
    discontinuity_spacing: Optional[float] = None  # lattice {k*spacing}
    lipschitz_modulus: Optional[Callable[[float, float], float]] = None
    growth_zeta: Optional[Callable[[float], float]] = None
    growth_gamma: Optional[Callable[[float], float]] = None
    period: Optional[float] = None
    name: str = "custom"
    # When True, rhs takes a fourth argument side in {"right", "left"} and
    # returns the matching one-sided limit at its own declared
    # discontinuity times.  The integrator queries the left limit at the
    # end stage of each step so a step never straddles a switch.
    side_aware: bool = False

    def discontinuities_in(self, t_start: float, t_end: float) -> np.ndarray:
        """All declared rhs discontinuity times inside (t_start, t_end)."""
        times = [t for t in self.discontinuity_times if t_start < t < t_end]
        if self.discontinuity_spacing:
            step = self.discontinuity_spacing
            k0 = math.floor(t_start / step) + 1
            k1 = math.ceil(t_end / step)
            times.extend(
                k * step for k in range(k0, k1) if t_start < k * step < t_end
            )
        return np.unique(np.asarray(times, dtype=float))


def eval_rhs(sys: RfdeSystem, t: float, x, d, side: str = "right") -> np.ndarray:
    """Validated right-hand-side evaluation."""
    if isinstance(x, HistorySegment) and abs(x.span - sys.delay_span) > 1e-9:
        raise ModelError(
            f"window span {x.span} does not match system delay span {sys.delay_span}"
        )
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if not sys.box.contains(d):
        raise ModelError(f"disturbance {d} outside box")
    raw = sys.rhs(t, x, d, side) if sys.side_aware else sys.rhs(t, x, d)
    out = np.atleast_1d(np.asarray(raw, dtype=float))
    if out.shape != (sys.state_dim,):
        raise ModelError(f"rhs returned shape {out.shape}, expected ({sys.state_dim},)")
    if not np.all(np.isfinite(out)):
        raise ModelError(f"rhs returned non-finite values at t={t}")
    return out


# ---------------------------------------------------------------------------
# built-in systems
# ---------------------------------------------------------------------------


def uncertain_delay_feedback(a: float, b: float, r: float) -> RfdeSystem:
    """Scalar dx/dt = -d(t) x(t - r) with gain d(t) in [a, b].

    Stable for 2 b^3 r^2 < a; the one-sided Lipschitz modulus is the
    constant b and |rhs| <= b * sup|x|.
    """
    if a <= 0 or b < a:
        raise ConfigurationError("need b >= a > 0")
    if r < 0:
        raise ConfigurationError("delay must be non-negative")
    box = DisturbanceBox(np.array([a]), np.array([b]))

    def rhs(t, x, d):
        return np.array([-d[0] * x.value(-r)[0]])

    return RfdeSystem(
        delay_span=r,
        state_dim=1,
        box=box,
        rhs=rhs,
        lipschitz_modulus=lambda t, s: b,
        growth_zeta=lambda s: s,
        growth_gamma=lambda t: b,
        name="uncertain_delay_feedback",
    )


def _onoff_gain(t: float) -> float:
    """2 sin^2(pi t) on [2k, 2k+1], 0 on (2k-1, 2k); continuous."""
    if math.floor(t) % 2 == 0:
        return 2.0 * math.sin(math.pi * t) ** 2
    return 0.0


def extinction_planar_system() -> RfdeSystem:
    """Planar system whose first component dies out in finite time.

    dx/dt = -a(t) x(t - 1) with an on/off gain a(t), and
    dy/dt = -y + d exp(t) x^2 with |d| <= 1.  Every solution has x(t) = 0
    once four time units have elapsed.
    """
    box = DisturbanceBox(np.array([-1.0]), np.array([1.0]))

    def rhs(t, x, d):
        xv = x.value(0.0)
        x_del = x.value(-1.0)[0]
        return np.array(
            [
                -_onoff_gain(t) * x_del,
                -xv[1] + d[0] * math.exp(t) * xv[0] ** 2,
            ]
        )

    return RfdeSystem(
        delay_span=1.0,
        state_dim=2,
        box=box,
        rhs=rhs,
        name="extinction_planar",
    )


def linear_decay_system(rate: float = 1.0) -> RfdeSystem:
    """Delay-free scalar dx/dt = -rate * x, used as a closed-form oracle."""
    box = DisturbanceBox(np.array([0.0]), np.array([0.0]))

    def rhs(t, x, d):
        return np.array([-rate * x.value(0.0)[0]])

    return RfdeSystem(
        delay_span=0.0,
        state_dim=1,
        box=box,
        rhs=rhs,
        lipschitz_modulus=lambda t, s: rate,
        growth_zeta=lambda s: s,
        growth_gamma=lambda t: rate,
        period=None,
        name="linear_decay",
    )


def build_sampled_data(
    f: Callable,
    k: Callable,
    period: float,
    state_dim: int = 1,
    time_invariant: bool = True,
) -> RfdeSystem:
    """Closed loop of dx/dt = f(t, x, u) under zero-order-hold feedback
    u = k(t, x(t), x(t_i)) refreshed on the uniform partition t_i = i*period.

    The delayed argument is x at floor(t/period)*period, i.e. window offset
    floor(t/period)*period - t in (-period, 0].
    """
    if period <= 0:
        raise ConfigurationError("sampling period must be positive")
    box = DisturbanceBox(np.array([0.0]), np.array([0.0]))

    def rhs(t, x, d, side="right"):
        idx = math.floor(t / period + 1e-12)
        if side == "left" and abs(t - idx * period) <= 1e-12 * max(1.0, abs(t)):
            idx -= 1  # hold refresh has not happened yet from the left
        held = min(max(idx * period - t, -period), 0.0)
        xv = x.value(0.0)
        x_held = x.value(held)
        u = k(t, xv, x_held)
        return np.atleast_1d(np.asarray(f(t, xv, u), dtype=float))

    return RfdeSystem(
        delay_span=period,
        state_dim=state_dim,
        box=box,
        rhs=rhs,
        discontinuity_spacing=period,
        period=period if time_invariant else None,
        name="sampled_data",
        side_aware=True,
    )


# ---------------------------------------------------------------------------
# expression-form user systems (JSON registry)
# ---------------------------------------------------------------------------

_NONLINEARITIES = {
    "identity": lambda s: s,
    "square": lambda s: s * s,
    "cube": lambda s: s**3,
}

_TIME_FACTORS = {
    "one": lambda t: 1.0,
    "exp_t": math.exp,
    "sin2pi": lambda t: math.sin(2 * math.pi * t),
}


def system_from_terms(
    delay_span: float,
    state_dim: int,
    box: DisturbanceBox,
    terms: Sequence[dict],
    name: str = "custom",
) -> RfdeSystem:
    """Affine-in-delayed-values system assembled from term dictionaries.

    Each term contributes coeff * [d_k] * time_factor(t) * nonlin(x_j(-delay))
    to component ``target``; see the README for the schema.
    """
    compiled = []
    for term in terms:
        target = int(term["target"])
        if not 0 <= target < state_dim:
            raise ConfigurationError(f"term target {target} out of range")
        delay = float(term.get("delay", 0.0))
        if not 0 <= delay <= delay_span + 1e-12:
            raise ConfigurationError(f"term delay {delay} outside [0, {delay_span}]")
        nonlin = _NONLINEARITIES.get(term.get("nonlinearity", "identity"))
        if nonlin is None:
            raise ConfigurationError(f"unknown nonlinearity {term['nonlinearity']!r}")
        tfac = _TIME_FACTORS.get(term.get("time_factor", "one"))
        if tfac is None:
            raise ConfigurationError(f"unknown time_factor {term['time_factor']!r}")
        compiled.append(
            (
                target,
                float(term["coeff"]),
                int(term["state"]),
                delay,
                term.get("disturbance"),
                nonlin,
                tfac,
            )
        )

    def rhs(t, x, d):
        out = np.zeros(state_dim)
        for target, coeff, state, delay, dist, nonlin, tfac in compiled:
            val = coeff * tfac(t) * nonlin(x.value(-delay)[state])
            if dist is not None:
                val *= d[dist]
            out[target] += val
        return out

    return RfdeSystem(
        delay_span=delay_span,
        state_dim=state_dim,
        box=box,
        rhs=rhs,
        name=name,
    )


def system_from_json(data: dict) -> RfdeSystem:
    """Resolve a system reference {name, params} from the registry."""
    name = data["name"]
    params = data.get("params", {})
    if name == "uncertain_delay_feedback":
        return uncertain_delay_feedback(**params)
    if name == "extinction_planar":
        return extinction_planar_system()
    if name == "linear_decay":
        return linear_decay_system(**params)
    if name == "sampled_integrator":
        period = float(params.get("period", 1.0))
        return build_sampled_data(
            f=lambda t, x, u: u,
            k=lambda t, x, x_held: -x_held,
            period=period,
        )
    if name == "custom":
        return system_from_terms(
            delay_span=float(params["delay_span"]),
            state_dim=int(params["state_dim"]),
            box=DisturbanceBox.from_json(params["box"]),
            terms=params["terms"],
            name=params.get("label", "custom"),
        )
    raise ConfigurationError(f"unknown system {name!r}")


BUILTIN_SYSTEMS = (
    "uncertain_delay_feedback",
    "extinction_planar",
    "linear_decay",
    "sampled_integrator",
    "custom",
)


# ---------------------------------------------------------------------------
# hypothesis probes (sampling falsification, never proof)
# ---------------------------------------------------------------------------


def probe_one_sided_lipschitz(
    sys: RfdeSystem, t: float, x: HistorySegment, y: HistorySegment, d
) -> tuple[float, float]:
    """Return (lhs, bound) of the one-sided Lipschitz inequality; the caller
    asserts lhs <= bound."""
    if sys.lipschitz_modulus is None:
        raise ConfigurationError("system declares no Lipschitz modulus")
    fx = eval_rhs(sys, t, x, d)
    fy = eval_rhs(sys, t, y, d)
    lhs = float(np.dot(x.front - y.front, fx - fy))
    gap = _window_gap(x, y)
    bound = float(
        sys.lipschitz_modulus(t, x.sup_norm() + y.sup_norm()) * gap * gap
    )
    return lhs, bound


def _window_gap(x: HistorySegment, y: HistorySegment) -> float:
    diff = HistorySegment(
        x.span,
        x.grid_step,
        x.samples - y.samples,
        None if x.derivs is None or y.derivs is None else x.derivs - y.derivs,
    )
    return diff.sup_norm()


def probe_equilibrium(sys: RfdeSystem, t_values, d_values) -> float:
    """Worst |rhs(t, 0, d)| over the sample; zero for a valid system."""
    zero = HistorySegment.zero(
        sys.state_dim, sys.delay_span, sys.delay_span / 4 if sys.delay_span else 1.0
    )
    worst = 0.0
    for t in t_values:
        for d in d_values:
            worst = max(worst, float(np.max(np.abs(eval_rhs(sys, t, zero, d)))))
    return worst


def probe_periodicity(sys: RfdeSystem, t_values, windows, d_values) -> float:
    """Worst |rhs(t+T, x, d) - rhs(t, x, d)| over the sample."""
    if sys.period is None:
        raise ConfigurationError("system declares no period")
    worst = 0.0
    for t in t_values:
        for x in windows:
            for d in d_values:
                gap = eval_rhs(sys, t + sys.period, x, d) - eval_rhs(sys, t, x, d)
                worst = max(worst, float(np.max(np.abs(gap))))
    return worst


def probe_local_smallness(
    sys: RfdeSystem, t: float, delta: float, rng: np.random.Generator, n_samples: int = 50
) -> float:
    """sup |rhs| over a delta-neighbourhood of (t, 0); shrinks with delta for
    systems satisfying the local smallness hypothesis."""
    g = sys.delay_span / 8 if sys.delay_span else 1.0
    worst = 0.0
    for _ in range(n_samples):
        tau = max(t + (rng.random() - 0.5) * delta, 0.0)
        amp = rng.random() * delta
        sample = amp * (2 * rng.random(sys.state_dim) - 1)
        x = HistorySegment.constant(sample, sys.delay_span, g)
        d = sys.box.clip(
            sys.box.lower + (sys.box.upper - sys.box.lower) * rng.random(sys.box.dimension)
        )
        worst = max(worst, float(np.max(np.abs(eval_rhs(sys, tau, x, d)))))
    return worst
