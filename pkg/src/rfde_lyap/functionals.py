"""Lyapunov functionals on finite history windows.

A :class:`Functional` bundles an evaluator V(t, window) -> real >= 0 with
the optional structure used by the certification suites: comparison-function
bounds (a1, a2 with time weights), growth/decrease data (beta, rho, mu), a
Lipschitz modulus, and - when available - a closed-form directional
derivative used as an oracle for the numerical Dini estimator.

Two concrete functionals ship with the package:

* ``delay_feedback_functional`` - a Lyapunov-Krasovskii form for the scalar
  uncertain delayed feedback x' = -d(t) x(t-r), quadratic in the front value
  with single and length-weighted history integrals;
* ``extinction_functional`` - the time-weighted energy for the planar system
  whose first component dies out in finite time.

Integral terms use composite Simpson on the window grid (trapezoid fallback
when the cell count is odd); the double integral of the first functional is
rewritten as a single length-weighted integral, so evaluation is O(N).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ModelError
from .history import HistorySegment


@dataclass(frozen=True)
class Functional:
    """Nonnegative functional of (t, history window) with optional structure."""

    name: str
    window_span: float
    tau: float
    evaluator: Callable[[float, HistorySegment], float]
    directional: Optional[Callable] = None      # (t, x, v) -> real
    a1: Optional[Callable[[float], float]] = None
    a2: Optional[Callable[[float], float]] = None
    beta: Optional[float] = None                # growth constant (uniform case)
    beta1: Optional[Callable[[float], float]] = None
    beta2: Optional[Callable[[float], float]] = None
    beta3: Optional[Callable[[float], float]] = None
    beta4: Optional[Callable[[float], float]] = None
    R_const: float = 0.0
    rho: Optional[Callable[[float], float]] = None
    mu: Optional[Callable[[float], float]] = None
    lipschitz_modulus: Optional[Callable[[float], float]] = None
    params: dict = field(default_factory=dict)

    def __call__(self, t: float, x: HistorySegment) -> float:
        return evaluate(self, t, x)


def evaluate(V: Functional, t: float, x: HistorySegment) -> float:
    """Validated functional application: span check, finite, >= 0."""
    if abs(x.span - V.window_span) > 1e-9:
        raise ConfigurationError(
            f"window span {x.span} does not match functional span {V.window_span}"
        )
    out = float(V.evaluator(t, x))
    if not np.isfinite(out):
        raise ModelError(f"functional {V.name} returned non-finite value at t={t}")
    if out < -1e-12:
        raise ModelError(f"functional {V.name} returned negative value {out}")
    return max(out, 0.0)


def _quad(values: np.ndarray, g: float) -> float:
    """Composite Simpson over a uniform grid; trapezoid for odd cell counts."""
    n = len(values) - 1
    if n <= 0:
        return 0.0
    if n % 2 == 0:
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return float(g / 3 * np.dot(w, values))
    return float(g * (np.sum(values) - 0.5 * values[0] - 0.5 * values[-1]))


def _tail_cells(x: HistorySegment, length: float) -> int:
    k = length / x.grid_step
    if abs(k - round(k)) > 1e-9:
        raise ConfigurationError(
            f"window grid step {x.grid_step} does not resolve length {length}"
        )
    return int(round(k))


# ---------------------------------------------------------------------------
# delayed-feedback Lyapunov-Krasovskii functional
# ---------------------------------------------------------------------------


def feedback_margin(a: float, b: float, r: float, c: float) -> float:
    """(a-c)(1-2cr) - 2 b^3 r^2; positivity makes the functional decrescent."""
    return (a - c) * (1 - 2 * c * r) - 2 * b**3 * r**2


def delay_feedback_functional(a: float, b: float, r: float, c: float) -> Functional:
    """Lyapunov-Krasovskii functional for x' = -d(t) x(t-r), d in [a, b].

    V(x) = x(0)^2/2 + (k1/2) int_{-r}^0 x^2 + (k2/2) int_{-2r}^0 (th+2r) x^2,
    with k1 the feedback margin and k2 = b^3 r + c(a-c).  Window span is 2r.
    Carries a2(s) = K s^2, a quadratic growth constant, decay rate rho(s)=cs
    and a closed-form directional derivative.
    """
    if not 0 < c < a:
        raise ConfigurationError("need 0 < c < a")
    k1 = feedback_margin(a, b, r, c)
    if r > 0 and k1 <= 0:
        raise ConfigurationError(f"infeasible decay rate c={c}: margin {k1} <= 0")
    k2 = b**3 * r + c * (a - c)
    K = 0.5 * (1 + 2 * r * (a - c))
    beta = a - c + (b * b / k1 if r > 0 else 0.0)

    def evaluator(t, x):
        vals = x.samples[:, 0] ** 2
        g = x.grid_step
        m = _tail_cells(x, r)
        single = _quad(vals[len(vals) - 1 - m :], g) if m else 0.0
        weights = x.thetas + 2 * r
        double = _quad(weights * vals, g)
        return 0.5 * x.front[0] ** 2 + 0.5 * k1 * single + 0.5 * k2 * double

    def directional(t, x, v):
        v = np.atleast_1d(v)
        vals = x.samples[:, 0] ** 2
        full = _quad(vals, x.grid_step)
        return (
            x.front[0] * v[0]
            + 0.5 * (a - c) * x.front[0] ** 2
            - 0.5 * k1 * x.value(-r)[0] ** 2
            - 0.5 * k2 * full
        )

    return Functional(
        name="delay_feedback_quadratic",
        window_span=2 * r,
        tau=r,
        evaluator=evaluator,
        directional=directional,
        a1=lambda s: 0.5 * s * s,
        a2=lambda s: K * s * s,
        beta=beta,
        rho=lambda s: c * s,
        lipschitz_modulus=lambda R: (1 + k1 * r + 2 * k2 * r * r) * R,
        params={"a": a, "b": b, "r": r, "c": c, "k1": k1, "k2": k2, "K": K},
    )


def find_decay_rate(a: float, b: float, r: float) -> Optional[float]:
    """Decay rate c in (0, a) with positive feedback margin, or None.

    Feasible exactly when 2 b^3 r^2 < a.  The returned c maximizes
    c * margin(c) by golden-section search; any positive-margin c would do,
    the objective just balances decay speed against margin.
    """
    if 2 * b**3 * r**2 >= a:
        return None

    def objective(c):
        return c * feedback_margin(a, b, r, c)

    phi = (np.sqrt(5) - 1) / 2
    lo, hi = 0.0, a
    c1 = hi - phi * (hi - lo)
    c2 = lo + phi * (hi - lo)
    f1, f2 = objective(c1), objective(c2)
    for _ in range(200):
        if f1 < f2:
            lo, c1, f1 = c1, c2, f2
            c2 = lo + phi * (hi - lo)
            f2 = objective(c2)
        else:
            hi, c2, f2 = c2, c1, f1
            c1 = hi - phi * (hi - lo)
            f1 = objective(c1)
    c = (lo + hi) / 2
    if feedback_margin(a, b, r, c) <= 0:
        return None
    return float(c)


# ---------------------------------------------------------------------------
# finite-time-extinction energy functional
# ---------------------------------------------------------------------------


def extinction_functional() -> Functional:
    """Time-weighted energy for the planar extinction system.

    V(t, (x, y)) = x(0)^2/2 + exp(2t) x(0)^4/2 + int_{-1}^0 (x^2 + x^4)
    + y(0)^2/2 on windows of span 6 (delay 1 plus reachability lag 5).
    """

    def evaluator(t, w):
        xs = w.samples[:, 0]
        m = _tail_cells(w, 1.0)
        tail = xs[len(xs) - 1 - m :]
        integral = _quad(tail * tail + tail**4, w.grid_step)
        x0, y0 = w.front
        return 0.5 * x0 * x0 + 0.5 * np.exp(2 * t) * x0**4 + integral + 0.5 * y0 * y0

    def directional(t, w, v):
        v = np.atleast_1d(v)
        x0, y0 = w.front
        x1 = w.value(-1.0)[0]
        e2t = np.exp(2 * t)
        return (
            x0 * v[0]
            + 2 * e2t * x0**3 * v[0]
            + e2t * x0**4
            + x0 * x0
            + x0**4
            - x1 * x1
            - x1**4
            + y0 * v[1]
        )

    return Functional(
        name="extinction_energy",
        window_span=6.0,
        tau=5.0,
        evaluator=evaluator,
        directional=directional,
        a1=lambda s: 0.5 * s * s,
        a2=lambda s: 2 * s * s + 4 * s**4,
        beta1=np.exp,
        beta2=lambda t: 12 * np.exp(t),
        beta3=lambda t: 1.0,
        beta4=lambda t: 2.0,
        R_const=0.0,
        rho=lambda s: s,
        mu=lambda t: 0.0,
        params={},
    )


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

BUILTIN_FUNCTIONALS = ("delay_feedback_quadratic", "extinction_energy")


def functional_from_json(data: dict) -> Functional:
    name = data["name"]
    params = dict(data.get("params", {}))
    if name == "delay_feedback_quadratic":
        if "c" not in params or params["c"] is None:
            c = find_decay_rate(params["a"], params["b"], params["r"])
            if c is None:
                raise ConfigurationError(
                    "no feasible decay rate for these feedback parameters"
                )
            params["c"] = c
        return delay_feedback_functional(
            params["a"], params["b"], params["r"], params["c"]
        )
    if name == "extinction_energy":
        return extinction_functional()
    raise ConfigurationError(f"unknown functional {name!r}")
