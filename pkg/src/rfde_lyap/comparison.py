"""Scalar comparison dynamics and the domination check.

The comparison equation is eta' = -rho(eta) + mu(t) with rho positive
definite and mu a nonnegative vanishing forcing term.  A grid-sampled scalar
signal v is "dominated" when v(t) <= w(t) + tol at every grid time, where w
solves a user-supplied scalar ODE started at w0 >= v(t0).  This is a
discretization of the comparison principle: the inequality is only checked
at grid times, so a pass is a falsification result, not a proof.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ScalarTrajectory:
    """Scalar ODE solution on a uniform grid with linear dense output."""

    times: np.ndarray
    values: np.ndarray

    def value(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    __call__ = value


@dataclass(frozen=True)
class ComparisonProblem:
    """eta' = -rho(eta) + mu(t), eta(t0) = eta0 >= 0."""

    rho: Callable[[float], float]
    mu: Optional[Callable[[float], float]] = None
    eta0: float = 0.0

    def __post_init__(self):
        if self.eta0 < 0:
            raise ConfigurationError("eta0 must be non-negative")
        if abs(self.rho(0.0)) > 1e-12:
            raise ConfigurationError("rho(0) must vanish")
        for s in (1e-3, 1e-1, 1.0, 10.0):
            if self.rho(s) <= 0:
                raise ConfigurationError(f"rho({s}) <= 0; rho must be positive definite")


def _rk4_scalar(
    field: Callable[[float, float], float],
    y0: float,
    t0: float,
    t_end: float,
    grid_step: float,
    clip_zero: bool = False,
) -> ScalarTrajectory:
    if t_end <= t0:
        raise ConfigurationError("t_end must exceed t0")
    n = max(int(np.ceil((t_end - t0) / grid_step - 1e-9)), 1)
    g = (t_end - t0) / n
    times = t0 + g * np.arange(n + 1)
    values = np.empty(n + 1)
    values[0] = y0
    y = y0
    for k in range(n):
        t = times[k]
        k1 = field(t, y)
        k2 = field(t + g / 2, y + g / 2 * k1)
        k3 = field(t + g / 2, y + g / 2 * k2)
        k4 = field(t + g, y + g * k3)
        y = y + g / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if clip_zero and y < 0:
            y = 0.0
        if not np.isfinite(y):
            raise ConfigurationError(f"scalar solution left its domain near t={t}")
        values[k + 1] = y
    return ScalarTrajectory(times, values)


def solve_eta(
    p: ComparisonProblem,
    t0: float,
    t_end: float,
    grid_step: float = 1e-2,
) -> ScalarTrajectory:
    """RK4 solution of the comparison equation, clipped at zero from below."""
    mu = p.mu or (lambda t: 0.0)

    def field(t, y):
        m = mu(t)
        if m < -1e-12:
            raise ConfigurationError(f"mu({t}) < 0")
        return -p.rho(max(y, 0.0)) + m

    return _rk4_scalar(field, p.eta0, t0, t_end, grid_step, clip_zero=True)


def solve_perturbed(
    f: Callable[[float, float], float],
    w0: float,
    lam: float,
    t0: float,
    t_end: float,
    grid_step: float = 1e-2,
) -> ScalarTrajectory:
    """Solution of the shifted equation z' = f(t, z) + lam (lam >= 0)."""
    if lam < 0:
        raise ConfigurationError("perturbation must be non-negative")
    return _rk4_scalar(lambda t, y: f(t, y) + lam, w0, t0, t_end, grid_step)


def check_dominated(
    times: np.ndarray,
    v_values: np.ndarray,
    f: Callable[[float, float], float],
    w0: float,
    tol: float = 1e-6,
    substeps: int = 4,
) -> dict:
    """Check v(t) <= w(t) + tol*(1+|w(t)|) on the grid, w solving w' = f(t, w).

    Returns {"dominated": bool, "first_violation": time or None,
    "worst_slack": max of v - w - band, "w_values": grid solution}.
    """
    times = np.asarray(times, dtype=float)
    v_values = np.asarray(v_values, dtype=float)
    if times.shape != v_values.shape or times.ndim != 1 or len(times) < 2:
        raise ConfigurationError("need matching 1-d time/value arrays")
    if v_values[0] > w0 + tol * (1 + abs(w0)):
        return {
            "dominated": False,
            "first_violation": float(times[0]),
            "worst_slack": float(v_values[0] - w0),
            "w_values": np.full_like(v_values, w0),
        }
    w = np.empty_like(v_values)
    w[0] = w0
    y = w0
    first_violation = None
    worst = -np.inf
    for k in range(len(times) - 1):
        g = (times[k + 1] - times[k]) / substeps
        for j in range(substeps):
            t = times[k] + j * g
            k1 = f(t, y)
            k2 = f(t + g / 2, y + g / 2 * k1)
            k3 = f(t + g / 2, y + g / 2 * k2)
            k4 = f(t + g, y + g * k3)
            y = y + g / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.isfinite(y):
            raise ConfigurationError(
                f"comparison solution left its domain near t={times[k + 1]}"
            )
        w[k + 1] = y
        slack = v_values[k + 1] - y - tol * (1 + abs(y))
        worst = max(worst, slack)
        if slack > 0 and first_violation is None:
            first_violation = float(times[k + 1])
    return {
        "dominated": first_violation is None,
        "first_violation": first_violation,
        "worst_slack": float(worst),
        "w_values": w,
    }
