"""Sampled converse-Lyapunov construction.

The construction builds a Lyapunov functional from trajectory data alone:

* ``estimate_uq`` - for an integer level q, the supremum over a finite
  disturbance family and a finite time horizon of
  max{0, a1(||window(tau)||) - 1/q} * exp(tau - t).  The horizon comes from
  ``horizon_T``; the sampled value is a certified lower bound of the true
  supremum (tau = t and all constant vertex signals are always included).
* ``assemble_v`` - the weighted series sum_q w_q * U_q with weights built
  from the growth/Lipschitz bookkeeping (``g3_factor``, ``g1_factor``), or
  plain 2^-q weights behind an explicit flag for systems that do not declare
  the needed moduli.
* ``check_decrease`` - the defining decrease inequality
  U_q(t+h, advanced state) <= exp(-h) U_q(t, x), made structural by scanning
  the time-t supremum over signals formed by concatenating the head signal
  with every member of the (t+h)-family.

Everything here is falsification-grade: a passing check means no violation
was found over the sampled family, never a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ConstructionInvalid
from .functionals import Functional
from .history import HistorySegment
from .integrator import integrate
from .signals import DisturbanceSignal, make_signal, random_piecewise_signals
from .system import RfdeSystem


@dataclass(frozen=True)
class ConverseConfig:
    """Comparison-function scaffolding for the construction.

    ``a1`` must be globally Lipschitz with unit constant (identity default);
    ``a2``/``beta`` either fitted from simulation (see ``fit_envelope``) or
    supplied.  ``q_max`` truncates the series; the disturbance family size
    and grid resolution control sampling coverage.
    """

    a1: Callable[[float], float] = field(default=lambda s: s)
    a1_inv: Callable[[float], float] = field(default=lambda s: s)
    a2: Callable[[float], float] = field(default=lambda s: s)
    beta: Callable[[float], float] = field(default=lambda t: 1.0)
    q_max: int = 8
    grid_step: float = 1e-2
    n_random_signals: int = 16
    max_bang_switches: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.q_max < 1:
            raise ConfigurationError("q_max must be at least 1")
        for s, t in ((0.0, 1.0), (0.5, 2.0), (1.0, 3.0), (2.0, 5.0)):
            gap = abs(self.a1(t) - self.a1(s))
            if gap > (t - s) * (1 + 1e-9):
                raise ConfigurationError(
                    "a1 must be globally Lipschitz with unit constant"
                )


def horizon_T(R: float, q: int, cfg: ConverseConfig) -> float:
    """Sufficient scan horizon max{0, log(q * a2(beta(R) R)) / 2}."""
    arg = q * cfg.a2(cfg.beta(R) * R)
    if arg <= 1.0:
        return 0.0
    return 0.5 * math.log(arg)


def default_family(
    sys: RfdeSystem, t: float, horizon: float, cfg: ConverseConfig
) -> list[DisturbanceSignal]:
    """Constant vertex signals + bang-bang switches + seeded random signals."""
    g = cfg.grid_step
    family = [
        make_signal("constant", sys.box, value=v) for v in sys.box.vertices()
    ]
    n_cells = max(int(round(max(horizon, g) / g)), 1)
    lo, hi = sys.box.lower, sys.box.upper
    if np.any(hi > lo):
        for k in range(1, cfg.max_bang_switches + 1):
            cells = np.linspace(1, n_cells, k, dtype=int)
            cells = np.unique(cells)
            switch_times = [float(t + c * g) for c in cells]
            for start in ("high", "low"):
                family.append(
                    make_signal(
                        "bang_bang", sys.box, switch_times=switch_times, start=start
                    )
                )
        rng = np.random.default_rng(
            [cfg.seed, int(round(t / g)), 0x5EED]
        )
        shifted = random_piecewise_signals(
            sys.box, cfg.n_random_signals, max(horizon, g), g, rng
        )
        family.extend(s.shift(0.0) if t == 0 else _rebase(s, t) for s in shifted)
    return family


def _rebase(d: DisturbanceSignal, t: float) -> DisturbanceSignal:
    """Move a time-origin-0 signal so its pieces start at absolute time t."""
    zero = make_signal("constant", d.box, value=d.box.clip(d.value(0.0)))
    return zero.concat(t, d) if t > 0 else d


def window_norm(x: HistorySegment) -> float:
    """Node-sampled window norm, the convention used throughout this module.

    Matches the node-level scan of ``window_sup_norms`` so the tau = t term
    and in-trajectory terms are computed identically (the structural
    decrease check depends on that).
    """
    return float(np.max(np.linalg.norm(x.samples, axis=1)))


def _scan_scores(traj, cfg: ConverseConfig, q: int, t: float) -> float:
    times, sups = traj.window_sup_norms()
    a1_vals = np.array([cfg.a1(s) for s in sups])
    scores = np.maximum(0.0, a1_vals - 1.0 / q) * np.exp(times - t)
    return float(np.max(scores))


def estimate_uq(
    sys: RfdeSystem,
    cfg: ConverseConfig,
    q: int,
    t: float,
    x: HistorySegment,
    signals: Optional[Sequence[DisturbanceSignal]] = None,
    horizon: Optional[float] = None,
) -> float:
    """Sampled (lower-bound) value of the level-q trajectory supremum."""
    nx = window_norm(x)
    R = max(t, nx)
    T = horizon_T(R, q, cfg) if horizon is None else horizon
    if signals is None:
        signals = default_family(sys, t, T, cfg)
    best = max(0.0, cfg.a1(nx) - 1.0 / q)  # tau = t term, exact
    if T <= 0:
        return best
    for d in signals:
        traj = integrate(sys, t, x, d, t + T, cfg.grid_step)
        if traj.status != "completed":
            raise ConstructionInvalid(
                f"blow-up at t={traj.t_blow_estimate} while sampling level q={q}"
            )
        best = max(best, _scan_scores(traj, cfg, q, t))
    return best


def check_decrease(
    sys: RfdeSystem,
    cfg: ConverseConfig,
    q: int,
    t: float,
    x: HistorySegment,
    d_head: DisturbanceSignal,
    h: float,
) -> dict:
    """Decrease inequality under concatenation-consistent sampling.

    The (t+h)-side supremum runs over a family F'; the t-side family is
    {d_head on [t, t+h) followed by f} for every f in F', plus the base
    family at t.  With that pairing the inequality
    U_q(t+h, ...) <= exp(-h) U_q(t, x) is structural: every trajectory the
    right side sees is the tail of a trajectory the left side sees.
    """
    k = h / cfg.grid_step
    if h <= 0 or abs(k - round(k)) > 1e-9:
        raise ConfigurationError("h must be a positive grid multiple")
    head_traj = integrate(sys, t, x, d_head, t + h, cfg.grid_step)
    if head_traj.status != "completed":
        raise ConstructionInvalid("blow-up during the head segment")
    x_next = head_traj.window_at(t + h, sys.delay_span)

    R_right = max(t + h, window_norm(x_next))
    T_right = horizon_T(R_right, q, cfg)
    family_right = default_family(sys, t + h, T_right, cfg)
    u_right = estimate_uq(
        sys, cfg, q, t + h, x_next, signals=family_right, horizon=T_right
    )

    R_left = max(t, window_norm(x))
    T_left = max(horizon_T(R_left, q, cfg), h + T_right)
    family_left = [d_head.concat(t + h, f.shift(t + h)) for f in family_right]
    family_left += default_family(sys, t, T_left, cfg)
    u_left = estimate_uq(sys, cfg, q, t, x, signals=family_left, horizon=T_left)

    slack = u_right - math.exp(-h) * u_left
    return {
        "u_left": u_left,
        "u_right": u_right,
        "slack": slack,
        "holds": slack <= 1e-9 * (1 + u_left),
    }


# ---------------------------------------------------------------------------
# series assembly
# ---------------------------------------------------------------------------


def lhat(sys: RfdeSystem, cfg: ConverseConfig, t: float, s: float) -> float:
    """Window-norm Lipschitz modulus L(t, 2 a1^{-1}(a2(beta(t) s)))."""
    if sys.lipschitz_modulus is None:
        raise ConfigurationError("system declares no Lipschitz modulus")
    return sys.lipschitz_modulus(t, 2 * cfg.a1_inv(cfg.a2(cfg.beta(t) * s)))


def g3_factor(sys: RfdeSystem, cfg: ConverseConfig, R: float, q: int) -> float:
    """exp(T * (1 + Lhat(R + T, 2R))) with T the level-q horizon at radius R."""
    T = horizon_T(R, q, cfg)
    return math.exp(T * (1 + lhat(sys, cfg, R + T, 2 * R)))


def g1_factor(sys: RfdeSystem, cfg: ConverseConfig, t: float, s: float) -> float:
    """Growth envelope zeta(gamma(t) a1^{-1}(a2(beta(t) s)))."""
    if sys.growth_zeta is None or sys.growth_gamma is None:
        raise ConfigurationError("system declares no growth envelope")
    return sys.growth_zeta(sys.growth_gamma(t) * cfg.a1_inv(cfg.a2(cfg.beta(t) * s)))


def series_weights(sys: RfdeSystem, cfg: ConverseConfig) -> np.ndarray:
    """Default series weights 2^-q / (1 + G3(q,q) + (2 + G3(q+1,q))(1 + G1(q,q)))."""
    out = np.empty(cfg.q_max)
    for i, q in enumerate(range(1, cfg.q_max + 1)):
        denom = 1 + g3_factor(sys, cfg, q, q) + (
            2 + g3_factor(sys, cfg, q + 1, q)
        ) * (1 + g1_factor(sys, cfg, q, q))
        out[i] = 2.0**-q / denom
    return out


def lipschitz_weight(sys: RfdeSystem, cfg: ConverseConfig, R: float) -> float:
    """Radius-R Lipschitz modulus of the assembled series:
    1 + sum_{q <= floor(R)} 2^-q G3(R, q) / (1 + G3(q, q))."""
    total = 1.0
    for q in range(1, min(int(math.floor(R)), cfg.q_max) + 1):
        total += 2.0**-q * g3_factor(sys, cfg, R, q) / (
            1 + g3_factor(sys, cfg, q, q)
        )
    return total


def assemble_v(
    sys: RfdeSystem,
    cfg: ConverseConfig,
    weights: Optional[Sequence[float]] = None,
    plain_weights: bool = False,
) -> Functional:
    """Weighted series of the sampled level functions as a Functional.

    Without explicit weights the default bookkeeping weights are used, which
    requires the system to declare Lipschitz and growth moduli; systems
    without them must opt in to plain 2^-q weights (a documented deviation
    from the default construction).
    """
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if len(w) != cfg.q_max or np.any(w < 0):
            raise ConfigurationError("need q_max non-negative weights")
        total = w.sum()
        if total > 1:
            w = w / total
    elif plain_weights:
        w = 2.0 ** -np.arange(1, cfg.q_max + 1)
    else:
        w = series_weights(sys, cfg)

    def evaluator(t, x):
        return sum(
            wq * estimate_uq(sys, cfg, q, t, x)
            for q, wq in zip(range(1, cfg.q_max + 1), w)
        )

    def a1_lower(s):
        return sum(
            wq * max(0.0, cfg.a1(s) - 1.0 / q)
            for q, wq in zip(range(1, cfg.q_max + 1), w)
        )

    return Functional(
        name="converse_series",
        window_span=sys.delay_span,
        tau=0.0,
        evaluator=evaluator,
        a1=a1_lower,
        a2=cfg.a2,
        beta1=cfg.beta,
        params={"q_max": cfg.q_max, "weights": [float(v) for v in w]},
    )


# ---------------------------------------------------------------------------
# envelope fitting
# ---------------------------------------------------------------------------


def fit_envelope(
    sys: RfdeSystem,
    histories: Sequence[HistorySegment],
    t0_values: Sequence[float],
    horizon: float,
    grid_step: float,
    uniform: bool = True,
    kappa: float = 1.1,
    seed: int = 0,
) -> ConverseConfig:
    """Fit the upper comparison function from simulated decay data.

    Each run contributes the requirement a2(beta(t0) ||x0||) >=
    exp(2 (t - t0)) ||window(t)||; a quadratic c1*s + c2*s^2 is fitted by
    least squares and scaled (times the safety factor kappa) until every
    sampled point is dominated.  For non-uniform systems beta is a monotone
    step envelope over t0 of the per-start overshoot.
    """
    points = []  # (t0, s0, required value)
    for t0 in t0_values:
        rng = np.random.default_rng([seed, int(t0 * 1000) % (2**31)])
        family = random_piecewise_signals(
            sys.box, 4, horizon, grid_step, rng
        ) + [make_signal("constant", sys.box, value=v) for v in sys.box.vertices()]
        for x0 in histories:
            s0 = window_norm(x0)
            if s0 == 0:
                continue
            for d in family:
                dd = _rebase(d, t0) if t0 > 0 else d
                traj = integrate(sys, t0, x0, dd, t0 + horizon, grid_step)
                if traj.status != "completed":
                    raise ConstructionInvalid("blow-up during envelope fitting")
                times, sups = traj.window_sup_norms()
                need = float(np.max(np.exp(2 * (times - t0)) * sups))
                points.append((t0, s0, need))
    if not points:
        raise ConfigurationError("no usable envelope data")
    t0s = np.array([p[0] for p in points])
    s = np.array([p[1] for p in points])
    z = np.array([p[2] for p in points])
    A = np.column_stack([s, s * s])
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    c1, c2 = np.maximum(coef, 0.0)
    if c1 == 0 and c2 == 0:
        c1 = 1.0
    base = c1 * s + c2 * s * s
    if uniform:
        scale = kappa * max(float(np.max(z / base)), 1.0)
        a2 = _quadratic(scale * c1, scale * c2)
        beta = lambda t: 1.0  # noqa: E731
    else:
        a2 = _quadratic(kappa * c1, kappa * c2)
        knots = np.unique(t0s)
        ratios = []
        for t0 in knots:
            mask = t0s == t0
            ratios.append(max(float(np.max(z[mask] / (kappa * base[mask]))), 1.0))
        env = np.maximum.accumulate(np.asarray(ratios))  # monotone step envelope

        def beta(t, knots=knots, env=env):
            idx = np.searchsorted(knots, t, side="right")
            return float(env[min(max(idx, 1), len(env)) - 1]) if idx > 0 else float(
                env[0]
            )

    return ConverseConfig(a2=a2, beta=beta, seed=seed, grid_step=grid_step)


def _quadratic(c1: float, c2: float) -> Callable[[float], float]:
    def a2(s, c1=float(c1), c2=float(c2)):
        return c1 * s + c2 * s * s

    return a2
