"""Fixed-grid method-of-steps integrator with dense output.

Classical RK4 on a uniform grid whose step equals the storage grid step.
Delayed window lookups at node times are exact array reads; interior-stage
lookups fall mid-cell and are served by cubic Hermite interpolation of the
stored solution (this caps the formal order between 3 and 4).  Disturbances
are evaluated as right limits except at the end stage of a step, which uses
the left limit so each step sees a single continuous piece.

The solution derivative jumps at the history/solution junction and at
disturbance switches (all grid-aligned), so dense output keeps two
derivative arrays: the node array holds right limits (the first stage of the
step starting there) and a per-cell array holds the left limit at each cell
end, evaluated with the accepted end state and the left-limit disturbance.
Every Hermite cell then uses one-sided data only, which keeps the
interpolation order uniform across the jumps.

Blow-up handling is a heuristic: integration stops once the state norm
exceeds an overflow threshold (default 1e8) or goes non-finite, and the last
completed grid time is reported as the escape-time estimate.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError
from .history import HistorySegment
from .signals import DisturbanceSignal
from .system import RfdeSystem

DEFAULT_OVERFLOW = 1e8
_SNAP = 1e-9


def _hermite(s, g, y0, y1, m0, m1):
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + g * h10 * m0 + h01 * y1 + g * h11 * m1


def _hermite_deriv(s, g, y0, y1, m0, m1):
    dh00 = 6 * s * s - 6 * s
    dh10 = 3 * s * s - 4 * s + 1
    dh01 = -6 * s * s + 6 * s
    dh11 = 3 * s * s - 2 * s
    return (dh00 * y0 + g * dh10 * m0 + dh01 * y1 + g * dh11 * m1) / g


class _StageWindow:
    """Read-only view of the stored solution ending at a stage time.

    Presents the same ``value``/``front`` surface as a HistorySegment; the
    portion beyond the last completed node is the current RK stage
    prediction.
    """

    __slots__ = (
        "_t_first", "_g", "_X", "_DX", "_DXE", "_k_known", "_t_stage",
        "_front", "span",
    )

    def __init__(self, t_first, g, X, DX, DXE, k_known, t_stage, front, span):
        self._t_first = t_first
        self._g = g
        self._X = X
        self._DX = DX
        self._DXE = DXE
        self._k_known = k_known
        self._t_stage = t_stage
        self._front = front
        self.span = span

    @property
    def front(self):
        return self._front

    def value(self, theta: float) -> np.ndarray:
        tau = self._t_stage + theta
        g = self._g
        t_known = self._t_first + self._k_known * g
        if tau >= t_known - _SNAP * g:
            if tau >= self._t_stage - _SNAP * g:
                return self._front
            if tau <= t_known + _SNAP * g:
                return self._X[self._k_known]
            s = (tau - t_known) / (self._t_stage - t_known)
            return (1 - s) * self._X[self._k_known] + s * self._front
        pos = (tau - self._t_first) / g
        j = int(round(pos))
        if abs(pos - j) < _SNAP:
            return self._X[j]
        j = int(np.floor(pos))
        s = pos - j
        return _hermite(s, g, self._X[j], self._X[j + 1], self._DX[j], self._DXE[j])

    interpolate = value


@dataclass
class Trajectory:
    """Dense solution on [t0 - r, t_end] with completion status.

    ``derivs`` holds right-limit node derivatives; ``cell_derivs`` holds
    the left-limit derivative at the right end of each grid cell (one row
    per cell).
    """

    sys: RfdeSystem
    t0: float
    grid_step: float
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    cell_derivs: np.ndarray
    status: str                      # "completed" | "blow_up"
    t_blow_estimate: Optional[float]
    signal: DisturbanceSignal

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def start_index(self) -> int:
        return int(round((self.t0 - self.times[0]) / self.grid_step))

    def index_of(self, t: float) -> int:
        pos = (t - self.times[0]) / self.grid_step
        idx = int(round(pos))
        if abs(pos - idx) > 1e-6 or not 0 <= idx < len(self.times):
            raise ValueError(f"t={t} is not a stored grid time")
        return idx

    def _locate(self, t: float):
        pos = (t - self.times[0]) / self.grid_step
        j = int(round(pos))
        if abs(pos - j) < _SNAP and 0 <= j < len(self.times):
            return j, None
        if pos < 0 or pos > len(self.times) - 1:
            raise ValueError(f"t={t} outside trajectory domain")
        return min(int(np.floor(pos)), len(self.times) - 2), pos

    def state_at(self, t: float) -> np.ndarray:
        """Dense (Hermite) state evaluation at any time in the domain."""
        j, pos = self._locate(t)
        if pos is None:
            return self.states[j]
        return _hermite(
            pos - j, self.grid_step, self.states[j], self.states[j + 1],
            self.derivs[j], self.cell_derivs[j],
        )

    def _deriv_at(self, t: float) -> np.ndarray:
        j, pos = self._locate(t)
        if pos is None:
            return self.derivs[j]
        return _hermite_deriv(
            pos - j, self.grid_step, self.states[j], self.states[j + 1],
            self.derivs[j], self.cell_derivs[j],
        )

    def window_at(
        self, t: float, span: Optional[float] = None, extend: bool = False
    ) -> HistorySegment:
        """History segment of the given span (default: system delay span)
        ending at t.  With ``extend`` the window is continued as a constant
        before the stored domain."""
        span = self.sys.delay_span if span is None else span
        g = self.grid_step
        count = int(round(span / g)) + 1 if span > 0 else 1
        pos = (t - self.times[0]) / g
        j = int(round(pos))
        if abs(pos - j) < _SNAP and j - count + 1 >= 0 and j < len(self.times):
            sl = slice(j - count + 1, j + 1)
            ends = self.cell_derivs[j - count + 1 : j] if count > 1 else None
            return HistorySegment(span, g, self.states[sl], self.derivs[sl], ends)
        node_times = t - span + g * np.arange(count)
        samples = np.empty((count, self.states.shape[1]))
        derivs = np.empty_like(samples)
        t_first = self.times[0]
        for i, tau in enumerate(node_times):
            if tau < t_first - _SNAP * g:
                if not extend:
                    raise ValueError(f"window at t={t} leaves the stored domain")
                samples[i] = self.states[0]
                derivs[i] = 0.0
            else:
                samples[i] = self.state_at(min(tau, self.t_end))
                derivs[i] = self._deriv_at(min(tau, self.t_end))
        return HistorySegment(span, g, samples, derivs)

    def window_sup_norms(self) -> tuple[np.ndarray, np.ndarray]:
        """(grid times >= t0, node-level window sup norms) for the map
        t -> sup of |x| over [t - delay_span, t]."""
        point = np.linalg.norm(self.states, axis=1)
        m = self.start_index + 1
        sups = sliding_window_view(point, m).max(axis=1)
        return self.times[m - 1 :], sups

    def integral_residual(self) -> float:
        """Worst |x(b) - x(a) - integral of rhs| over [t0, t_end].

        Per-cell Simpson quadrature of the rhs along the dense solution
        (one extra rhs evaluation per cell, at the midpoint); stored node
        derivatives supply the endpoint values with the correct one-sided
        disturbance limits."""
        g = self.grid_step
        i0 = self.start_index
        n_cell = len(self.times) - 1 - i0
        if n_cell <= 0:
            return 0.0
        if self.sys.side_aware:
            rhs = lambda t, w, d: self.sys.rhs(t, w, d, "right")  # noqa: E731
        else:
            rhs = self.sys.rhs
        cells = np.empty((n_cell, self.states.shape[1]))
        t_first = float(self.times[0])
        for idx, j in enumerate(range(i0, len(self.times) - 1)):
            tm = float(self.times[j]) + g / 2
            # stage view anchored on the storage grid: delayed reads that
            # land on stored nodes stay exact (resampling would smear
            # derivative kinks at nodes into O(g^2) value errors)
            w = _StageWindow(
                t_first, g, self.states, self.derivs, self.cell_derivs,
                j, tm, self.state_at(tm), self.sys.delay_span,
            )
            fm = np.asarray(rhs(tm, w, self.signal.value(tm)), dtype=float)
            cells[idx] = (
                self.states[j + 1]
                - self.states[j]
                - g / 6 * (self.derivs[j] + 4 * fm + self.cell_derivs[j])
            )
        cum = np.cumsum(cells, axis=0)
        return float(np.max(np.abs(cum)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        n = self.states.shape[1]
        writer.writerow(
            ["t"] + [f"x{i + 1}" for i in range(n)] + [f"dx{i + 1}" for i in range(n)]
        )
        for idx, t in enumerate(self.times):
            writer.writerow(
                [repr(float(t))]
                + [repr(float(v)) for v in self.states[idx]]
                + [repr(float(v)) for v in self.derivs[idx]]
            )
        return buf.getvalue()

    def metadata(self) -> dict:
        return {
            "system": self.sys.name,
            "status": self.status,
            "t0": self.t0,
            "t_end": self.t_end,
            "grid_step": self.grid_step,
            "t_blow_estimate": self.t_blow_estimate,
            "signal": self.signal.to_json(),
        }


def default_grid_step(sys: RfdeSystem) -> float:
    return sys.delay_span / 100 if sys.delay_span > 0 else 1e-2


def _check_alignment(sys, d, t0, t_end, g):
    for t in sys.discontinuities_in(t0, t_end):
        k = (t - t0) / g
        if abs(k - round(k)) > 1e-6:
            warnings.warn(
                f"system discontinuity at t={t} is not grid-aligned; "
                "local order may degrade"
            )
    for t in d.discontinuity_times:
        if t0 < t < t_end:
            k = (t - t0) / g
            if abs(k - round(k)) > 1e-6:
                warnings.warn(
                    f"signal discontinuity at t={t} is not grid-aligned; "
                    "local order may degrade"
                )


def integrate(
    sys: RfdeSystem,
    t0: float,
    x0: HistorySegment,
    d: DisturbanceSignal,
    t_end: float,
    grid_step: Optional[float] = None,
    overflow_threshold: float = DEFAULT_OVERFLOW,
) -> Trajectory:
    """Integrate the delay system from the initial window x0 at time t0."""
    r = sys.delay_span
    g = default_grid_step(sys) if grid_step is None else float(grid_step)
    if t_end <= t0:
        raise ConfigurationError("t_end must exceed t0")
    if r > 0:
        ratio = r / g
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigurationError("grid_step must divide the delay span exactly")
    if abs(x0.span - r) > 1e-9:
        raise ConfigurationError(f"initial window span {x0.span} != delay span {r}")
    if r > 0 and abs(x0.grid_step - g) > 1e-12:
        x0 = HistorySegment.from_function(
            x0.value, r, g, x0.derivative if x0.derivs is not None else None
        )
    _check_alignment(sys, d, t0, t_end, g)

    n = sys.state_dim
    m_hist = int(round(r / g)) if r > 0 else 0
    n_steps = int(np.ceil((t_end - t0) / g - 1e-9))
    total = m_hist + n_steps + 1
    t_first = t0 - r
    times = t_first + g * np.arange(total)
    X = np.empty((total, n))
    DX = np.empty((total, n))
    DXE = np.empty((total - 1, n))
    X[: m_hist + 1] = x0.samples
    if x0.derivs is not None:
        DX[: m_hist + 1] = x0.derivs
    elif m_hist > 0:
        DX[: m_hist + 1] = np.gradient(x0.samples, g, axis=0)
    else:
        DX[0] = 0.0
    if m_hist > 0:
        if x0.derivs_end is not None:
            DXE[:m_hist] = x0.derivs_end
        else:
            DXE[:m_hist] = DX[1 : m_hist + 1]
    if sys.side_aware:
        rhs = lambda t, w, d: sys.rhs(t, w, d, "right")  # noqa: E731
        rhs_left = lambda t, w, d: sys.rhs(t, w, d, "left")  # noqa: E731
    else:
        rhs = rhs_left = sys.rhs
    status = "completed"
    t_blow = None
    last = m_hist
    k = m_hist
    half = g / 2
    while k < total - 1:
        t = times[k]
        y = X[k]
        d_t = d.value(t)
        w1 = _StageWindow(t_first, g, X, DX, DXE, k, t, y, r)
        k1 = np.asarray(rhs(t, w1, d_t), dtype=float)
        DX[k] = k1
        d_mid = d.value(t + half)
        w2 = _StageWindow(t_first, g, X, DX, DXE, k, t + half, y + half * k1, r)
        k2 = np.asarray(rhs(t + half, w2, d_mid), dtype=float)
        w3 = _StageWindow(t_first, g, X, DX, DXE, k, t + half, y + half * k2, r)
        k3 = np.asarray(rhs(t + half, w3, d_mid), dtype=float)
        d_end = d.value(t + g, side="left")
        w4 = _StageWindow(t_first, g, X, DX, DXE, k, t + g, y + g * k3, r)
        k4 = np.asarray(rhs_left(t + g, w4, d_end), dtype=float)
        y_next = y + (g / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y_next)) or np.linalg.norm(y_next) > overflow_threshold:
            status = "blow_up"
            t_blow = float(times[k])
            last = k
            break
        X[k + 1] = y_next
        # cell-end derivative: accepted end state, left-limit disturbance
        DXE[k] = k4
        w_end = _StageWindow(t_first, g, X, DX, DXE, k + 1, t + g, y_next, r)
        DXE[k] = np.asarray(rhs_left(t + g, w_end, d_end), dtype=float)
        k += 1
        last = k
    # derivative at the final stored node (right-limit disturbance)
    t_last = times[last]
    w_last = _StageWindow(t_first, g, X, DX, DXE, last, t_last, X[last], r)
    DX[last] = np.asarray(rhs(t_last, w_last, d.value(t_last)), dtype=float)
    end = last + 1
    return Trajectory(
        sys=sys,
        t0=t0,
        grid_step=g,
        times=times[:end],
        states=X[:end],
        derivs=DX[:end],
        cell_derivs=DXE[: max(end - 1, 1)],
        status=status,
        t_blow_estimate=t_blow,
        signal=d,
    )


def continuity_gap(
    sys: RfdeSystem,
    t0: float,
    x0: HistorySegment,
    y0: HistorySegment,
    d: DisturbanceSignal,
    t_end: float,
    grid_step: Optional[float] = None,
) -> dict:
    """Measured window gap between two solutions versus the Gronwall bound
    gap(t0) * exp(Lhat * (t - t0)).

    The modulus argument is the running sup of both window norms, matching
    the bound's bookkeeping.  Reported only on the common completed domain.
    """
    if sys.lipschitz_modulus is None:
        raise ConfigurationError("continuity gap needs a Lipschitz modulus")
    tx = integrate(sys, t0, x0, d, t_end, grid_step)
    ty = integrate(sys, t0, y0, d, t_end, grid_step)
    m = min(len(tx.times), len(ty.times))
    point_gap = np.linalg.norm(tx.states[:m] - ty.states[:m], axis=1)
    w = tx.start_index + 1
    measured = sliding_window_view(point_gap, w).max(axis=1)
    times = tx.times[w - 1 : m]
    _, sup_x = tx.window_sup_norms()
    _, sup_y = ty.window_sup_norms()
    mm = len(measured)
    run_sum = np.maximum.accumulate(sup_x[:mm]) + np.maximum.accumulate(sup_y[:mm])
    gap0 = measured[0]
    lhat = np.array(
        [sys.lipschitz_modulus(t, s) for t, s in zip(times, run_sum)]
    )
    bound = gap0 * np.exp(lhat * (times - t0))
    return {
        "times": times,
        "measured": measured,
        "bound": bound,
        "status": (tx.status, ty.status),
    }
