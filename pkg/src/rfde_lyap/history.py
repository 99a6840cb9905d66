"""Finite-window state histories on a uniform grid.

A :class:`HistorySegment` stores the state x(theta) for theta in [-span, 0]
at uniformly spaced nodes, optionally together with derivative samples that
enable C1 cubic Hermite dense output inside each cell.  The window is the
state of a delay system, so everything downstream (integration, Lyapunov
functionals, directional derivatives) is built on top of this type.

Operations provided here:

* ``sup_norm``       -- max of |x(theta)| over the dense interpolant
* ``interpolate``    -- dense evaluation (node-exact; Hermite when derivatives
                        are stored, linear otherwise)
* ``splice_front_ray`` -- replace the front of the window by the linear ray
                        x(0) + (theta + h) v, shifting the rest back by h
* ``modulus_of_continuity`` -- sup of front gaps |x(0)-x(theta)| plus sup of
                        shifted gaps |x(theta+h)-x(theta)|
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

_NODE_SNAP = 1e-9  # relative snap tolerance for grid-node hits


@dataclass(frozen=True)
class HistorySegment:
    """State history on [-span, 0] sampled at span/grid_step + 1 nodes.

    Immutable after construction; safe to share between workers.  A span of
    zero degenerates to a single state vector.
    """

    span: float
    grid_step: float
    samples: np.ndarray            # shape (N+1, n), theta ascending
    derivs: Optional[np.ndarray] = None
    # Per-cell derivative at the right cell end, taken from the left.  The
    # underlying signal may have derivative jumps at grid nodes (history /
    # solution junctions, disturbance switches); ``derivs[j]`` is the
    # right-limit at node j and ``derivs_end[j]`` the left-limit at node
    # j+1, so each cell interpolates with one-sided data only.  When absent
    # the node array is used for both cell ends.
    derivs_end: Optional[np.ndarray] = None

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        object.__setattr__(self, "samples", samples)
        if self.span < 0:
            raise ValueError("span must be non-negative")
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        n_cells = self.span / self.grid_step
        if abs(n_cells - round(n_cells)) > 1e-9 * max(1.0, n_cells):
            raise ValueError("grid_step must divide span exactly")
        if samples.shape[0] != round(n_cells) + 1:
            raise ValueError(
                f"expected {round(n_cells) + 1} samples, got {samples.shape[0]}"
            )
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if self.derivs is not None:
            derivs = np.atleast_2d(np.asarray(self.derivs, dtype=float))
            if derivs.shape != samples.shape:
                raise ValueError("derivative samples must match sample shape")
            if not np.all(np.isfinite(derivs)):
                raise ValueError("derivative samples must be finite")
            object.__setattr__(self, "derivs", derivs)
        if self.derivs_end is not None:
            if self.derivs is None:
                raise ValueError("derivs_end requires derivs")
            if samples.shape[0] < 2:
                raise ValueError("derivs_end needs at least one cell")
            ends = np.atleast_2d(np.asarray(self.derivs_end, dtype=float))
            if ends.shape != (samples.shape[0] - 1, samples.shape[1]):
                raise ValueError("derivs_end must hold one row per cell")
            if not np.all(np.isfinite(ends)):
                raise ValueError("derivs_end must be finite")
            object.__setattr__(self, "derivs_end", ends)
            ends.setflags(write=False)
        samples.setflags(write=False)
        if self.derivs is not None:
            self.derivs.setflags(write=False)

    # -- basic geometry -------------------------------------------------

    @property
    def n_dim(self) -> int:
        return self.samples.shape[1]

    @property
    def n_cells(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def thetas(self) -> np.ndarray:
        return -self.span + self.grid_step * np.arange(self.samples.shape[0])

    @property
    def front(self) -> np.ndarray:
        """State at theta = 0."""
        return self.samples[-1]

    # -- constructors ---------------------------------------------------

    @classmethod
    def constant(cls, value, span: float, grid_step: float) -> "HistorySegment":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        count = round(span / grid_step) + 1 if span > 0 else 1
        samples = np.tile(value, (count, 1))
        return cls(span, grid_step, samples, np.zeros_like(samples))

    @classmethod
    def zero(cls, n_dim: int, span: float, grid_step: float) -> "HistorySegment":
        return cls.constant(np.zeros(n_dim), span, grid_step)

    @classmethod
    def from_function(
        cls,
        fn: Callable[[float], np.ndarray],
        span: float,
        grid_step: float,
        dfn: Optional[Callable[[float], np.ndarray]] = None,
    ) -> "HistorySegment":
        count = round(span / grid_step) + 1 if span > 0 else 1
        thetas = -span + grid_step * np.arange(count)
        samples = np.vstack([np.atleast_1d(fn(t)) for t in thetas])
        derivs = None
        if dfn is not None:
            derivs = np.vstack([np.atleast_1d(dfn(t)) for t in thetas])
        return cls(span, grid_step, samples, derivs)

    # -- dense evaluation ----------------------------------------------

    def value(self, theta: float) -> np.ndarray:
        """Interpolated state at theta in [-span, 0]; node-exact at grid nodes."""
        if theta > _NODE_SNAP * max(1.0, self.span) or theta < -self.span * (
            1 + _NODE_SNAP
        ) - _NODE_SNAP:
            raise ValueError(f"theta={theta} outside [-{self.span}, 0]")
        if self.span == 0:
            return self.samples[0]
        pos = (theta + self.span) / self.grid_step
        node = round(pos)
        if abs(pos - node) < _NODE_SNAP and 0 <= node <= self.n_cells:
            return self.samples[int(node)]
        j = min(int(np.floor(pos)), self.n_cells - 1)
        j = max(j, 0)
        s = pos - j
        y0, y1 = self.samples[j], self.samples[j + 1]
        if self.derivs is None:
            return (1 - s) * y0 + s * y1
        g = self.grid_step
        m0 = self.derivs[j]
        m1 = self.derivs_end[j] if self.derivs_end is not None else self.derivs[j + 1]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * y0 + g * h10 * m0 + h01 * y1 + g * h11 * m1

    # ``interpolate`` is the contract name; ``value`` reads better at call sites.
    interpolate = value

    def derivative(self, theta: float) -> np.ndarray:
        """Derivative of the dense interpolant at theta."""
        if self.span == 0:
            if self.derivs is not None:
                return self.derivs[0]
            return np.zeros(self.n_dim)
        pos = (theta + self.span) / self.grid_step
        j = min(max(int(np.floor(pos + _NODE_SNAP)), 0), self.n_cells - 1)
        s = pos - j
        g = self.grid_step
        y0, y1 = self.samples[j], self.samples[j + 1]
        if self.derivs is None:
            return (y1 - y0) / g
        m0 = self.derivs[j]
        m1 = self.derivs_end[j] if self.derivs_end is not None else self.derivs[j + 1]
        dh00 = 6 * s * s - 6 * s
        dh10 = 3 * s * s - 4 * s + 1
        dh01 = -6 * s * s + 6 * s
        dh11 = 3 * s * s - 2 * s
        return (dh00 * y0 + g * dh10 * m0 + dh01 * y1 + g * dh11 * m1) / g

    def sup_norm(self) -> float:
        """Max of |x(theta)| over the dense interpolant.

        With Hermite dense output the max can sit strictly inside a cell, so
        interior critical points of each component cubic are checked as well.
        """
        node_max = float(np.max(np.linalg.norm(self.samples, axis=1)))
        if self.derivs is None or self.n_cells == 0:
            return node_max
        g = self.grid_step
        y0 = self.samples[:-1]
        y1 = self.samples[1:]
        m0 = self.derivs[:-1] * g
        m1 = (self.derivs_end if self.derivs_end is not None else self.derivs[1:]) * g
        # p'(s) = 3 a s^2 + 2 b s + c with cubic p = a s^3 + b s^2 + c s + d
        a = 2 * (y0 - y1) + m0 + m1
        b = 3 * (y1 - y0) - 2 * m0 - m1
        c = m0
        best = node_max
        disc = b * b - 3 * a * c
        cells, comps = np.where(disc > 0)
        for j, i in zip(cells, comps):
            aa, bb, cc = a[j, i], b[j, i], c[j, i]
            root = np.sqrt(disc[j, i])
            if abs(aa) < 1e-300:
                cands = [-cc / (2 * bb)] if abs(bb) > 0 else []
            else:
                cands = [(-bb + root) / (3 * aa), (-bb - root) / (3 * aa)]
            for s in cands:
                if 0.0 < s < 1.0:
                    theta = -self.span + (j + s) * g
                    best = max(best, float(np.linalg.norm(self.value(theta))))
        return best

    # -- operators ------------------------------------------------------

    def splice_front_ray(self, v, h: float) -> "HistorySegment":
        """Shift the window back by h and splice the ray x(0) + (theta+h) v
        onto (-h, 0].  Requires 0 <= h < span with h a grid multiple."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if h < 0 or h >= self.span:
            raise ValueError(f"front splice needs 0 <= h < span, got h={h}")
        k = h / self.grid_step
        if abs(k - round(k)) > _NODE_SNAP:
            raise ValueError("h must be a multiple of grid_step")
        k = int(round(k))
        if k == 0:
            return self
        samples = np.empty_like(self.samples)
        samples[:-k] = self.samples[k:]
        ray_thetas = self.thetas[-k:]
        samples[-k:] = self.front + (ray_thetas + h)[:, None] * v
        derivs = None
        ends = None
        if self.derivs is not None:
            derivs = np.empty_like(self.derivs)
            derivs[:-k] = self.derivs[k:]
            derivs[-k:] = v
            if self.derivs_end is not None:
                # node derivatives are right-limits: the ray-start node
                # carries the ray slope, the cell to its left keeps the old
                # left-limit end derivative
                derivs[-(k + 1)] = v
                ends = np.empty_like(self.derivs_end)
                ends[:-k] = self.derivs_end[k:]
                ends[-k:] = v
        return HistorySegment(self.span, self.grid_step, samples, derivs, ends)

    def modulus_of_continuity(self, h: float) -> float:
        """sup |x(0)-x(theta)| over theta in [-min(h, span), 0], plus
        sup |x(theta+h)-x(theta)| over theta in [-span, -h] when h < span."""
        if h < 0:
            raise ValueError("h must be non-negative")
        if h == 0 or self.span == 0:
            return 0.0
        hc = min(h, self.span)
        thetas = self.thetas
        front_zone = thetas[thetas >= -hc - _NODE_SNAP]
        cands = np.concatenate([front_zone, [-hc]])
        front_gap = max(
            float(np.linalg.norm(self.front - self.value(t))) for t in cands
        )
        shift_gap = 0.0
        if h < self.span:
            base = thetas[thetas <= -h + _NODE_SNAP]
            for t in base:
                gap = float(np.linalg.norm(self.value(min(t + h, 0.0)) - self.value(t)))
                shift_gap = max(shift_gap, gap)
        return front_gap + shift_gap

    # -- serialization --------------------------------------------------

    def to_csv(self) -> str:
        """Columns theta, x1..xn (and dx1..dxn when present), theta ascending."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        n = self.n_dim
        header = ["theta"] + [f"x{i + 1}" for i in range(n)]
        if self.derivs is not None:
            header += [f"dx{i + 1}" for i in range(n)]
        writer.writerow(header)
        for idx, theta in enumerate(self.thetas):
            row = [repr(float(theta))] + [repr(float(v)) for v in self.samples[idx]]
            if self.derivs is not None:
                row += [repr(float(v)) for v in self.derivs[idx]]
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "HistorySegment":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        n = sum(1 for c in header if c.startswith("x"))
        has_derivs = any(c.startswith("dx") for c in header)
        if has_derivs:
            n = (len(header) - 1) // 2
        thetas, samples, derivs = [], [], []
        for row in reader:
            if not row:
                continue
            thetas.append(float(row[0]))
            samples.append([float(v) for v in row[1 : 1 + n]])
            if has_derivs:
                derivs.append([float(v) for v in row[1 + n : 1 + 2 * n]])
        thetas = np.asarray(thetas)
        span = -thetas[0]
        if len(thetas) > 1:
            grid_step = float(thetas[1] - thetas[0])
        else:
            grid_step = 1.0
        return cls(
            span,
            grid_step,
            np.asarray(samples),
            np.asarray(derivs) if has_derivs else None,
        )


def sup_norm(x: HistorySegment) -> float:
    return x.sup_norm()


def interpolate(x: HistorySegment, theta: float) -> np.ndarray:
    return x.value(theta)


def splice_front_ray(x: HistorySegment, v, h: float) -> HistorySegment:
    return x.splice_front_ray(v, h)


def modulus_of_continuity(x: HistorySegment, h: float) -> float:
    return x.modulus_of_continuity(h)
