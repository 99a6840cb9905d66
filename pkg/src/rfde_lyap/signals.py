"""Disturbance inputs: right-continuous, piecewise-continuous maps into a box.

Signals are evaluated with the right-limit convention everywhere: at a
declared discontinuity the stored value is the limit from the right.  A
``side="left"`` query is available for integrator stages that end exactly on
a switch.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class DisturbanceBox:
    """Axis-aligned box of admissible disturbance values."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape:
            raise ValueError("lower/upper must have the same shape")
        if np.any(lower > upper):
            raise ValueError("box needs lower <= upper per coordinate")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        lower.setflags(write=False)
        upper.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def contains(self, value, tol: float = 1e-12) -> bool:
        value = np.atleast_1d(np.asarray(value, dtype=float))
        if value.shape != self.lower.shape:
            return False
        pad = tol * (1 + np.maximum(np.abs(self.lower), np.abs(self.upper)))
        return bool(
            np.all(value >= self.lower - pad) and np.all(value <= self.upper + pad)
        )

    def vertices(self) -> list[np.ndarray]:
        """All corner points (finite coordinates required)."""
        if not np.all(np.isfinite(self.lower)) or not np.all(np.isfinite(self.upper)):
            raise ConfigurationError("vertices need a bounded box")
        corners = [np.array([], dtype=float)]
        for lo, hi in zip(self.lower, self.upper):
            vals = [lo] if lo == hi else [lo, hi]
            corners = [np.append(c, v) for c in corners for v in vals]
        return corners

    def clip(self, value) -> np.ndarray:
        return np.clip(np.atleast_1d(np.asarray(value, dtype=float)), self.lower, self.upper)

    def to_json(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "DisturbanceBox":
        return cls(np.asarray(data["lower"]), np.asarray(data["upper"]))


class DisturbanceSignal:
    """Right-continuous piecewise-continuous map t -> d(t) in a box.

    ``pieces`` is an ordered list of (start_time, evaluator); piece k is in
    force on [start_k, start_{k+1}).  Discontinuity times are the interior
    piece boundaries.
    """

    def __init__(self, box: DisturbanceBox, pieces, description=None):
        if not pieces:
            raise ConfigurationError("signal needs at least one piece")
        starts = [float(s) for s, _ in pieces]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("piece start times must be strictly increasing")
        self.box = box
        self._starts = starts
        self._funcs = [f for _, f in pieces]
        self.discontinuity_times = tuple(starts[1:])
        self.description = description or {"kind": "custom"}

    def value(self, t: float, side: str = "right") -> np.ndarray:
        """d(t) with right-limit convention; side="left" gives the pre-switch
        value when t is exactly a piece boundary."""
        tol = 1e-9 * (1.0 + abs(t))
        if side == "right":
            idx = bisect_right(self._starts, t + tol) - 1
        else:
            idx = bisect_left(self._starts, t - tol) - 1
        idx = max(idx, 0)
        return np.atleast_1d(np.asarray(self._funcs[idx](t), dtype=float))

    __call__ = value

    def shift(self, t0: float) -> "DisturbanceSignal":
        """Time-advanced signal t -> d(t + t0)."""
        if t0 < 0:
            raise ConfigurationError("shift offset must be non-negative")
        if t0 == 0:
            return self
        pieces = []
        for start, fn in zip(self._starts, self._funcs):
            new_start = max(start - t0, 0.0)
            evaluator = (lambda f: lambda t: f(t + t0))(fn)
            if pieces and pieces[-1][0] == new_start:
                pieces[-1] = (new_start, evaluator)
            else:
                pieces.append((new_start, evaluator))
        desc = {"kind": "shifted", "offset": t0, "base": self.description}
        return DisturbanceSignal(self.box, pieces, desc)

    def concat(self, t_split: float, tail: "DisturbanceSignal") -> "DisturbanceSignal":
        """This signal on [0, t_split), then ``tail`` restarted at t_split.

        Right-continuity holds at the split: the value there is tail's value
        at its own time origin.
        """
        if t_split < 0:
            raise ConfigurationError("t_split must be non-negative")
        if t_split == 0:
            return tail
        pieces = [
            (s, f)
            for s, f in zip(self._starts, self._funcs)
            if s < t_split
        ]
        for start, fn in zip(tail._starts, tail._funcs):
            evaluator = (lambda f: lambda t: f(t - t_split))(fn)
            pieces.append((start + t_split, evaluator))
        desc = {
            "kind": "concat",
            "split": t_split,
            "head": self.description,
            "tail": tail.description,
        }
        return DisturbanceSignal(self.box, pieces, desc)

    def to_json(self) -> dict:
        return dict(self.description, box=self.box.to_json())


def _validate_in_box(box: DisturbanceBox, values) -> list[np.ndarray]:
    out = []
    for v in values:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if not box.contains(v):
            raise ConfigurationError(f"value {v} outside disturbance box")
        out.append(v)
    return out


def make_signal(kind: str, box: DisturbanceBox, **params) -> DisturbanceSignal:
    """Build one of the stock signal families.

    kinds: ``constant`` (value), ``piecewise_constant`` (switch_times,
    values), ``bang_bang`` (switch_times, optional lo/hi vertices, start),
    ``smooth`` (family="sinusoid", amplitude, frequency, phase).
    """
    if kind == "constant":
        (value,) = _validate_in_box(box, [params["value"]])
        return DisturbanceSignal(
            box,
            [(0.0, lambda t, v=value: v)],
            {"kind": "constant", "values": [value.tolist()]},
        )

    if kind == "piecewise_constant":
        switch_times = [float(s) for s in params["switch_times"]]
        if any(b <= a for a, b in zip(switch_times, switch_times[1:])):
            raise ConfigurationError("switch times must be strictly increasing")
        values = _validate_in_box(box, params["values"])
        if len(values) != len(switch_times) + 1:
            raise ConfigurationError("need len(values) == len(switch_times) + 1")
        pieces = [(0.0, lambda t, v=values[0]: v)]
        for s, v in zip(switch_times, values[1:]):
            pieces.append((s, lambda t, vv=v: vv))
        return DisturbanceSignal(
            box,
            pieces,
            {
                "kind": "piecewise_constant",
                "switch_times": switch_times,
                "values": [v.tolist() for v in values],
            },
        )

    if kind == "bang_bang":
        switch_times = [float(s) for s in params["switch_times"]]
        lo = np.asarray(params.get("lo", box.lower), dtype=float)
        hi = np.asarray(params.get("hi", box.upper), dtype=float)
        _validate_in_box(box, [lo, hi])
        first = params.get("start", "high")
        seq = [hi, lo] if first == "high" else [lo, hi]
        values = [seq[i % 2] for i in range(len(switch_times) + 1)]
        return make_signal(
            "piecewise_constant", box, switch_times=switch_times, values=values
        )

    if kind == "smooth":
        family = params.get("family", "sinusoid")
        if family != "sinusoid":
            raise ConfigurationError(f"unknown smooth family {family!r}")
        center = (box.lower + box.upper) / 2
        half = (box.upper - box.lower) / 2
        amplitude = np.minimum(
            np.atleast_1d(np.asarray(params.get("amplitude", half), dtype=float)), half
        )
        freq = float(params.get("frequency", 1.0))
        phase = float(params.get("phase", 0.0))

        def evaluator(t):
            return center + amplitude * np.sin(2 * np.pi * freq * t + phase)

        return DisturbanceSignal(
            box,
            [(0.0, evaluator)],
            {
                "kind": "smooth",
                "family": "sinusoid",
                "amplitude": amplitude.tolist(),
                "frequency": freq,
                "phase": phase,
            },
        )

    raise ConfigurationError(f"unknown signal kind {kind!r}")


def shift(d: DisturbanceSignal, t0: float) -> DisturbanceSignal:
    return d.shift(t0)


def concat(head: DisturbanceSignal, t_split: float, tail: DisturbanceSignal) -> DisturbanceSignal:
    return head.concat(t_split, tail)


def signal_from_json(data: dict) -> DisturbanceSignal:
    box = DisturbanceBox.from_json(data["box"])
    kind = data["kind"]
    params = {k: v for k, v in data.items() if k not in ("kind", "box")}
    if kind == "constant":
        params["value"] = params.pop("values")[0]
    return make_signal(kind, box, **params)


def random_piecewise_signals(
    box: DisturbanceBox,
    count: int,
    t_end: float,
    grid_step: float,
    rng: np.random.Generator,
    max_switches: int = 4,
) -> list[DisturbanceSignal]:
    """Seeded family of piecewise-constant signals with grid-aligned switches."""
    out = []
    n_cells = max(int(round(t_end / grid_step)), 1)
    for _ in range(count):
        k = int(rng.integers(0, max_switches + 1))
        cells = np.sort(rng.choice(np.arange(1, n_cells + 1), size=k, replace=False))
        switch_times = [float(c * grid_step) for c in cells]
        values = [
            box.lower + (box.upper - box.lower) * rng.random(box.dimension)
            for _ in range(k + 1)
        ]
        out.append(
            make_signal(
                "piecewise_constant", box, switch_times=switch_times, values=values
            )
        )
    return out
