"""Scenario orchestration and deterministic artifact emission.

A scenario is a JSON document naming a system, optionally a functional, an
integrator configuration and a list of checks.  Running it produces a
report JSON (stable key order, 17-significant-digit floats, byte-identical
across reruns with the same seed), a plain-text summary, and CSV artifacts
for envelope checks.

Exit codes: 0 all checks passed, 1 at least one check failed, 2 the
scenario is malformed or inconsistent.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import certify, converse, comparison, dini
from .errors import ConfigurationError, ConstructionInvalid, ModelError
from .functionals import Functional, evaluate, functional_from_json, BUILTIN_FUNCTIONALS
from .history import HistorySegment
from .integrator import integrate
from .signals import make_signal, random_piecewise_signals
from .system import BUILTIN_SYSTEMS, system_from_json

REQUIRED_KEYS = ("name", "seed", "system", "checks")


def worker_count() -> int:
    raw = os.environ.get("RFDE_LYAP_THREADS", "1")
    try:
        return max(int(raw), 1)
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Order-preserving map over items, threaded when RFDE_LYAP_THREADS > 1."""
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# canonical JSON
# ---------------------------------------------------------------------------


def _canonical(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not np.isfinite(v):
            return '"%s"' % repr(v)
        return format(v, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        inner = ",\n".join(
            "  " * (indent + 1) + _canonical(v, indent + 1) for v in seq
        )
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = ",\n".join(
            "  " * (indent + 1)
            + json.dumps(str(k))
            + ": "
            + _canonical(obj[k], indent + 1)
            for k in sorted(obj, key=str)
        )
        return "{\n" + inner + "\n" + pad + "}"
    raise ConfigurationError(f"unserializable report value of type {type(obj)!r}")


def emit_report(report: dict, out_dir: Path, extra_files: Optional[dict] = None):
    """Write report.json + summary.txt (+ extra named text files)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(_canonical(report) + "\n")
    lines = [f"scenario: {report['scenario']['name']}"]
    for result in report["results"]:
        for check in result["checks"]:
            status = "PASS" if check["passed"] else "FAIL"
            lines.append(
                f"{status} {result['name']} :: {check['name']} "
                f"(slack {check['worst_slack']:.3e}, tol {check['tolerance']:.3e})"
            )
            if not check["passed"] and check.get("witness"):
                lines.append(
                    f"  witness: {json.dumps(check['witness'], sort_keys=True)}"
                )
                lines.append(
                    f"  replay: rfde-lyap replay {out_dir / 'report.json'} "
                    f"--check {json.dumps(result['name'])}"
                )
    lines.append("overall: " + ("PASS" if report["passed"] else "FAIL"))
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    for name, text in (extra_files or {}).items():
        (out_dir / name).write_text(text)


# ---------------------------------------------------------------------------
# scenario execution
# ---------------------------------------------------------------------------


def load_scenario(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    validate_scenario(data)
    return data


def validate_scenario(data: dict) -> None:
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigurationError(f"scenario is missing required key {key!r}")
    sys_obj = system_from_json(data["system"])
    g = data.get("integrator", {}).get("grid_step")
    if g is not None and sys_obj.delay_span > 0:
        ratio = sys_obj.delay_span / g
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigurationError(
                f"grid_step {g} does not divide delay span {sys_obj.delay_span}"
            )
    for check in data["checks"]:
        if "kind" not in check:
            raise ConfigurationError("every check needs a 'kind'")


def _sample_windows(span, grid_step, n_dim, count, rng, scales=None):
    return certify.random_fourier_histories(
        n_dim, span, grid_step, count, rng, scales=scales
    )


def _run_theorem_suite(sys_obj, V, check, g, seed):
    form = check["form"]
    t_values = check.get("t_values", [V.tau + 1.0, V.tau + 2.0])
    rng = np.random.default_rng([seed, 1])
    samples = []
    for t in t_values:
        for w in _sample_windows(
            V.window_span, g, sys_obj.state_dim, check.get("n_states", 50), rng
        ):
            samples.append((float(t), w))
    reachable = []
    if form.endswith("reachable"):
        for t in t_values:
            for w in certify.generate_reachable_states(
                sys_obj, float(t), V.tau, check.get("n_reachable", 50), g, seed=seed
            ):
                reachable.append((float(t), w))
    report = certify.check_theorem_conditions(
        sys_obj, V, form, samples, reachable,
        tol=check.get("tolerance", certify.DEFAULT_SLACK_TOL),
    )
    return report.to_json(), {}


def _run_envelope(sys_obj, V, check, g, seed):
    env = certify.empirical_envelope(
        sys_obj,
        s_values=check.get("s_values", [0.5, 1.0, 2.0]),
        t0_values=check.get("t0_values", [0.0]),
        horizon=check["horizon"],
        n_histories=check.get("n_histories", 10),
        n_signals=check.get("n_signals", 4),
        grid_step=g,
        seed=seed,
    )
    eps_fraction = check.get("eps_fraction", 1e-3)
    report = certify.CertReport(
        name=f"decay envelope for {sys_obj.name}", metadata=env.metadata
    )
    for i, s in enumerate(env.s_grid):
        settle = env.settle_time(eps_fraction * s, i)
        report.add(
            f"settles_below_{eps_fraction:g}s_at_s={s:g}",
            settle is not None and not env.metadata["blow_ups"],
            float(env.values[i, -1]),
            eps_fraction * s,
            details={"settle_time": settle},
        )
    return report.to_json(), {"envelope.csv": env.to_csv()}


def _run_extinction(sys_obj, V, check, g, seed):
    component = check.get("component", 0)
    tol_scale = check.get("tolerance", 1e-6)
    wait = check.get("wait", 4.0)
    horizon = check.get("horizon", wait + 2.0)
    t0_values = check.get("t0_values", [0.0])
    rng = np.random.default_rng([seed, 2])
    report = certify.CertReport(
        name=f"finite-time extinction for {sys_obj.name}",
        metadata={"component": component, "wait": wait},
    )
    worst = 0.0
    witness = None
    histories = _sample_windows(
        sys_obj.delay_span, g, sys_obj.state_dim, check.get("n_histories", 20), rng
    )
    n_signals = check.get("n_signals", 8)
    for t0 in t0_values:
        signals = certify.batch_signals(sys_obj, n_signals, horizon, g, rng)
        for i, x0 in enumerate(histories):
            scale = 1 + certify.node_norm(x0)
            for d in signals:
                traj = integrate(
                    sys_obj, t0, x0, certify.rebase_signal(d, t0), t0 + horizon, g
                )
                if traj.status != "completed":
                    report.add("no_blow_up", False, np.inf, 0.0,
                               {"t0": t0, "sample_index": i})
                    continue
                mask = traj.times >= t0 + wait + g - 1e-12
                tail = np.abs(traj.states[mask, component])
                peak = float(np.max(tail)) / scale if len(tail) else 0.0
                if peak > worst:
                    worst = peak
                    if peak > tol_scale:
                        witness = {"t0": float(t0), "sample_index": i,
                                   "signal": d.to_json()}
    report.add("component_extinct_after_wait", witness is None, worst, tol_scale,
               witness)
    return report.to_json(), {}


def _run_periodic_reduction(sys_obj, V, check, g, seed):
    rng = np.random.default_rng([seed, 3])
    x0 = _sample_windows(
        max(sys_obj.delay_span, g), g, sys_obj.state_dim, 1, rng, scales=[1.0]
    )[0]
    if sys_obj.delay_span == 0:
        x0 = HistorySegment(0.0, g, x0.samples[-1:], None)
    horizon = check.get("horizon", 5 * sys_obj.period)
    d_base = random_piecewise_signals(sys_obj.box, 1, horizon, g, rng)[0]
    report = certify.periodic_reduction_check(
        sys_obj, x0, d_base, check.get("n_periods", 3), horizon, g,
        tol=check.get("tolerance", 1e-12),
    )
    return report.to_json(), {}


def _run_dominated(sys_obj, V, check, g, seed):
    """V along a trajectory versus the w' = -c w comparison solution."""
    c = check.get("decay_rate") or (V.rho(1.0) if V.rho else 1.0)
    t0 = check.get("t0", 0.0)
    horizon = check.get("horizon", 3.0)
    rng = np.random.default_rng([seed, 4])
    x0 = _sample_windows(sys_obj.delay_span, g, sys_obj.state_dim, 1, rng)[0]
    d = certify.batch_signals(sys_obj, 1, horizon, g, rng)[0]
    traj = integrate(sys_obj, t0, x0, certify.rebase_signal(d, t0), t0 + horizon, g)
    start = t0 + V.tau
    times = traj.times[traj.times >= start - 1e-12]
    v_vals = np.array(
        [
            evaluate(V, t, traj.window_at(t, V.window_span, extend=True))
            for t in times
        ]
    )
    result = comparison.check_dominated(
        times, v_vals, lambda t, w: -c * w, float(v_vals[0]),
        tol=check.get("tolerance", 1e-6),
    )
    report = certify.CertReport(
        name=f"comparison domination for {V.name}",
        metadata={"decay_rate": float(c), "t0": float(t0)},
    )
    report.add(
        "dominated_by_linear_decay", result["dominated"], result["worst_slack"],
        check.get("tolerance", 1e-6),
        None if result["dominated"] else {"first_violation": result["first_violation"]},
    )
    return report.to_json(), {}


def _run_converse(sys_obj, V, check, g, seed):
    rng = np.random.default_rng([seed, 5])
    horizon = check.get("fit_horizon", 4.0)
    histories = _sample_windows(
        max(sys_obj.delay_span, g), g, sys_obj.state_dim,
        check.get("n_fit_histories", 4), rng,
    )
    if sys_obj.delay_span == 0:
        histories = [HistorySegment(0.0, g, h.samples[-1:], None) for h in histories]
    cfg = converse.fit_envelope(
        sys_obj, histories, check.get("t0_values", [0.0]), horizon, g,
        uniform=check.get("uniform", True), seed=seed,
    )
    cfg = converse.ConverseConfig(
        a2=cfg.a2, beta=cfg.beta, q_max=check.get("q_max", 4), grid_step=g, seed=seed
    )
    report = certify.CertReport(
        name=f"converse construction for {sys_obj.name}",
        metadata={"q_max": cfg.q_max},
    )
    # sandwich lower bound, structural by construction
    worst = -np.inf
    states = histories[: check.get("n_states", 3)]
    for q in range(1, cfg.q_max + 1):
        for x in states:
            u = converse.estimate_uq(sys_obj, cfg, q, 0.0, x)
            lower = max(0.0, cfg.a1(converse.window_norm(x)) - 1.0 / q)
            worst = max(worst, lower - u)
    report.add("sandwich_lower_bound", worst <= 0.0, worst, 0.0)
    # decrease under concatenation-consistent sampling
    worst = -np.inf
    d_head = make_signal("constant", sys_obj.box, value=sys_obj.box.upper)
    for q in check.get("q_values", [1, 2]):
        for x in states:
            res = converse.check_decrease(sys_obj, cfg, q, 0.0, x, d_head, g)
            worst = max(worst, res["slack"] / (1 + res["u_left"]))
    report.add("decrease_inequality", worst <= 1e-9, worst, 1e-9)
    # assembled series vanishes along the zero solution
    plain = check.get(
        "plain_weights", sys_obj.lipschitz_modulus is None or sys_obj.growth_zeta is None
    )
    series = converse.assemble_v(sys_obj, cfg, plain_weights=plain)
    zero = HistorySegment.zero(sys_obj.state_dim, sys_obj.delay_span, g)
    vals = [evaluate(series, t, zero) for t in (0.0, 1.0, 2.0)]
    report.add("series_zero_on_zero_solution", max(vals) == 0.0, max(vals), 0.0)
    return report.to_json(), {}


_CHECK_RUNNERS = {
    "theorem_suite": _run_theorem_suite,
    "envelope": _run_envelope,
    "extinction": _run_extinction,
    "periodic_reduction": _run_periodic_reduction,
    "dominated": _run_dominated,
    "converse": _run_converse,
}


def run_scenario(
    path,
    out_dir=None,
    seed: Optional[int] = None,
    grid_step: Optional[float] = None,
    quiet: bool = False,
) -> int:
    """Execute a scenario file; returns the process exit code."""
    try:
        data = load_scenario(path)
        sys_obj = system_from_json(data["system"])
        V = functional_from_json(data["functional"]) if data.get("functional") else None
        used_seed = int(seed if seed is not None else data["seed"])
        g = float(
            grid_step
            if grid_step is not None
            else data.get("integrator", {}).get("grid_step")
            or (sys_obj.delay_span / 100 if sys_obj.delay_span > 0 else 1e-2)
        )
        if sys_obj.delay_span > 0:
            ratio = sys_obj.delay_span / g
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigurationError(
                    f"grid_step {g} does not divide delay span {sys_obj.delay_span}"
                )
        runners = []
        for check in data["checks"]:
            runner = _CHECK_RUNNERS.get(check["kind"])
            if runner is None:
                raise ConfigurationError(f"unknown check kind {check['kind']!r}")
            if check["kind"] in ("theorem_suite", "dominated") and V is None:
                raise ConfigurationError(
                    f"check {check['kind']!r} needs a functional"
                )
            runners.append((runner, check))
    except (ConfigurationError, ModelError, KeyError, OSError) as exc:
        if not quiet:
            print(f"configuration error: {exc}")
        return 2

    try:
        outcomes = parallel_map(
            lambda rc: rc[0](sys_obj, V, rc[1], g, used_seed), runners
        )
    except (ConfigurationError, ModelError) as exc:
        if not quiet:
            print(f"configuration error: {exc}")
        return 2
    except ConstructionInvalid as exc:
        if not quiet:
            print(f"construction invalid: {exc}")
        return 1

    results = [r for r, _ in outcomes]
    extra = {}
    for _, files in outcomes:
        extra.update(files)
    report = {
        "scenario": {
            "name": data["name"],
            "seed": used_seed,
            "grid_step": g,
            "path": str(path),
            "system": data["system"],
            "functional": data.get("functional"),
            "checks": data["checks"],
        },
        "results": results,
        "passed": all(r["passed"] for r in results),
    }
    target = Path(out_dir if out_dir is not None else data.get("output", "reports"))
    emit_report(report, target, extra)
    if not quiet:
        print((target / "summary.txt").read_text(), end="")
    return 0 if report["passed"] else 1


def replay(report_path, check_name: str, quiet: bool = False) -> int:
    """Re-run one named check from an emitted report and compare slacks."""
    try:
        report = json.loads(Path(report_path).read_text())
        scenario = report["scenario"]
        sys_obj = system_from_json(scenario["system"])
        V = (
            functional_from_json(scenario["functional"])
            if scenario.get("functional")
            else None
        )
        g = float(scenario["grid_step"])
        seed = int(scenario["seed"])
        recorded = next(
            r for r in report["results"] if r["name"] == check_name
        )
        check = None
        for cfg, result in zip(scenario["checks"], report["results"]):
            if result["name"] == check_name:
                check = cfg
                break
        if check is None:
            raise ConfigurationError(f"check {check_name!r} not found in report")
        fresh, _ = _CHECK_RUNNERS[check["kind"]](sys_obj, V, check, g, seed)
    except (ConfigurationError, ModelError, KeyError, OSError, StopIteration) as exc:
        if not quiet:
            print(f"replay error: {exc}")
        return 2
    same = [
        (a["name"], a["worst_slack"] == b["worst_slack"])
        for a, b in zip(recorded["checks"], fresh["checks"])
    ]
    if not quiet:
        for name, ok in same:
            print(f"{'MATCH' if ok else 'DIFFER'} {name}")
    return 0 if all(ok for _, ok in same) else 1


def list_systems() -> list[str]:
    return list(BUILTIN_SYSTEMS)


def list_functionals() -> list[str]:
    return list(BUILTIN_FUNCTIONALS)
