"""Batch front-end: scenario runs, certificates, rate fits, sweeps, oracle.

Exit codes encode the scientific outcome so sweep harnesses can classify
without parsing JSON:

    0  completed (or command succeeded)
    1  configuration error
    2  wave breaking detected
    3  resolution exhausted (tail criterion fired without slope collapse)

The ``MUHS_THREADS`` environment variable caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import itertools
import json
import os
import sys

import numpy as np

from . import analysis, dynamics, lagrange, muops
from .field import (
    PeriodicField,
    evaluate_coeffs,
    field_from_mode_list,
    field_to_csv_text,
    random_band_limited,
    rfft_coeffs,
)
from .fileio import atomic_write_json, atomic_write_text

_OUTCOME_EXIT = {
    dynamics.Outcome.COMPLETED: 0,
    dynamics.Outcome.BREAKING_DETECTED: 2,
    dynamics.Outcome.RESOLUTION_EXHAUSTED: 3,
}


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _fail(message: str) -> int:
    print(f"config error: {message}", file=sys.stderr)
    return 1


def _load_json(path: str):
    try:
        with open(path) as handle:
            return json.load(handle)
    except OSError as exc:
        raise ValueError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _load_scenario(path: str) -> dynamics.Scenario:
    obj = _load_json(path)
    try:
        return dynamics.Scenario.from_dict(obj)
    except dynamics.ScenarioError as exc:
        raise ValueError(f"{path}: field '{exc.field_name}': {exc}") from exc


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _execute_run(scenario: dynamics.Scenario, out_dir: str,
                 flow_particles: int = 64) -> dict:
    """Run one scenario and write diagnostics.csv/final_state.csv/report.json."""
    os.makedirs(out_dir, exist_ok=True)
    result = dynamics.run(scenario)
    u0 = scenario.initial_field()
    certificates = analysis.certify(u0, scenario.lam)
    bound = certificates.breaking_bound()

    blowup = None
    if result.outcome is not dynamics.Outcome.COMPLETED:
        try:
            blowup = analysis.fit_blowup_rate(
                result.records, result.t_detect, result.m_last,
                scenario.lam, bound_used=bound).to_dict()
        except analysis.InsufficientSamplesError:
            blowup = {
                "t_detect": result.t_detect,
                "m_last": result.m_last,
                "t_estimate": result.t_detect + 2.0 / abs(result.m_last)
                if result.m_last < 0 else None,
                "rate_fit": None,
                "bound_used": bound,
                "respects_bound": None,
            }

    flow_check = None
    if result.snapshots is not None:
        check = lagrange.verify_flow_conservation(u0, result, flow_particles)
        y0_coef = rfft_coeffs(muops.apply_helmholtz(u0).samples)
        (y0_seeds,) = evaluate_coeffs([y0_coef], u0.n, check.seeds)
        atomic_write_text(os.path.join(out_dir, "flow_map.csv"),
                          lagrange.flow_map_csv_text(check, scenario.lam, y0_seeds))
        flow_check = {"particles": flow_particles, "residual": check.residual}

    report = {
        "scenario": scenario.to_dict(),
        "outcome": result.outcome.value,
        "t_final": result.state_final.t,
        "t_detect": result.t_detect,
        "m_last": result.m_last,
        "mu0": result.mu0,
        "mu1": result.mu1,
        "certificates": certificates.to_dict(),
        "blowup": blowup,
        "flow_check": flow_check,
    }
    atomic_write_text(os.path.join(out_dir, "diagnostics.csv"),
                      dynamics.diagnostics_to_csv_text(result.records))
    atomic_write_text(os.path.join(out_dir, "final_state.csv"),
                      field_to_csv_text(result.state_final.u))
    atomic_write_json(os.path.join(out_dir, "report.json"), report)
    return report


def cmd_run(args) -> int:
    try:
        scenario = _load_scenario(args.config)
        if args.snapshot_stride is not None:
            scenario = dynamics.Scenario(**{**_scenario_kwargs(scenario),
                                            "snapshot_stride": args.snapshot_stride})
            scenario.validate()
    except ValueError as exc:
        return _fail(str(exc))
    report = _execute_run(scenario, args.out, flow_particles=args.flow_particles)
    print(f"outcome: {report['outcome']}  t_final: {report['t_final']:.6g}")
    if report["t_detect"] is not None:
        print(f"t_detect: {report['t_detect']:.6g}  min_ux: {report['m_last']:.6g}")
    print(f"outputs written to {args.out}")
    return _OUTCOME_EXIT[dynamics.Outcome(report["outcome"])]


def _scenario_kwargs(s: dynamics.Scenario) -> dict:
    return {
        "lam": s.lam, "initial": s.initial, "grid_n": s.grid_n, "t_end": s.t_end,
        "dt_init": s.dt_init, "dt_min": s.dt_min, "safety": s.safety,
        "m_stop": s.m_stop, "tail_stop": s.tail_stop,
        "output_stride": s.output_stride, "snapshot_stride": s.snapshot_stride,
    }


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def _print_certificates(report: analysis.CertificateReport) -> None:
    def verdict(flag):
        return "yes" if flag else "no"

    def bound(b):
        return f"{b:.6g}" if b is not None else "-"

    print(f"mu0 = {report.mu0:.6g}   mu1 = {report.mu1:.6g}   "
          f"K_cubic = {report.k_cubic:.6g}   K_slope = {report.k_slope:.6g}")
    print(f"{'certificate':<18}{'lhs':>14}{'threshold':>14}{'fires':>8}{'t_bound':>12}")
    c = report.cubic
    print(f"{'cubic-integral':<18}{c.lhs:>14.6g}{c.threshold:>14.6g}"
          f"{verdict(c.fires):>8}{bound(c.t_bound):>12}")
    s = report.slope
    print(f"{'slope-infimum':<18}{s.lhs:>14.6g}{s.threshold:>14.6g}"
          f"{verdict(s.fires):>8}{bound(s.t_bound):>12}")
    o = report.odd_point
    odd_lhs = f"{o.lhs:.6g}" if o.is_odd else "(not odd)"
    print(f"{'odd-point':<18}{odd_lhs:>14}{o.threshold:>14.6g}"
          f"{verdict(o.fires):>8}{bound(o.t_bound):>12}")
    m = report.momentum_sign
    print(f"momentum sign:     y0 in [{m.y0_min:.6g}, {m.y0_max:.6g}]  "
          f"sign-definite: {verdict(m.sign_definite)}")
    d = report.third_derivative
    print(f"third derivative:  |u0'''| = {d.norm_d3:.6g}  bound = {d.bound:.6g}  "
          f"certifies global: {verdict(d.certifies)}")


def cmd_certify(args) -> int:
    try:
        scenario = _load_scenario(args.config)
    except ValueError as exc:
        return _fail(str(exc))
    report = analysis.certify(scenario.initial_field(), scenario.lam)
    _print_certificates(report)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# rate
# ---------------------------------------------------------------------------

def cmd_rate(args) -> int:
    try:
        with open(args.diagnostics) as handle:
            records = dynamics.diagnostics_from_csv_text(handle.read())
    except (OSError, ValueError) as exc:
        return _fail(f"{args.diagnostics}: {exc}")
    if not records:
        return _fail(f"{args.diagnostics}: no records")
    t_detect = args.t_detect if args.t_detect is not None else records[-1].t
    m_last = args.m_last if args.m_last is not None else records[-1].min_ux
    try:
        report = analysis.fit_blowup_rate(records, t_detect, m_last,
                                          args.lam, bound_used=args.bound)
    except analysis.InsufficientSamplesError as exc:
        print(f"rate fit failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

_SCALAR_AXES = {"lambda", "t_end", "dt_init", "dt_min", "safety",
                "m_stop", "tail_stop"}
_INT_AXES = {"grid_n", "output_stride", "snapshot_stride"}


def _apply_override(base: dict, param: str, value) -> dict:
    cell = json.loads(json.dumps(base))  # deep copy of plain JSON
    if param == "amplitude":
        init = cell["initial"]
        init["mean"] = init.get("mean", 0.0) * value
        for entry in init.get("modes", []):
            entry["cos"] = entry.get("cos", 0.0) * value
            entry["sin"] = entry.get("sin", 0.0) * value
    elif param in _SCALAR_AXES:
        cell[param] = float(value)
    elif param in _INT_AXES:
        cell[param] = int(value)
    else:
        raise ValueError(f"unknown sweep axis '{param}'")
    return cell


def _cell_name(index: int, params: dict) -> str:
    parts = [f"{k}={v:.6g}" for k, v in params.items()]
    return f"cell_{index:04d}__" + "__".join(parts)


def _run_cell(cell) -> dict:
    index, name, scenario_dict, params, out_dir = cell
    row = {"cell": name, **{k: _fmt(v) for k, v in params.items()}}
    try:
        scenario = dynamics.Scenario.from_dict(scenario_dict)
        report = _execute_run(scenario, os.path.join(out_dir, name))
        row["outcome"] = report["outcome"]
        row["t_detect"] = _fmt(report["t_detect"])
        slope = ""
        if report["blowup"] and report["blowup"].get("rate_fit"):
            slope = _fmt(report["blowup"]["rate_fit"]["slope"])
        row["rate_slope"] = slope
        row["error"] = ""
    except Exception as exc:  # record per-cell failures, keep sweeping
        row.update(outcome="ERROR", t_detect="", rate_slope="", error=str(exc))
    return {"index": index, "row": row}


def cmd_sweep(args) -> int:
    try:
        config = _load_json(args.config)
        if "base" in config:
            base = config["base"]
        elif "base_path" in config:
            base = _load_json(os.path.join(os.path.dirname(args.config),
                                           config["base_path"]))
        else:
            raise ValueError(f"{args.config}: sweep config needs 'base' or 'base_path'")
        dynamics.Scenario.from_dict(base)  # validate before expanding
        axes = config.get("axes", [])
        if not axes:
            raise ValueError(f"{args.config}: sweep config needs a non-empty 'axes' list")
        names = [ax["param"] for ax in axes]
        grids = [ax["values"] for ax in axes]
    except (ValueError, KeyError, TypeError, dynamics.ScenarioError) as exc:
        return _fail(str(exc))

    cells = []
    for index, combo in enumerate(itertools.product(*grids)):
        params = dict(zip(names, combo))
        scenario_dict = base
        try:
            for param, value in params.items():
                scenario_dict = _apply_override(scenario_dict, param, value)
        except ValueError as exc:
            return _fail(str(exc))
        cells.append((index, _cell_name(index, params), scenario_dict, params, args.out))

    jobs = max(1, args.jobs)
    env_cap = os.environ.get("MUHS_THREADS")
    if env_cap:
        jobs = min(jobs, max(1, int(env_cap)))

    os.makedirs(args.out, exist_ok=True)
    if jobs == 1:
        results = [_run_cell(cell) for cell in cells]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))

    results.sort(key=lambda r: r["index"])
    columns = ["cell", *names, "outcome", "t_detect", "rate_slope", "error"]
    lines = [",".join(columns)]
    for res in results:
        lines.append(",".join(str(res["row"].get(col, "")) for col in columns))
    atomic_write_text(os.path.join(args.out, "index.csv"), "\n".join(lines) + "\n")

    failures = [r for r in results if r["row"]["outcome"] == "ERROR"]
    print(f"{len(results)} cells, {len(failures)} failures; index written to "
          f"{os.path.join(args.out, 'index.csv')}")
    return 0 if not failures else 1


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def cmd_oracle(args) -> int:
    fields: list[PeriodicField] = []
    if args.field:
        try:
            obj = _load_json(args.field)
            fields.append(field_from_mode_list(obj, args.n))
        except ValueError as exc:
            return _fail(str(exc))
    else:
        rng = np.random.default_rng(args.seed)
        fields = [random_band_limited(args.n, rng) for _ in range(args.count)]

    worst_dev = 0.0
    worst_identity = 0.0
    for w in fields:
        spectral = muops.helmholtz_solve_spectral(w)
        quadrature = muops.helmholtz_solve_quadrature(w)
        worst_dev = max(worst_dev,
                        float(np.max(np.abs(spectral.samples - quadrature.samples))))
        worst_identity = max(worst_identity,
                             muops.inverse_second_derivative_residual(w))
    ok = worst_dev <= args.tol and worst_identity <= 1e-10
    print(f"fields checked: {len(fields)} at n={args.n}")
    print(f"max |spectral - quadrature| = {worst_dev:.3e} (tol {args.tol:g})")
    print(f"max inverse-curvature identity residual = {worst_identity:.3e} (tol 1e-10)")
    print("oracle check PASSED" if ok else "oracle check FAILED")
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="muhs",
        description="simulate and verify the weakly dissipative muHS equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one scenario and write outputs")
    p_run.add_argument("--config", required=True, help="scenario JSON file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--snapshot-stride", type=int, default=None,
                       dest="snapshot_stride",
                       help="store spectra every N accepted steps (enables flow check)")
    p_run.add_argument("--flow-particles", type=int, default=64,
                       help="particles for the flow conservation check")
    p_run.set_defaults(func=cmd_run)

    p_cert = sub.add_parser("certify", help="evaluate certificates on the initial data")
    p_cert.add_argument("--config", required=True)
    p_cert.set_defaults(func=cmd_certify)

    p_rate = sub.add_parser("rate", help="fit the blow-up rate from a diagnostics CSV")
    p_rate.add_argument("--diagnostics", required=True)
    p_rate.add_argument("--lambda", required=True, type=float, dest="lam")
    p_rate.add_argument("--t-detect", type=float, default=None, dest="t_detect")
    p_rate.add_argument("--m-last", type=float, default=None, dest="m_last")
    p_rate.add_argument("--bound", type=float, default=None)
    p_rate.set_defaults(func=cmd_rate)

    p_sweep = sub.add_parser("sweep", help="run a Cartesian parameter sweep")
    p_sweep.add_argument("--config", required=True, help="sweep JSON file")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    p_oracle = sub.add_parser(
        "oracle", help="cross-check the spectral inverse against quadrature")
    p_oracle.add_argument("--field", default=None, help="mode-list JSON file")
    p_oracle.add_argument("--n", type=int, default=256)
    p_oracle.add_argument("--count", type=int, default=20)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--tol", type=float, default=1e-6)
    p_oracle.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return args.func(args)


def entry() -> None:
    sys.exit(main())
