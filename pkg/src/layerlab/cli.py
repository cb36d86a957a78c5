"""Experiment runner: config parsing, subcommands, deterministic outputs.

Subcommands: ode, simulate, envelope-check, verify, sweep, report.
Exit codes: 0 all checks passed, 1 check failures, 2 configuration or
runtime errors.  Output tree: <out>/<eps>/snapshots.csv + report.json per
epsilon, <out>/sweep.csv + sweep.json at the sweep level, each next to an
effective-config echo.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from layerlab.config import SCHEMA_VERSION, ConfigError, RunConfig, parse_config
from layerlab.envelope import (CalibrationError, GenerationClock,
                               calibrate_Cstar, eval_w, generation_time,
                               residual_L)
from layerlab.geometry import build_u0, gamma0_locate
from layerlab.ode_kernel import (after_time_check, find_CY, fit_curvature_bound,
                                 fit_linearization, flow_targets)
from layerlab.output import (REPORT_SCHEMA, SWEEP_CSV_SCHEMA, write_csv,
                             write_json, write_snapshots_csv)
from layerlab.solver import (BoundViolationError, SolverConfig,
                             default_snapshot_times, run)
from layerlab.verify import (classify_bands, convergence_study,
                             LayerNotFoundError, measure_width,
                             optimality_scan, RadialTestFunction,
                             sandwich_check, weak_residual)


def _eps_dirname(eps: float) -> str:
    return format(eps, "g")


def run_eps_pipeline(cfg: RunConfig, eps: float,
                     out_dir: Path | None = None) -> dict:
    """Simulate, calibrate, and verify one epsilon; returns the report dict."""
    t_start = time.perf_counter()
    reaction = cfg.reaction()
    grid = cfg.grid()
    if grid.mode != "radial":
        raise ConfigError("verification pipeline requires grid.mode = radial")
    profile = cfg.profile()
    vp = cfg.verify_params()
    vp.validate_against(reaction.a)
    mu = reaction.mu()
    clock = GenerationClock(mu=mu, eps=eps)
    t_gen = clock.t_eps
    t_end = cfg["solver.t_end_factor"] * t_gen

    u0 = build_u0(grid, profile, a=reaction.a)
    r0 = gamma0_locate(profile, reaction.a)
    snap_times = default_snapshot_times(t_gen, clock.t_eps_b, t_end)
    scfg = SolverConfig(m=cfg["solver.m"], eps=eps,
                        cfl_safety=cfg["solver.cfl_safety"], t_end=t_end,
                        snapshot_times=snap_times,
                        substep_safety=cfg["solver.substep_safety"])
    report: dict = {
        "schema_version": REPORT_SCHEMA,
        "eps": eps,
        "t_gen": t_gen,
        "mu": mu,
        "a": reaction.a,
        "ncells": grid.ncells,
    }
    checks: dict[str, bool] = {}
    runtimes: dict[str, float] = {}

    t0 = time.perf_counter()
    result = run(scfg, reaction, grid, u0)
    runtimes["simulate"] = time.perf_counter() - t0
    report["steps"] = result.steps
    report["solution_min"] = result.min_value
    report["solution_max"] = result.max_value
    checks["bounds_ok"] = (result.min_value >= 0.0
                           and result.max_value <= max(1.0, profile.c0) + 1e-12)
    checks["boundary_inactive"] = result.boundary_inactive

    t0 = time.perf_counter()
    try:
        p, rec = calibrate_Cstar(
            profile, reaction, eps, m=cfg["solver.m"], ndim=grid.ndim,
            domain_radius=grid.radius, ladder_base=cfg["envelope.ladder_base"],
            ladder_rungs=cfg["envelope.ladder_rungs"],
            base_cfg=cfg.kernel_cfg())
        report["Cstar"] = rec.Cstar
        report["calibration"] = {
            "margin_minus": rec.margin_minus,
            "margin_plus": rec.margin_plus,
            "n_points": rec.n_points,
            "xi_in_paper_range": rec.xi_in_paper_range,
            "rungs_tried": rec.rungs_tried,
        }
        checks["calibrated"] = True
    except CalibrationError as exc:
        report["Cstar"] = None
        report["calibration"] = {"error": str(exc)}
        checks["calibrated"] = False
        p = None
    runtimes["calibrate"] = time.perf_counter() - t0

    if p is not None:
        t0 = time.perf_counter()
        sw = sandwich_check(result.snapshots, p, profile, reaction, t_gen,
                            vp.sandwich_tol, cfg.kernel_cfg())
        runtimes["sandwich"] = time.perf_counter() - t0
        report["sandwich_violations"] = sw.violations
        report["sandwich_points"] = sw.n_points
        report["sandwich_worst_margin"] = sw.worst_margin
        checks["sandwich_ok"] = sw.violations == 0
    else:
        report["sandwich_violations"] = None
        checks["sandwich_ok"] = False

    snap_g = min(result.snapshots, key=lambda s: abs(s.t - t_gen))
    bands = classify_bands(snap_g, u0, reaction, vp, eps)
    report["M0"] = bands.M0
    report["bands"] = {
        "range_ok": bands.range_ok,
        "n_upper_cells": bands.n_upper_cells,
        "n_lower_cells": bands.n_lower_cells,
        "violations": bands.violations,
    }
    checks["range_ok"] = bands.range_ok
    checks["bands_ok"] = bands.M0 is not None

    try:
        width = measure_width(snap_g, vp)
        report["width_eta"] = width.width
        report["width_inner_r"] = width.r_inner
        report["width_outer_r"] = width.r_outer
        checks["width_ok"] = True
    except LayerNotFoundError as exc:
        report["width_eta"] = None
        report["width_error"] = str(exc)
        checks["width_ok"] = False

    opt = optimality_scan(result.snapshots, r0, reaction, vp, eps, t_gen,
                          u0_field=u0, M0=bands.M0)
    report["Cthick_fit"] = opt.Cthick
    report["t_min"] = opt.t_min
    report["b_fit"] = opt.b_fit
    report["probe"] = {
        "b": vp.probe_b,
        "time": opt.probe_time,
        "value": opt.probe_value,
        "ok": opt.probe_ok,
    }
    report["optimality_notes"] = opt.notes
    checks["optimality_ok"] = (
        opt.Cthick is not None and opt.b_fit is not None
        and 0.0 <= opt.b_fit and opt.t_min <= t_gen * (1.0 + 1e-12))
    # probe is inapplicable when t_gen(b) <= 0 (|ln eps| <= probe_b)
    checks["probe_ok"] = (bool(opt.probe_ok) if opt.probe_ok is not None
                          else True)

    tfs = [RadialTestFunction(0, grid.radius), RadialTestFunction(2, grid.radius),
           RadialTestFunction(3, grid.radius),
           RadialTestFunction(2, grid.radius, decay=1.0 / t_gen)]
    report["weak_residuals"] = weak_residual(result.snapshots, reaction, eps,
                                             cfg["solver.m"], tfs)

    if cfg["sweep.orders"] and grid.ncells % 4 == 0 and grid.ncells >= 256:
        t0 = time.perf_counter()
        fields = {}
        for n_c in (grid.ncells // 4, grid.ncells // 2):
            sub = cfg.with_values(**{"grid.Nr": n_c})
            g_c = sub.grid()
            r_c = run(SolverConfig(m=cfg["solver.m"], eps=eps,
                                   cfl_safety=cfg["solver.cfl_safety"],
                                   t_end=t_gen, snapshot_times=(t_gen,),
                                   substep_safety=cfg["solver.substep_safety"]),
                      reaction, g_c, build_u0(g_c, profile, a=reaction.a))
            fields[n_c] = r_c.snapshots[-1].field
        conv = convergence_study(fields, snap_g.field)
        report["orders"] = {
            "ncells": conv.ncells,
            "err_l1": conv.err_l1,
            "err_linf": conv.err_linf,
            "orders_l1": conv.orders_l1,
            "monotone": conv.monotone,
        }
        runtimes["orders"] = time.perf_counter() - t0
    else:
        report["orders"] = None

    runtimes["total"] = time.perf_counter() - t_start
    report["checks"] = checks
    report["all_passed"] = all(checks.values())

    if out_dir is not None:
        eps_dir = out_dir / _eps_dirname(eps)
        eps_dir.mkdir(parents=True, exist_ok=True)
        write_snapshots_csv(eps_dir / "snapshots.csv", result.snapshots,
                            grid.mode)
        write_json(eps_dir / "report.json", report)
        # Wall-clock diagnostics live apart so report.json stays byte-stable.
        write_json(eps_dir / "timings.json", runtimes)
        (eps_dir / "config.txt").write_text(
            cfg.with_values(**{"solver.eps": eps}).to_text())
    report["runtimes"] = runtimes
    return report


def _pipeline_entry(values: dict, eps: float, out_dir: str | None) -> dict:
    cfg = RunConfig(values=values)
    return run_eps_pipeline(cfg, eps, Path(out_dir) if out_dir else None)


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    reaction = cfg.reaction()
    grid = cfg.grid()
    profile = cfg.profile()
    eps = cfg["solver.eps"]
    clock = GenerationClock(mu=reaction.mu(), eps=eps)
    t_end = cfg["solver.t_end_factor"] * clock.t_eps
    times = default_snapshot_times(clock.t_eps, clock.t_eps_b, t_end)
    scfg = SolverConfig(m=cfg["solver.m"], eps=eps,
                        cfl_safety=cfg["solver.cfl_safety"], t_end=t_end,
                        snapshot_times=times,
                        substep_safety=cfg["solver.substep_safety"])
    u0 = build_u0(grid, profile, a=reaction.a)
    try:
        result = run(scfg, reaction, grid, u0)
    except BoundViolationError as exc:
        print(f"bound violation: {exc}", file=sys.stderr)
        return 1
    eps_dir = out / _eps_dirname(eps)
    eps_dir.mkdir(parents=True, exist_ok=True)
    write_snapshots_csv(eps_dir / "snapshots.csv", result.snapshots, grid.mode)
    write_json(eps_dir / "run.json", {
        "schema_version": REPORT_SCHEMA,
        "eps": eps,
        "t_end": t_end,
        "steps": result.steps,
        "dt_nominal": result.dt_nominal,
        "solution_min": result.min_value,
        "solution_max": result.max_value,
        "boundary_inactive": result.boundary_inactive,
    })
    write_json(eps_dir / "timings.json", {"wall_time": result.wall_time})
    (eps_dir / "config.txt").write_text(cfg.to_text())
    print(f"wrote {eps_dir}/snapshots.csv ({len(result.snapshots)} snapshots, "
          f"{result.steps} steps)")
    return 0


def cmd_envelope_check(cfg: RunConfig, out: Path) -> int:
    reaction = cfg.reaction()
    grid = cfg.grid()
    profile = cfg.profile()
    eps = cfg["solver.eps"]
    out.mkdir(parents=True, exist_ok=True)
    try:
        p, rec = calibrate_Cstar(
            profile, reaction, eps, m=cfg["solver.m"], ndim=grid.ndim,
            domain_radius=grid.radius, ladder_base=cfg["envelope.ladder_base"],
            ladder_rungs=cfg["envelope.ladder_rungs"], base_cfg=cfg.kernel_cfg())
    except CalibrationError as exc:
        write_json(out / "calibration.json",
                   {"schema_version": REPORT_SCHEMA, "eps": eps,
                    "error": str(exc)})
        print(f"calibration failed: {exc}", file=sys.stderr)
        return 1
    t_gen = generation_time(p)
    radii = np.linspace(0.0, grid.radius * 0.999, 101)
    rows = []
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        t = frac * t_gen
        wm = eval_w(p, profile, reaction, radii, t, "minus", cfg.kernel_cfg())
        wp = eval_w(p, profile, reaction, radii, t, "plus", cfg.kernel_cfg())
        lm = residual_L(p, profile, reaction, radii, t, "minus", grid.ndim,
                        cfg.kernel_cfg())
        lp = residual_L(p, profile, reaction, radii, t, "plus", grid.ndim,
                        cfg.kernel_cfg())
        rows.extend(zip(radii, [t] * len(radii), wm, wp, lm, lp))
    write_csv(out / "envelope.csv", ["x", "t", "w_minus", "w_plus",
                                     "L_minus", "L_plus"], rows,
              "layerlab.envelope.v1")
    write_json(out / "calibration.json", {
        "schema_version": REPORT_SCHEMA,
        "eps": eps,
        "Cstar": rec.Cstar,
        "margin_minus": rec.margin_minus,
        "margin_plus": rec.margin_plus,
        "n_points": rec.n_points,
        "xi_in_paper_range": rec.xi_in_paper_range,
    })
    (out / "config.txt").write_text(cfg.to_text())
    print(f"calibrated Cstar={rec.Cstar:g} (margins {rec.margin_minus:.4g}, "
          f"{rec.margin_plus:.4g})")
    return 0


def cmd_ode(cfg: RunConfig, out: Path, taus: list[float],
            xis: list[float]) -> int:
    reaction = cfg.reaction()
    kcfg = cfg.kernel_cfg()
    eps = cfg["solver.eps"]
    gamma = cfg["verify.gamma"]
    out.mkdir(parents=True, exist_ok=True)

    tt = np.repeat(np.asarray(taus, dtype=float), len(xis))
    xx = np.tile(np.asarray(xis, dtype=float), len(taus))
    Y, V, W = flow_targets(reaction, kcfg, tt, xx)
    write_csv(out / "ode.csv", ["tau", "xi", "Y", "Y_xi", "Y_xixi"],
              zip(tt, xx, Y, V, W), REPORT_SCHEMA)

    c_y = find_CY(reaction, kcfg, eps, gamma)
    violations = after_time_check(reaction, kcfg, eps, gamma, c_y)
    lin = fit_linearization(reaction, kcfg, cfg["verify.eta"])
    curv = fit_curvature_bound(reaction, kcfg,
                               tau_max=abs(math.log(eps)) / reaction.mu(),
                               seed=cfg["seed"])
    checks = {
        "after_time_ok": len(violations) == 0,
        "linearization_ok": 0.0 < lin.C1 <= 1.0 <= lin.C2,
        "curvature_finite": math.isfinite(curv.C),
    }
    write_json(out / "ode_report.json", {
        "schema_version": REPORT_SCHEMA,
        "eps": eps,
        "gamma": gamma,
        "C_Y": c_y,
        "after_time_violations": violations,
        "linearization": {"C1": lin.C1, "C2": lin.C2, "eta": lin.eta},
        "curvature_C": curv.C,
        "checks": checks,
        "all_passed": all(checks.values()),
    })
    (out / "config.txt").write_text(cfg.to_text())
    print(f"C_Y={c_y:.4g}, C1={lin.C1:.4g}, C2={lin.C2:.4g}, "
          f"curvature C={curv.C:.4g}")
    return 0 if all(checks.values()) else 1


def _width_fit(eps_arr: np.ndarray, width_arr: np.ndarray) -> dict:
    """Least squares width = C * eps through the origin, with both the
    uncentered R^2 (conventional for through-origin fits) and the centered
    one for reference."""
    C = float((width_arr @ eps_arr) / (eps_arr @ eps_arr))
    resid = width_arr - C * eps_arr
    ss_res = float(resid @ resid)
    ss_unc = float(width_arr @ width_arr)
    mean = float(width_arr.mean())
    ss_cen = float(((width_arr - mean) ** 2).sum())
    return {
        "C": C,
        "R2": 1.0 - ss_res / ss_unc if ss_unc > 0 else math.nan,
        "R2_centered": 1.0 - ss_res / ss_cen if ss_cen > 0 else math.nan,
        "n": int(len(eps_arr)),
    }


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int) -> int:
    eps_list = list(cfg["sweep.eps_list"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    reports: dict[float, dict] = {}
    failures: dict[float, str] = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {eps: pool.submit(_pipeline_entry, cfg.values, eps, str(out))
                    for eps in eps_list}
            for eps, fut in futs.items():
                try:
                    reports[eps] = fut.result()
                except Exception as exc:  # isolate per-eps failures
                    failures[eps] = f"{type(exc).__name__}: {exc}"
    else:
        for eps in eps_list:
            try:
                reports[eps] = run_eps_pipeline(cfg, eps, out)
            except Exception as exc:
                failures[eps] = f"{type(exc).__name__}: {exc}"

    rows = []
    for eps in sorted(reports, reverse=True):
        rep = reports[eps]
        rows.append((eps, rep["t_gen"], rep.get("width_eta"),
                     rep.get("M0"), rep.get("t_min"), rep.get("b_fit")))
    write_csv(out / "sweep.csv",
              ["epsilon", "t_gen", "width", "M0", "t_min", "b_fit"],
              [[x if x is not None else math.nan for x in row] for row in rows],
              SWEEP_CSV_SCHEMA)

    ok_eps = [eps for eps in reports
              if reports[eps].get("width_eta") is not None]
    if len(ok_eps) >= 2:
        arr = np.array(sorted(ok_eps, reverse=True))
        wfit = _width_fit(arr, np.array([reports[e]["width_eta"] for e in arr]))
        fit_notice = None
    else:
        wfit = None
        fit_notice = "width fit skipped: fewer than 2 epsilon entries"

    bs = [reports[e]["b_fit"] for e in reports
          if reports[e].get("b_fit") is not None]
    sweep_doc = {
        "schema_version": SCHEMA_VERSION,
        "eps_list": eps_list,
        "width_fit": wfit,
        "width_fit_notice": fit_notice,
        "b_stats": ({"min": min(bs), "max": max(bs),
                     "mean": sum(bs) / len(bs)} if bs else None),
        "per_eps": {format(e, "g"): {
            "all_passed": reports[e]["all_passed"],
            "checks": reports[e]["checks"],
        } for e in reports},
        "failures": {format(e, "g"): msg for e, msg in failures.items()},
        "all_passed": (not failures
                       and all(r["all_passed"] for r in reports.values())),
    }
    write_json(out / "sweep.json", sweep_doc)
    write_json(out / "timings.json", {"wall_time": time.perf_counter() - t0})
    (out / "config.txt").write_text(cfg.to_text())
    if fit_notice:
        print(fit_notice)
    elif wfit is not None:
        print(f"width fit: width = {wfit['C']:.4g} * eps, R2 = {wfit['R2']:.6f}")
    for eps, msg in failures.items():
        print(f"eps={eps:g} failed: {msg}", file=sys.stderr)
    return 0 if sweep_doc["all_passed"] else 1


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    try:
        report = run_eps_pipeline(cfg, cfg["solver.eps"], out)
    except (CalibrationError, BoundViolationError, LayerNotFoundError) as exc:
        print(f"verification aborted: {exc}", file=sys.stderr)
        return 1
    for name, ok in sorted(report["checks"].items()):
        print(f"  {name}: {'pass' if ok else 'FAIL'}")
    return 0 if report["all_passed"] else 1


def cmd_report(in_dir: Path) -> int:
    import json

    sweep_path = in_dir / "sweep.json"
    reports = []
    if sweep_path.exists():
        doc = json.loads(sweep_path.read_text())
        print(f"sweep over eps = {doc['eps_list']}")
        if doc.get("width_fit"):
            wf = doc["width_fit"]
            print(f"width fit: C = {wf['C']:.6g}, R2 = {wf['R2']:.6f}")
        if doc.get("b_stats"):
            bstat = doc["b_stats"]
            print(f"b range: [{bstat['min']:.4g}, {bstat['max']:.4g}]")
        all_ok = doc["all_passed"]
    else:
        all_ok = True
    for rep_path in sorted(in_dir.glob("*/report.json")):
        rep = json.loads(rep_path.read_text())
        reports.append(rep)
        all_ok = all_ok and rep["all_passed"]
        w = rep.get("width_eta")
        print(f"eps={rep['eps']:g}: Cstar={rep.get('Cstar')}, "
              f"M0={rep.get('M0')}, width/eps="
              f"{w / rep['eps'] if w else float('nan'):.3f}, "
              f"b={rep.get('b_fit')}, "
              f"sandwich_violations={rep.get('sandwich_violations')}, "
              f"all_passed={rep['all_passed']}")
    if not reports and not sweep_path.exists():
        print(f"no reports found under {in_dir}", file=sys.stderr)
        return 2
    return 0 if all_ok else 1


def _float_list(s: str) -> list[float]:
    return [float(p) for p in s.split(",") if p.strip()]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="layerlab",
        description="Interface-generation laboratory for degenerate "
                    "reaction-diffusion")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, with_out=True):
        sp.add_argument("--config", type=Path, default=None,
                        help="dotted-key config file")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")
        if with_out:
            sp.add_argument("--out", type=Path, required=True,
                            help="output directory")

    sp = sub.add_parser("ode", help="evaluate the ODE kernel and its checks")
    add_common(sp)
    sp.add_argument("--tau", type=_float_list,
                    default=[0.0, 1.0, 2.0, 5.0, 10.0])
    sp.add_argument("--xi", type=_float_list,
                    default=[round(-1.7 + 0.17 * k, 10) for k in range(21)])

    for name, help_text in (("simulate", "advance the PDE and write snapshots"),
                            ("envelope-check", "calibrate C* and sample the "
                                               "envelopes and residuals"),
                            ("verify", "full single-epsilon pipeline"),
                            ("sweep", "pipeline across sweep.eps_list")):
        sp = sub.add_parser(name, help=help_text)
        add_common(sp)
        if name == "sweep":
            sp.add_argument("--jobs", type=int, default=1,
                            help="concurrent epsilon entries")

    sp = sub.add_parser("report", help="summarize reports under a directory")
    sp.add_argument("--in", dest="in_dir", type=Path, required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.in_dir)
        cfg = parse_config(args.config, args.overrides)
        if args.command == "ode":
            return cmd_ode(cfg, args.out, args.tau, args.xi)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "envelope-check":
            return cmd_envelope_check(cfg, args.out)
        if args.command == "verify":
            return cmd_verify(cfg, args.out)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out, args.jobs)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
