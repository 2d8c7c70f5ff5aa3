"""dnle command line: one subcommand per experiment, artifacts as CSV and JSON."""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .asymptotics import (positivity_experiment, quasilinear_convergence_report, rate_report_degenerate,
                          sandwich_check)
from .config import EXPERIMENTS, ExperimentConfig, build_config, load_raw, validate
from .errors import ConfigError, DNLEError, InvalidParameters, RegimeError
from .evolution import solve
from .selfsimilar import (Case, SelfSimilarSpec, barenblatt_profile, barenblatt_radius_from_height,
                          barenblatt_spec, integrate_profile)
from .stationary import (compute_first_eigenpair, compute_profile_f, exact_eigenvalue_1d,
                         heat_eigenfunction_shape)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ASSERT = 0, 2, 3, 4


def initial_data(cfg: ExperimentConfig, domain, profile=None) -> np.ndarray:
    ini = cfg.initial
    x = domain.nodes
    L = domain.extent
    if ini.shape == "bump":
        u = ini.amplitude * np.clip(1.0 - ((x - ini.center * L) / (ini.width * L)) ** 2, 0.0, None)
    elif ini.shape == "indicator":
        u = np.where((x >= ini.lo * L) & (x <= ini.hi * L), ini.amplitude, 0.0)
    elif ini.shape == "eigenmode":
        u = ini.amplitude * heat_eigenfunction_shape(domain)
    elif ini.shape == "sine_series":
        u = sum(c * np.sin((k + 1) * math.pi * x / L) for k, c in enumerate(ini.coefficients))
        u = np.maximum(u, 0.0)
    elif ini.shape == "power":
        d = domain.distance / L
        u = ini.amplitude * (d * (1.0 - d)) ** ini.power * (1.0 + ini.tilt * x / L)
    elif ini.shape == "separate_variables":
        f = profile if profile is not None else _profile(cfg, domain).f
        u = ini.s ** (-cfg.params.mu) * f
    else:
        path = Path(ini.path)
        if cfg.source is not None and not path.is_absolute():
            path = cfg.source.parent / path
        u = io.read_csv(path)[ini.column]
    u = np.array(u, dtype=float)
    u[domain.boundary_mask] = 0.0
    return domain.check_field(u, "initial data")


def _profile(cfg, domain):
    return compute_profile_f(cfg.params, domain, method=cfg.run.method, tolerance=cfg.run.tolerance)


def _outputs(cfg, geometric=True):
    r = cfg.run
    if geometric and r.t_start == 0:
        lo = r.window[0] if r.window else r.t_end * 1e-3
        return np.geomspace(lo, r.t_end, r.samples)
    return np.linspace(r.t_start, r.t_end, r.samples + 1)


def _trajectory_columns(traj):
    return {"t": traj.times, "mass": traj.mass, "supnorm": traj.supnorm, "entropy": traj.entropy}


def run_simulate(cfg: ExperimentConfig):
    dom = cfg.domain()
    traj = solve(initial_data(cfg, dom), cfg.run.t_end, cfg.params, dom, cfg.solver,
                 _outputs(cfg, geometric=False), t0=cfg.run.t_start)
    states = {"x": dom.nodes}
    states.update({f"u{k}": s for k, s in enumerate(traj.states)})
    report = {"steps": int(traj.step_sizes.size), "final_time": float(traj.times[-1]),
              "final_mass": float(traj.mass[-1]), "final_supnorm": float(traj.supnorm[-1])}
    return report, {"diagnostics.csv": _trajectory_columns(traj), "states.csv": states}, True


def run_profile(cfg: ExperimentConfig):
    dom = cfg.domain()
    prof = _profile(cfg, dom)
    report = {"method": prof.method, "residual_norm": prof.residual_norm, "iterations": prof.iterations,
              "C1": prof.C1, "C2": prof.C2, "sup_f": float(prof.f.max())}
    ok = prof.residual_norm <= 10 * cfg.run.tolerance
    return report, {"profile.csv": {"x": dom.nodes, "f": prof.f, "w": prof.w}}, ok


def run_eigen(cfg: ExperimentConfig):
    dom = cfg.domain()
    pair = compute_first_eigenpair(cfg.params.p, dom, tolerance=cfg.run.tolerance)
    report = {"p": cfg.params.p, "lambda1": pair.lambda1, "residual_norm": pair.residual_norm,
              "iterations": pair.iterations}
    ok = True
    if not dom.radial:
        exact = exact_eigenvalue_1d(cfg.params.p, dom.extent)
        rel = abs(pair.lambda1 - exact) / exact
        report.update({"lambda1_exact": exact, "relative_error": rel})
        ok = rel <= cfg.checks.eigen_rel_tol
    return report, {"eigen.csv": {"x": dom.nodes, "V": pair.V}}, ok


def run_selfsim(cfg: ExperimentConfig):
    params = cfg.params
    r = cfg.run
    if r.beta is None:
        spec = barenblatt_spec(params, r.M)
    elif r.alpha is None:
        spec = SelfSimilarSpec.on_line(r.beta, params, M=r.M)
    else:
        spec = SelfSimilarSpec(r.alpha, r.beta, M=r.M)
    curve = integrate_profile(spec, params, r.r_max)
    report = {"alpha": spec.alpha, "beta": spec.beta, "M": spec.M, "case": curve.case.value,
              "support_radius": curve.support_radius, "crossing_slope": curve.crossing_slope}
    ok = True
    if curve.case == Case.BARENBLATT:
        a = barenblatt_radius_from_height(spec.M, params)
        err = float(np.max(np.abs(curve.g - barenblatt_profile(curve.r, params, a) ** params.m)))
        report.update({"closed_form_radius": a, "closed_form_error": err})
        ok = err <= 1e-6
    return report, {"selfsim.csv": {"r": curve.r, "g": curve.g, "dg": curve.dg}}, ok


def run_rate(cfg: ExperimentConfig):
    dom = cfg.domain()
    prof = _profile(cfg, dom)
    traj = solve(initial_data(cfg, dom, prof.f), cfg.run.t_end, cfg.params, dom, cfg.solver, _outputs(cfg))
    rep = rate_report_degenerate(traj, prof.f, cfg.params, window=cfg.run.window)
    d = rep.to_dict()
    series = {"t": d.pop("times"), "error": d.pop("errors"), "weighted_error": d.pop("weighted_errors")}
    d.update({"mu": cfg.params.mu, "profile_residual": prof.residual_norm})
    ok = abs(rep.slope - cfg.checks.slope) <= cfg.checks.slope_tol
    return d, {"rate_series.csv": series}, ok


def run_quasilinear(cfg: ExperimentConfig):
    dom = cfg.domain()
    pair = compute_first_eigenpair(cfg.params.p, dom, tolerance=min(cfg.run.tolerance, 1e-10))
    traj = solve(initial_data(cfg, dom), cfg.run.t_end, cfg.params, dom, cfg.solver,
                 _outputs(cfg, geometric=False), t0=cfg.run.t_start)
    rep = quasilinear_convergence_report(traj, pair, gap_threshold=cfg.run.gap_threshold)
    d = rep.to_dict()
    series = {"t": d.pop("times"), "c_lower": d.pop("c_lower"), "c_upper": d.pop("c_upper"),
              "ref_sup": d.pop("ref_sup_series")}
    d.update({"lambda1": pair.lambda1, "monotone_envelopes": rep.envelope.monotone()})
    ok = rep.ref_sup <= cfg.checks.ref_max and rep.envelope.monotone()
    return d, {"quasilinear_series.csv": series}, ok


def run_positivity(cfg: ExperimentConfig):
    dom = cfg.domain()
    prof = _profile(cfg, dom)
    traj = solve(initial_data(cfg, dom, prof.f), cfg.run.t_end, cfg.params, dom, cfg.solver,
                 _outputs(cfg, geometric=False), t0=cfg.run.t_start)
    pos = positivity_experiment(traj, dom, cfg.run.delta)
    sw = sandwich_check(traj, prof.f, cfg.params, t_min=pos.T_boundary)
    report = {**asdict(pos), "s0": sw.s0, "s1": sw.s1, "t_min": sw.t_min}
    ok = pos.T_inner <= pos.T_boundary <= pos.bound
    return report, {"diagnostics.csv": _trajectory_columns(traj)}, ok


RUNNERS = {
    "simulate": run_simulate, "profile": run_profile, "eigen": run_eigen, "selfsim": run_selfsim,
    "rate": run_rate, "quasilinear": run_quasilinear, "positivity": run_positivity,
}
REPORT_NAMES = {"rate": "rate_report.json", "eigen": "eigen.json"}


def _error_payload(exc, code):
    return {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}


def run(cfg: ExperimentConfig, out_dir: Path | None = None, check: bool = False) -> int:
    """Run one experiment, write its artifacts and return the exit status."""
    out = Path(out_dir) if out_dir is not None else cfg.out_dir
    t_start = time.perf_counter()
    try:
        report, tables, ok = RUNNERS[cfg.experiment](cfg)
    except (ConfigError, RegimeError, InvalidParameters) as exc:
        io.write_json(out / "error.json", _error_payload(exc, EXIT_CONFIG))
        return EXIT_CONFIG
    except (DNLEError, ArithmeticError, np.linalg.LinAlgError) as exc:
        io.write_json(out / "error.json", _error_payload(exc, EXIT_SOLVER))
        return EXIT_SOLVER
    for name, cols in tables.items():
        io.write_csv(out / name, cols)
    body = {"experiment": cfg.experiment, "m": cfg.params.m, "p": cfg.params.p, "N": cfg.params.N,
            "nodes": cfg.nodes, "checks_passed": bool(ok), **report}
    io.write_json(out / REPORT_NAMES.get(cfg.experiment, f"{cfg.experiment}.json"), body)
    io.write_json(out / "timing.json", {"wall_seconds": time.perf_counter() - t_start}, timestamp=False)
    if check and not ok:
        return EXIT_ASSERT
    return EXIT_OK


def run_path(path, out_dir=None, check=False, expected: str | None = None) -> int:
    try:
        raw = load_raw(path)
        if expected is not None and raw.get("experiment", expected) != expected:
            raise ConfigError(f"experiment: config declares {raw.get('experiment')!r}, command is {expected!r}")
        raw.setdefault("experiment", expected)
        cfg = build_config(raw, source=Path(path))
    except (ConfigError, InvalidParameters, RegimeError) as exc:
        target = Path(out_dir) if out_dir is not None else Path(path).parent / "out"
        io.write_json(target / "error.json", _error_payload(exc, EXIT_CONFIG))
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = run(cfg, out_dir, check)
    if code != EXIT_OK:
        print(f"{cfg.experiment}: exit {code}", file=sys.stderr)
    return code


def sweep(paths, out_root=None, check=False) -> int:
    """Run independent configs on worker threads; worst exit status wins."""
    workers = max(1, int(os.environ.get("DNLE_THREADS", os.cpu_count() or 1)))

    def one(path):
        out = None if out_root is None else Path(out_root) / Path(path).stem
        return run_path(path, out, check)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        codes = list(pool.map(one, paths))
    return max(codes, default=EXIT_OK)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dnle", description="Doubly nonlinear diffusion experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--assert", dest="check", action="store_true",
                        help="exit with status 4 when the experiment's checks fail")
    sp = sub.add_parser("sweep", help="run several configs concurrently (DNLE_THREADS caps workers)")
    sp.add_argument("--config", nargs="+", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--assert", dest="check", action="store_true")
    sp = sub.add_parser("validate", help="list rule violations of a config")
    sp.add_argument("--config", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sweep":
        return sweep(args.config, args.out, args.check)
    if args.command == "validate":
        try:
            problems = validate(load_raw(args.config))
        except ConfigError as exc:
            problems = [str(exc)]
        for line in problems:
            print(line)
        return EXIT_CONFIG if problems else EXIT_OK
    return run_path(args.config, args.out, args.check, expected=args.command)


if __name__ == "__main__":
    sys.exit(main())
