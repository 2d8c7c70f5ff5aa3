"""Acceptance gate: one PASS/FAIL line per criterion.

Run under pytest (lines appear in the terminal summary) or directly:
    python tests/test_acceptance.py
"""
import dataclasses
import sys
import time

import numpy as np
import pytest
from scipy.integrate import quad

from dnle.asymptotics import (
    barrier_residual,
    choose_lower_barrier,
    choose_upper_barrier,
    measure_profile_bounds,
    positivity_experiment,
    quasilinear_convergence_report,
    rate_report_degenerate,
    sandwich_check,
)
from dnle.evolution import SolverControls, entropy, rescale_degenerate, solve
from dnle.grid import Interval, Parameters, Regime, build_domain
from dnle.operators import gamma1, gamma2, monotonicity_gap, monotonicity_lhs
from dnle.selfsimilar import (
    barenblatt_pde_residual,
    barenblatt_profile,
    barenblatt_radius_from_height,
    barenblatt_spec,
    integrate_profile,
    unscaled_barenblatt_coefficient,
)
from dnle.stationary import compute_first_eigenpair, compute_profile_f, exact_eigenvalue_1d

RESULTS: dict[int, tuple[bool, str]] = {}
SEED = 20261016


def parabola(x, c, w, a=1.0):
    return a * np.clip(1 - ((x - c) / w) ** 2, 0, None)


def c1_rate():
    """m=2, p=2, h=1/256, bump data, slope of the weighted error on [e, e^6]."""
    t0 = time.perf_counter()
    P = Parameters(2, 2)
    d = build_domain(Interval(1.0), 257)
    f = compute_profile_f(P, d).f
    T = np.e ** 6
    ctl = SolverControls(dt=1e-4, growth=1.05, dt_rel=1e-4, dt_max=1.0)
    tr = solve(parabola(d.nodes, 0.4, 0.2), T, P, d, ctl, np.geomspace(np.e, T, 60))
    rep = rate_report_degenerate(tr, f, window=(np.e, T))
    wall = time.perf_counter() - t0
    ok = abs(rep.slope + 1.0) <= 0.15 and wall < 120
    return ok, f"slope {rep.slope:.4f} (target -1 +- 0.15), C_num {rep.C_num:.4f}, {wall:.1f} s"


def c2_sharpness():
    """u0 = f (s = 1): weighted error against |t^mu (1+t)^-mu - 1| and C_num."""
    P = Parameters(2, 2)
    d = build_domain(Interval(1.0), 257)
    f = compute_profile_f(P, d).f
    T = np.e ** 5
    ctl = SolverControls(dt=1e-4, growth=1.05, dt_rel=1e-4, dt_max=1.0)
    tr = solve(f, T, P, d, ctl, np.geomspace(1.0, T, 40))
    rep = rate_report_degenerate(tr, f, window=(1.0, T))
    exact = np.abs(rep.times ** P.mu * (1 + rep.times) ** (-P.mu) - 1)
    rel = float(np.max(np.abs(rep.weighted_errors / exact - 1)))
    ok = rel <= 0.05 and 0.95 * P.mu <= rep.C_num <= 1.05 * P.mu
    return ok, f"max relative mismatch {rel:.2e} (<= 5%), C_num {rep.C_num:.4f} in [{0.95 * P.mu:.3f}, {1.05 * P.mu:.3f}]"


def c3_barenblatt_residual():
    grids = (257, 513, 1025)
    parts, ok = [], True
    for mp in [(2.0, 2.0), (1.0, 3.0)]:
        P = Parameters(*mp)
        r = [barenblatt_pde_residual(P, n) for n in grids]
        ratios = [r[i] / r[i + 1] for i in range(2)]
        ok &= min(ratios) >= 1.8
        parts.append(f"(m,p)={mp} ratios {ratios[0]:.2f},{ratios[1]:.2f}")
    P = Parameters(2, 2)
    c = unscaled_barenblatt_coefficient(P)
    r = [barenblatt_pde_residual(P, n, coefficient=c) for n in grids]
    bad = [r[i] / r[i + 1] for i in range(2)]
    printed_fails = min(bad) < 1.8
    ok &= printed_fails
    parts.append(f"printed coefficient ratios {bad[0]:.2f},{bad[1]:.2f} ({'fails' if printed_fails else 'passes'})")
    return ok, "; ".join(parts)


def c4_ode_closed_form():
    t0 = time.perf_counter()
    errs = []
    for mp in [(2.0, 2.0), (1.0, 3.0)]:
        P = Parameters(*mp)
        a = barenblatt_radius_from_height(1.0, P)
        curve = integrate_profile(barenblatt_spec(P, 1.0), P, r_max=2 * a)
        errs.append(float(np.max(np.abs(curve.g - barenblatt_profile(curve.r, P, a) ** P.m))))
    wall = time.perf_counter() - t0
    ok = max(errs) <= 1e-6 and wall < 5
    return ok, f"max-norm errors {errs[0]:.1e}, {errs[1]:.1e} (<= 1e-6), {wall:.2f} s"


def c5_eigenvalues():
    d = build_domain(Interval(1.0), 513)
    l2 = compute_first_eigenpair(2.0, d).lambda1
    l3 = compute_first_eigenpair(3.0, d).lambda1
    e2 = abs(l2 / np.pi ** 2 - 1)
    e3 = abs(l3 / exact_eigenvalue_1d(3.0) - 1)
    ok = e2 <= 5e-3 and e3 <= 1e-2
    return ok, f"lambda1(p=2) {l2:.5f} rel {e2:.1e}; lambda1(p=3) {l3:.4f} rel {e3:.1e}"


def _random_c1_data(rng, x):
    u = np.zeros_like(x)
    for _ in range(rng.integers(1, 4)):
        c, w, a = rng.uniform(0.2, 0.8), rng.uniform(0.08, 0.3), rng.uniform(0.1, 2.0)
        u += a * np.clip(1 - ((x - c) / w) ** 2, 0, None) ** 2
    u[[0, -1]] = 0
    return u


def c6_monotone_flow():
    """200 ordered pairs over five (m, p) sets; uniform step shared by each pair."""
    rng = np.random.default_rng(SEED)
    d = build_domain(Interval(1.0), 33)
    sets = [(2, 2), (1, 3), (2, 3), (3, 1.5), (0.5, 3)]
    order = ent = orbit = 0.0
    for k in range(200):
        P = Parameters(*sets[k % 5])
        u0 = _random_c1_data(rng, d.nodes)
        w0 = u0 + rng.uniform(0, 1) * _random_c1_data(rng, d.nodes)
        T = 0.5 * w0.max() ** (-(P.kappa - 1))
        ctl = SolverControls(dt=T / 250)
        outs = np.linspace(T / 25, T, 25)
        A = solve(u0, T, P, d, ctl, outs)
        B = solve(w0, T, P, d, ctl, outs)
        order = max(order, float(np.max(A.states - B.states)))
        if P.regime is Regime.DEGENERATE:
            for tr in (A, B):
                R = rescale_degenerate(tr)
                E = np.array([entropy(v, P, d) for v in R.values])
                ent = max(ent, float(np.max(np.diff(E))))
                orbit = max(orbit, float(np.max(-np.diff(R.values, axis=0))))
    ok = order <= 1e-10 and ent <= 1e-8 and orbit <= 1e-8
    return ok, f"worst ordering {order:.1e} (1e-10), entropy rise {ent:.1e} (1e-8), v drop {orbit:.1e} (1e-8)"


def c7_vector_inequalities():
    rng = np.random.default_rng(SEED)
    parts, ok = [], True
    for p in (1.3, 1.7, 2.0, 3.0, 4.0):
        a = rng.normal(size=(10_000, 3))
        b = rng.normal(size=(10_000, 3))
        close = rng.random(10_000) < 0.1
        b[close] = a[close] + 1e-3 * rng.normal(size=(close.sum(), 3))
        weak = int(np.sum(monotonicity_lhs(a, b, p) < -1e-12))
        strong = int(np.sum(monotonicity_gap(a, b, p) < -1e-12))
        ok &= weak == 0 and strong == 0
        g = gamma2(p) if p < 2 else gamma1(p)
        parts.append(f"p={p}: {weak}/{strong} (gamma {g:.3g})")
    return ok, "weak/strong violations " + ", ".join(parts)


def c8_quasilinear():
    d = build_domain(Interval(1.0), 257)
    x = d.nodes
    heat = compute_first_eigenpair(2.0, d, tolerance=1e-10)
    u0 = 3 * np.sin(np.pi * x) + 0.3 * np.maximum(np.sin(3 * np.pi * x), 0)
    u0[[0, -1]] = 0
    b1 = 3 + 0.6 * quad(lambda s: max(np.sin(3 * np.pi * s), 0) * np.sin(np.pi * s), 0, 1, points=[1 / 3, 2 / 3])[0]
    tr = solve(u0, 0.5, Parameters(1, 2), d, SolverControls(dt=1e-3), np.linspace(0, 0.5, 51))
    rh = quasilinear_convergence_report(tr, heat)
    heat_err = abs(rh.c_star / b1 - 1)

    ep = compute_first_eigenpair(3.0, d, tolerance=1e-10)
    P = Parameters(0.5, 3)
    u0 = 16 * (x * (1 - x)) ** 2 * (1 + 0.5 * x)
    ctl = SolverControls(dt=1e-3, growth=1.02, dt_max=0.01, tol=1e-10)
    tr = solve(u0, 0.5, P, d, ctl, np.linspace(0.01, 0.5, 50))
    rn = quasilinear_convergence_report(tr, ep)
    gap_mono = bool(np.all(np.diff(rn.envelope.gap) <= 1e-8))
    ok = heat_err <= 0.02 and gap_mono and rn.gap < 0.05 and rn.ref_sup < 0.05
    return ok, (f"heat c* {rh.c_star:.6f} vs b1 {b1:.6f} (rel {heat_err:.1e}); "
                f"p=3 m=1/2 gap {rn.gap:.1e} monotone={gap_mono}, REF {rn.ref_sup:.1e}")


def c9_barriers():
    d = build_domain(Interval(1.0), 257)
    parts, ok = [], True
    for p, m in [(2.0, 1.0), (3.0, 0.5)]:
        ep = compute_first_eigenpair(p, d, tolerance=1e-10)
        bounds = measure_profile_bounds(ep, m, d)
        up = choose_upper_barrier(0.05, bounds)
        lo = choose_lower_barrier(0.05, bounds)
        ru = barrier_residual(up, "upper", ep.V, ep.lambda1, p, d)
        rl = barrier_residual(lo, "lower", ep.V, ep.lambda1, p, d)
        bad = dataclasses.replace(up, B=up.B / 100, A=up.A * 100)
        rb = barrier_residual(bad, "upper", ep.V, ep.lambda1, p, d)
        ok &= up.slack >= 0 and lo.slack >= -1e-12 and ru >= -1e-8 and rl >= -1e-8 and rb < 0
        parts.append(f"(p,m)=({p:g},{m:g}) slack {up.slack:.2e}/{lo.slack:.1e}, "
                     f"residual {ru:.3g}/{rl:.3g}, broken {rb:.3g}")
    return ok, "; ".join(parts)


def c10_positivity_sandwich():
    P = Parameters(2, 2)
    d = build_domain(Interval(1.0), 129)
    f = compute_profile_f(P, d).f
    ctl = SolverControls(dt=1e-3, growth=1.02, dt_max=0.05)
    tr = solve(parabola(d.nodes, 0.5, 0.1), 20.0, P, d, ctl, np.linspace(0.05, 20.0, 400))
    pos = positivity_experiment(tr, d, delta=0.1)
    sw = sandwich_check(tr, f, P, t_min=pos.T_boundary)
    late = tr.times >= sw.t_min
    t = tr.times[late][:, None]
    U = tr.states[late]
    pinned = bool(np.all(U <= (sw.s1 + t) ** (-P.mu) * f * (1 + 1e-12))
                  and np.all(U >= (sw.s0 + t) ** (-P.mu) * f * (1 - 1e-12)))
    ok = (np.isfinite(pos.T_inner) and pos.T_inner <= pos.T_boundary <= pos.bound
          and np.isfinite(sw.s0) and np.isfinite(sw.s1) and pinned)
    return ok, (f"T_inner {pos.T_inner:.3g} <= T_boundary {pos.T_boundary:.3g} <= bound {pos.bound:.3g}; "
                f"s0 {sw.s0:.3g}, s1 {sw.s1:.3g}, pinned={pinned}")


CRITERIA = {
    1: ("degenerate rate", c1_rate),
    2: ("sharpness", c2_sharpness),
    3: ("Barenblatt residual", c3_barenblatt_residual),
    4: ("ODE vs closed form", c4_ode_closed_form),
    5: ("eigenvalues", c5_eigenvalues),
    6: ("monotone flow", c6_monotone_flow),
    7: ("vector inequalities", c7_vector_inequalities),
    8: ("quasilinear convergence", c8_quasilinear),
    9: ("barriers", c9_barriers),
    10: ("positivity and sandwich", c10_positivity_sandwich),
}


def line(k):
    ok, detail = RESULTS[k]
    return f"{'PASS' if ok else 'FAIL'} [{k:2d}] {CRITERIA[k][0]}: {detail}"


def evaluate(k):
    try:
        RESULTS[k] = CRITERIA[k][1]()
    except Exception as exc:  # a crash is a failed criterion, reported like any other
        RESULTS[k] = (False, f"{type(exc).__name__}: {exc}")
    print(line(k), flush=True)
    return RESULTS[k][0]


@pytest.mark.parametrize("k", list(CRITERIA), ids=[f"c{k}_{CRITERIA[k][0].replace(' ', '_')}" for k in CRITERIA])
def test_criterion(k):
    assert evaluate(k), line(k)


if __name__ == "__main__":
    picked = [int(a) for a in sys.argv[1:]] or list(CRITERIA)
    results = [evaluate(k) for k in picked]
    sys.exit(0 if all(results) else 1)
