import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bump
from dnle.errors import RegimeError
from dnle.evolution import (
    EvolutionState,
    SolverControls,
    Trajectory,
    check_benilan_crandall,
    energy,
    entropy,
    entropy_dissipation,
    implicit_step,
    inverse_flux,
    rescale_degenerate,
    rescale_quasilinear,
    smoothing_envelope,
    solve,
    step,
)
from dnle.grid import Ball, Interval, Parameters, build_domain
from dnle.operators import FluxRegularization, discrete_p_laplacian, p_flux
from dnle.selfsimilar import barenblatt_spec, barenblatt_support, barenblatt_value
from dnle.stationary import compute_profile_f


@pytest.fixture(scope="module")
def sep_traj(pme, unit129):
    """Separate-variables run u0 = f, i.e. s = 1."""
    f = compute_profile_f(pme, unit129).f
    outs = np.linspace(0.5, 4.0, 15)
    tr = solve(f, 4.0, pme, unit129, SolverControls(dt=1e-3), outs)
    return f, tr


def test_zero_is_fixed(pme, unit129):
    z = np.zeros(unit129.n)
    for p in (1.5, 2.0, 3.0):
        P = Parameters(2.0, p)
        assert np.all(step(EvolutionState(0.0, z), 0.5, P, unit129).u == 0)
    tr = solve(z, 1.0, pme, unit129)
    assert np.all(tr.states == 0)


def test_step_barenblatt():
    P = Parameters(2, 2)
    spec = barenblatt_spec(P, M=1.0)
    L = 10.0
    d = build_domain(Interval(L), 1025)
    x = d.nodes - L / 2
    assert barenblatt_support(1.01, spec, P) < L / 2
    dt = 1e-3
    u = barenblatt_value(x, 1.0, spec, P)
    for _ in range(10):
        u = step(EvolutionState(0.0, u), dt, P, d).u
    exact = barenblatt_value(x, 1.01, spec, P)
    inner = np.abs(x) < 0.9 * barenblatt_support(1.01, spec, P)
    assert np.max(np.abs(u - exact)[inner]) < 10 * (dt + d.h) * exact.max()


def test_separate_variables_decay(sep_traj, pme):
    f, tr = sep_traj
    for t, u in zip(tr.times, tr.states):
        np.testing.assert_allclose(u, (1 + t) ** (-pme.mu) * f, atol=2e-3 * f.max())


def test_heat_mode():
    d = build_domain(Interval(1.0), 257)
    u0 = np.sin(np.pi * d.nodes)
    u0[[0, -1]] = 0
    tr = solve(u0, 0.1, Parameters(1, 2), d, SolverControls(dt=1e-4), [0.1])
    exact = np.exp(-np.pi ** 2 * 0.1) * u0
    i = d.interior
    assert np.max(np.abs(tr.states[-1][i] / exact[i] - 1)) < 1e-2


def test_finite_speed():
    P = Parameters(2, 2)
    d = build_domain(Interval(1.0), 257)
    x = d.nodes - 0.5
    u0 = np.clip(1 - (x / 0.1) ** 2, 0, None)
    # Barenblatt of height 1.5 and radius 0.15 at t = 0 lies above u0
    a = (1.5 * 0.15 * 12) ** (1 / 3)
    spec = barenblatt_spec(P, M=a ** 2 / 12, s=(0.15 / a) ** 3)
    upper0 = barenblatt_value(x, 0.0, spec, P)
    assert np.all(upper0 >= u0)
    T = 2e-3
    assert barenblatt_support(T, spec, P) < 0.5
    tr = solve(u0, T, P, d, SolverControls(dt=1e-5), np.linspace(T / 10, T, 10))
    for t, u in zip(tr.times, tr.states):
        outside = np.abs(x) > barenblatt_support(t, spec, P) + 2 * d.h
        assert np.any(outside)
        assert np.max(u[outside]) <= 1e-12


def test_fast_regime_rejected(unit129):
    with pytest.raises(RegimeError):
        solve(np.zeros(unit129.n), 1.0, Parameters(0.5, 2), unit129)


def test_solve_input_checks(pme, unit129):
    u = np.zeros(unit129.n)
    with pytest.raises(ValueError):
        solve(u - 1.0, 1.0, pme, unit129)
    bad = u.copy()
    bad[0] = 1.0
    with pytest.raises(ValueError):
        solve(bad, 1.0, pme, unit129)
    with pytest.raises(ValueError):
        solve(u, 1.0, pme, unit129, output_times=[0.5, 0.2])
    with pytest.raises(ValueError):
        SolverControls(dt=-1)


def test_initial_state_stored(pme, unit129):
    u0 = bump(unit129.nodes)
    tr = solve(u0, 0.1, pme, unit129, output_times=[0.0, 0.1])
    np.testing.assert_array_equal(tr.states[0], u0)
    assert tr.times[0] == 0.0


@pytest.mark.parametrize("m, p", [(3.0, 1.5), (2.0, 1.7), (4.0, 1.3)])
def test_singular_step_residual(m, p):
    d = build_domain(Interval(1.0), 129)
    P = Parameters(m, p)
    ctl = SolverControls(dt=1e-2, tol=1e-10)
    u0 = bump(d.nodes, 0.45, 0.3)
    u, _ = implicit_step(u0, 1e-2, P, d, ctl)
    r = u - 1e-2 * discrete_p_laplacian(d, u ** m, p, ctl.regularization(p)) - u0
    r[d.boundary_mask] = 0
    assert np.max(np.abs(r)) < 1e-6 * u0.max()
    assert np.all(u >= 0)


@given(st.floats(-1e4, 1e4), st.sampled_from([1.2, 1.5, 1.8]))
def test_inverse_flux(g, p):
    reg = FluxRegularization(1e-10)
    q = p_flux(g, p, reg)
    assert float(inverse_flux(np.array([q]), p, reg)[0]) == pytest.approx(g, rel=1e-10, abs=1e-12)


def test_ball_solve_mass_decay():
    d = build_domain(Ball(1.0, 3), 65)
    u0 = np.clip(1 - (d.nodes / 0.5) ** 2, 0, None) ** 2
    tr = solve(u0, 0.5, Parameters(2, 2, 3), d, SolverControls(dt=1e-3), np.linspace(0.05, 0.5, 10))
    assert np.all(np.diff(tr.mass) <= 1e-12)


def test_rescale_degenerate_identities(sep_traj, pme):
    f, tr = sep_traj
    R = rescale_degenerate(tr)
    k = int(np.argmin(np.abs(tr.times - 1.0)))
    assert tr.times[k] == pytest.approx(1.0)
    np.testing.assert_allclose(R.values[k], tr.states[k], rtol=1e-14)
    # v = (t/(1+t))^mu f increases towards f
    assert np.all(np.diff(R.values, axis=0) >= -1e-8)
    assert np.all(R.values <= f + 1e-3 * f.max())
    zero = Trajectory(tr.times, np.zeros_like(tr.states), pme, tr.domain)
    assert np.all(rescale_degenerate(zero).values == 0)


def test_rescale_quasilinear_heat_mode():
    d = build_domain(Interval(1.0), 129)
    u0 = np.sin(np.pi * d.nodes)
    u0[[0, -1]] = 0
    lam_h = 4 / d.h ** 2 * np.sin(np.pi * d.h / 2) ** 2
    tr = solve(u0, 0.1, Parameters(1, 2), d, SolverControls(dt=1e-4), np.linspace(0.0, 0.1, 6))
    exact = rescale_quasilinear(tr, lam_h, discrete=True)
    np.testing.assert_allclose(exact.values, np.broadcast_to(u0, exact.values.shape), atol=1e-9)
    cont = rescale_quasilinear(tr, np.pi ** 2)
    np.testing.assert_array_equal(cont.values[0], u0)
    assert np.max(np.abs(cont.values - u0)) < 1e-2
    with pytest.raises(RegimeError):
        rescale_quasilinear(Trajectory(tr.times, tr.states, Parameters(2, 2), d), np.pi ** 2)


def test_entropy_examples(pme, unit257, pme_profile):
    assert entropy(np.zeros(unit257.n), pme, unit257) == 0.0
    f = pme_profile.f
    phi = bump(unit257.nodes, 0.4, 0.2)
    E0 = entropy(f, pme, unit257)
    diffs = [abs(entropy(f + d * phi, pme, unit257) - E0) for d in (1e-3, 5e-4)]
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.1)


def test_entropy_monotone_and_dissipation(pme, unit129):
    u0 = bump(unit129.nodes, 0.4, 0.25)
    outs = np.geomspace(0.5, 20.0, 80)
    tr = solve(u0, 20.0, pme, unit129, SolverControls(dt=1e-3, growth=1.05, dt_rel=1e-3, dt_max=0.05), outs)
    R = rescale_degenerate(tr)
    E = np.array([entropy(v, pme, unit129) for v in R.values])
    assert np.all(np.diff(E) <= 1e-8)
    dE = np.gradient(E, R.times)
    D = np.array([entropy_dissipation(v, pme, unit129) for v in R.values])
    mid = slice(10, 60)
    np.testing.assert_allclose(-dE[mid], D[mid], rtol=0.05, atol=1e-6 * D.max())


def test_benilan_crandall_examples(sep_traj, pme, unit129):
    _, tr = sep_traj
    assert check_benilan_crandall(tr).passed
    zero = Trajectory(tr.times, np.zeros_like(tr.states), pme, unit129)
    assert check_benilan_crandall(zero).passed
    u0 = bump(unit129.nodes, 0.5, 0.3)
    run = solve(u0, 2.0, pme, unit129, SolverControls(dt=1e-3), np.linspace(0.1, 2.0, 20))
    rep = check_benilan_crandall(run)
    assert rep.passed and rep.min_margin >= -unit129.h


def test_smoothing_envelope(pme, unit129, pme_profile):
    f = compute_profile_f(pme, unit129).f
    t = np.linspace(0.5, 5.0, 10)
    exact = Trajectory(t, t[:, None] ** (-pme.mu) * f, pme, unit129)
    assert smoothing_envelope(exact) == pytest.approx(f.max(), rel=1e-14)
    zero = Trajectory(t, np.zeros((10, unit129.n)), pme, unit129)
    assert smoothing_envelope(zero) == 0.0


def test_smoothing_envelope_settles():
    P = Parameters(1, 3)
    d = build_domain(Interval(1.0), 129)
    f = compute_profile_f(P, d).f
    u0 = bump(d.nodes, 0.5, 0.2, 3.0)
    outs = np.geomspace(0.1, 50.0, 40)
    tr = solve(u0, 50.0, P, d, SolverControls(dt=1e-3, growth=1.05, dt_rel=1e-3, dt_max=1.0), outs)
    env = tr.times ** P.mu * tr.supnorm
    late = env[20:]
    assert np.all(np.abs(np.diff(late)) / late[1:] < 0.05)
    assert smoothing_envelope(tr) == pytest.approx(f.max(), rel=0.05)


# ---------------------------------------------------------------- flow invariants


def _pair(data, n):
    x = np.linspace(0, 1, n)
    u = np.zeros(n)
    for c, w, a in data:
        u += bump(x, c, w, a)
    u[[0, -1]] = 0
    return u


bumps = st.lists(st.tuples(st.floats(0.2, 0.8), st.floats(0.08, 0.3), st.floats(0.1, 2.0)),
                 min_size=1, max_size=3)


@settings(max_examples=15)
@given(bumps, bumps, st.floats(0.0, 1.0), st.sampled_from([(2.0, 2.0), (1.0, 3.0), (0.5, 3.0), (3.0, 1.5)]))
def test_comparison_and_l1_contraction(a, b, scale, mp):
    d = build_domain(Interval(1.0), 33)
    P = Parameters(*mp)
    u0 = _pair(a, d.n)
    w0 = u0 + scale * _pair(b, d.n)
    T = 0.5 * w0.max() ** (-(P.kappa - 1))
    ctl = SolverControls(dt=T / 100)
    outs = np.linspace(T / 10, T, 10)
    U = solve(u0, T, P, d, ctl, outs).states
    W = solve(w0, T, P, d, ctl, outs).states
    assert np.max(U - W) <= 1e-10
    # unordered data: L1 contraction of the positive part
    V = solve(_pair(b, d.n), T, P, d, ctl, outs).states
    pos = np.array([d.integrate(np.maximum(x - y, 0)) for x, y in zip(U, V)])
    assert np.all(np.diff(pos) <= 1e-10)


@settings(max_examples=15)
@given(bumps, st.sampled_from([(2.0, 2.0), (1.0, 3.0), (0.5, 3.0)]))
def test_mass_decay(a, mp):
    d = build_domain(Interval(1.0), 33)
    P = Parameters(*mp)
    u0 = _pair(a, d.n)
    T = 0.5 * u0.max() ** (-(P.kappa - 1))
    tr = solve(u0, T, P, d, SolverControls(dt=T / 100), np.linspace(T / 10, T, 10))
    assert np.all(np.diff(tr.mass) <= 1e-12)
    assert tr.mass[0] <= d.integrate(u0) + 1e-12


def test_energy_weight():
    d = build_domain(Interval(1.0), 33)
    u = bump(d.nodes)
    P = Parameters(2, 2)
    assert energy(u, P, d, 1.0) < energy(u, P, d)
