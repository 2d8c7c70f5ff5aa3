"""Backward Euler time stepping for u_t = Delta_p u^m (+ sigma u) with Dirichlet data.

The implicit system is solved by damped Newton on a tridiagonal Jacobian. The
unknown is u when m >= 1 and w = u^m when m < 1, so the map between the two is
always a nonnegative power >= 1 and stays differentiable at 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import NonConvergence, RegimeError
from .grid import Domain, Parameters, Regime
from .operators import (FluxRegularization, discrete_p_laplacian, gradients, p_energy, p_flux,
                        p_flux_derivative, p_laplacian_jacobian)


@dataclass
class SolverControls:
    """Time-step policy and inner-solver settings.

    With growth == 1 and dt_rel None the step is fixed. Otherwise the nominal
    step grows by `growth` after each accepted step, capped by dt_max and, when
    dt_rel is set, by max(dt_rel * t, dt). `tol` is relative to sup|u| of the
    previous step.
    """

    dt: float = 1e-3
    growth: float = 1.0
    dt_max: float = math.inf
    dt_rel: float | None = None
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 20
    epsilon: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.growth < 1:
            raise ValueError("growth factor must be >= 1")
        if self.dt_max <= 0:
            raise ValueError("dt_max must be positive")

    def regularization(self, p: float) -> FluxRegularization:
        if self.epsilon is None:
            return FluxRegularization.default(p)
        reg = FluxRegularization(self.epsilon)
        reg.validate(p)
        return reg


@dataclass(frozen=True)
class EvolutionState:
    t: float
    u: np.ndarray


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    params: Parameters
    domain: Domain
    source: float = 0.0
    t0: float = 0.0
    step_sizes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    output_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    mass: np.ndarray = field(default_factory=lambda: np.zeros(0))
    supnorm: np.ndarray = field(default_factory=lambda: np.zeros(0))
    entropy: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return self.times.size

    def state(self, k: int) -> EvolutionState:
        return EvolutionState(float(self.times[k]), self.states[k])

    @property
    def final(self) -> EvolutionState:
        return self.state(-1)


@dataclass
class Rescaled:
    """Rescaled orbit: `times` is tau (degenerate) or t (quasilinear)."""

    times: np.ndarray
    values: np.ndarray
    t: np.ndarray
    domain: Domain
    params: Parameters


JAC_EPS = 1e-3


def _unknown_maps(z, m):
    """Return (u, w, du/dz, dw/dz) for the chosen unknown."""
    zc = np.maximum(z, 0.0)
    if m >= 1:
        u = zc
        w = zc ** m if m != 1 else zc
        dw = m * zc ** (m - 1.0) if m != 1 else np.ones_like(zc)
        return u, w, np.ones_like(zc), dw
    r = 1.0 / m
    u = zc ** r
    du = r * zc ** (r - 1.0)
    return u, zc, du, np.ones_like(zc)


def implicit_step(u_old, dt, params: Parameters, domain: Domain, controls: SolverControls,
                  source: float = 0.0, guess=None):
    """Solve u - dt (Delta_p u^m + source u) = u_old. Returns (u, iterations).

    Newton stops when the max-norm residual is below controls.tol * sup|u_old|,
    so exponentially decaying solutions keep their relative accuracy.
    """
    m, p = params.m, params.p
    reg = controls.regularization(p)
    bnd = domain.boundary_mask
    u_old = np.where(bnd, 0.0, u_old)
    start = u_old if guess is None else guess
    z = np.maximum(start, 0.0) ** m if m < 1 else np.maximum(start, 0.0).copy()
    z[bnd] = 0.0

    def residual(z):
        u, w, du, dw = _unknown_maps(z, m)
        r = u - dt * (discrete_p_laplacian(domain, w, p, reg) + source * u) - u_old
        r[bnd] = 0.0
        return r, u, w, du, dw

    def jac_reg(w):
        # p > 2 gives no coupling across flat regions; a floor in the Jacobian
        # (not in the residual) lets Newton move a front more than one node per step.
        if p <= 2:
            return reg
        gmax = np.max(np.abs(np.diff(w))) / domain.h
        return FluxRegularization(max(reg.epsilon, JAC_EPS * gmax))

    scale = float(np.max(np.abs(u_old)))
    tol = controls.tol * (scale if scale > 0 else 1.0)
    if p < 2:
        return _mixed_newton(z, u_old, dt, params, domain, controls, source, tol)
    r, u, w, du, dw = residual(z)
    rn = np.max(np.abs(r))
    r2 = np.dot(r, r)
    for it in range(controls.max_iter):
        if rn <= tol:
            return u, it
        lo, di, up = p_laplacian_jacobian(domain, w, p, jac_reg(w))
        ab = np.zeros((3, domain.n))
        ab[0, 1:] = -dt * up[:-1] * dw[1:]
        ab[1] = (1.0 - dt * source) * du - dt * di * dw
        ab[2, :-1] = -dt * lo[1:] * dw[:-1]
        ab[1, bnd] = 1.0
        ab[0, 1:][bnd[:-1]] = 0.0
        ab[2, :-1][bnd[1:]] = 0.0
        tiny = np.abs(ab[1]) < 1e-14
        ab[1, tiny] = 1e-14
        try:
            delta = solve_banded((1, 1), ab, r, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NonConvergence(f"singular Newton system: {exc}") from exc
        if not np.all(np.isfinite(delta)):
            raise NonConvergence("non-finite Newton update")
        lam = 1.0
        for _ in range(30):
            z_try = np.maximum(z - lam * delta, 0.0)
            z_try[bnd] = 0.0
            trial = residual(z_try)
            tn = np.max(np.abs(trial[0]))
            t2 = np.dot(trial[0], trial[0])
            if t2 <= (1.0 - 1e-4 * lam) * r2 or tn <= tol:
                break
            lam *= 0.5
        else:
            raise NonConvergence(f"line search failed at residual {rn:.3e}")
        z = z_try
        r, u, w, du, dw = trial
        rn, r2 = tn, t2
    if rn <= tol:
        return u, controls.max_iter
    raise NonConvergence(f"Newton did not reach {tol:g} in {controls.max_iter} iterations "
                         f"(residual {rn:.3e})")


def inverse_flux(q, p: float, reg: FluxRegularization, iters: int = 60):
    """Face gradient g with p_flux(g) = q.

    Starts from the unregularized inverse, which lies on the near side of the
    root, so Newton on the concave branch converges monotonically.
    """
    g = np.sign(q) * np.abs(q) ** (1.0 / (p - 1.0))
    if reg.epsilon == 0:
        return g
    for _ in range(iters):
        d = (p_flux(g, p, reg) - q) / p_flux_derivative(g, p, reg)
        g = g - d
        if np.all(np.abs(d) <= 1e-15 * np.abs(g)):
            break
    return g


def _tridiagonal(domain: Domain, c):
    """(lower, diag, upper) of w -> div(c * diff(w)) / W with Dirichlet rows zeroed."""
    n = domain.n
    lower, upper, diag = np.zeros(n), np.zeros(n), np.zeros(n)
    upper[:-1] = c
    lower[1:] = c
    diag[:-1] -= c
    diag[1:] -= c
    out = []
    for arr in (lower, diag, upper):
        arr /= domain.weights
        arr[domain.boundary_mask] = 0.0
        out.append(arr)
    return out


def _mixed_newton(z, u_old, dt, params: Parameters, domain: Domain, controls: SolverControls,
                  source: float, tol: float):
    """Newton on (nodal unknown, face flux) for 1 < p < 2.

    Linearizing g = F^{-1}(q) instead of q = F(g) avoids the overshoot of
    Newton on the concave flux |g|^{p-1}, and the stopping test uses the node
    balance in q plus the face mismatch in gradient units: the primal residual
    carries round-off amplified by F'(0) ~ eps^{p-2}.
    """
    m, p = params.m, params.p
    reg = controls.regularization(p)
    bnd = domain.boundary_mask
    A, h = domain.face_areas, domain.h
    u, w, du, dw = _unknown_maps(z, m)
    q = p_flux(gradients(domain, w), p, reg)

    def div(f):
        d = np.zeros(domain.n)
        d[:-1] += A * f
        d[1:] -= A * f
        return d / domain.weights

    for it in range(controls.max_iter + 1):
        g = gradients(domain, w)
        gq = inverse_flux(q, p, reg)
        rf = gq - g
        rn = u - dt * (div(q) + source * u) - u_old
        rn[bnd] = 0.0
        g_tol = 1e3 * np.finfo(float).eps * max(float(np.max(np.abs(w))), 1e-300) / h
        if np.max(np.abs(rn)) <= tol and np.max(np.abs(rf)) <= g_tol:
            return u, it
        if it == controls.max_iter:
            break
        fp = p_flux_derivative(gq, p, reg)
        lo, di, up = _tridiagonal(domain, A * fp / h)
        ab = np.zeros((3, domain.n))
        ab[0, 1:] = -dt * up[:-1] * dw[1:]
        ab[1] = (1.0 - dt * source) * du - dt * di * dw
        ab[2, :-1] = -dt * lo[1:] * dw[:-1]
        ab[1, bnd] = 1.0
        ab[0, 1:][bnd[:-1]] = 0.0
        ab[2, :-1][bnd[1:]] = 0.0
        rhs = -rn - dt * div(fp * rf)
        rhs[bnd] = 0.0
        try:
            dz = solve_banded((1, 1), ab, rhs, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NonConvergence(f"singular Newton system: {exc}") from exc
        dq = fp * (np.diff(dw * dz) / h - rf)
        if not (np.all(np.isfinite(dz)) and np.all(np.isfinite(dq))):
            raise NonConvergence("non-finite Newton update")
        z = np.maximum(z + dz, 0.0)
        z[bnd] = 0.0
        q = q + dq
        u, w, du, dw = _unknown_maps(z, m)
    raise NonConvergence(f"mixed Newton did not converge in {controls.max_iter} iterations "
                         f"(node residual {np.max(np.abs(rn)):.3e})")


def step(state: EvolutionState, dt: float, params: Parameters, domain: Domain,
         controls: SolverControls | None = None, source: float = 0.0) -> EvolutionState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    controls = controls or SolverControls(dt=dt)
    _refuse_fast(params)
    u, _ = implicit_step(domain.check_field(state.u, "u"), dt, params, domain, controls, source)
    return EvolutionState(state.t + dt, u)


def _refuse_fast(params: Parameters):
    if params.regime is Regime.FAST:
        raise RegimeError("the fast-diffusion regime m(p-1) < 1 is not supported by the solver")


def default_output_times(t_end: float, t0: float = 0.0, count: int = 25) -> np.ndarray:
    lo = t0 + (t_end - t0) * 1e-3
    return np.geomspace(lo, t_end, count) if lo > 0 else np.linspace(t0, t_end, count + 1)[1:]


def energy(u, params: Parameters, domain: Domain, weight: float = 0.0) -> float:
    """(1/p) int |grad u^m|^p - weight m/(m+1) int u^{m+1}."""
    u = np.maximum(np.asarray(u, dtype=float), 0.0)
    m = params.m
    val = p_energy(domain, u ** m, params.p)
    if weight:
        val -= weight * m / (m + 1.0) * domain.integrate(u ** (m + 1.0))
    return val


def solve(u0, t_end: float, params: Parameters, domain: Domain,
          controls: SolverControls | None = None, output_times=None,
          source: float = 0.0, t0: float = 0.0) -> Trajectory:
    """Integrate from t0 to t_end, storing states at output_times.

    An output time equal to t0 stores the initial data.
    """
    _refuse_fast(params)
    controls = controls or SolverControls()
    u = domain.check_field(u0, "u0").copy()
    if np.any(u < -1e-12):
        raise ValueError("initial data must be nonnegative")
    if np.any(u[domain.boundary_mask] != 0):
        raise ValueError("initial data must vanish on the boundary")
    u = np.maximum(u, 0.0)
    outs = default_output_times(t_end, t0) if output_times is None else np.asarray(output_times, float)
    if outs.size == 0 or np.any(np.diff(outs) <= 0):
        raise ValueError("output times must be strictly increasing and nonempty")
    if outs[0] < t0 or outs[-1] > t_end * (1 + 1e-12):
        raise ValueError("output times must lie in [t0, t_end]")

    states, times, out_steps = [], [], []
    steps: list[float] = []
    k = 0
    if outs[0] == t0:
        states.append(u.copy())
        times.append(t0)
        out_steps.append(0)
        k = 1
    t = t0
    dt = controls.dt
    halvings = 0
    guess = None
    while k < outs.size:
        target = outs[k]
        remaining = target - t
        h = dt if dt < remaining * (1 - 1e-12) else remaining
        try:
            u_new, _ = implicit_step(u, h, params, domain, controls, source, guess)
        except NonConvergence:
            halvings += 1
            if halvings > controls.max_halvings:
                raise
            dt = 0.5 * h
            continue
        halvings = 0
        u = u_new
        steps.append(h)
        t = target if h == remaining else t + h
        if t == target:
            states.append(u.copy())
            times.append(t)
            out_steps.append(len(steps))
            k += 1
        dt = min(dt * controls.growth, controls.dt_max)
        if controls.dt_rel is not None:
            dt = min(dt, max(controls.dt_rel * t, controls.dt))
    S = np.array(states)
    return Trajectory(
        times=np.array(times), states=S, params=params, domain=domain, source=source, t0=t0,
        step_sizes=np.array(steps), output_steps=np.array(out_steps, dtype=int),
        mass=np.array([domain.integrate(s) for s in S]),
        supnorm=S.max(axis=1),
        entropy=np.array([energy(s, params, domain, source) for s in S]),
    )


def rescale_degenerate(traj: Trajectory, params: Parameters | None = None) -> Rescaled:
    """v = t^mu u on the clock tau = log t."""
    params = params or traj.params
    params.require(Regime.DEGENERATE, "degenerate rescaling")
    t = traj.times
    if np.any(t <= 0):
        raise ValueError("rescaling needs strictly positive times")
    v = traj.states * (t ** params.mu)[:, None]
    return Rescaled(np.log(t), v, t.copy(), traj.domain, params)


def discrete_growth_factor(traj: Trajectory, lam: float) -> np.ndarray:
    """prod(1 + lam dt_k) over the accepted steps up to each output time.

    This is the factor by which the implicit scheme damps the discrete first
    eigenmode, so it replaces exp(lam t) when an exactly stationary rescaled
    eigenmode is wanted.
    """
    logs = np.concatenate([[0.0], np.cumsum(np.log1p(lam * traj.step_sizes))])
    return math.exp(lam * traj.t0) * np.exp(logs[traj.output_steps])


def rescale_quasilinear(traj: Trajectory, lambda1: float, discrete: bool = False) -> Rescaled:
    """v = exp(lambda1 t) u; with discrete=True the scheme-consistent factor is used."""
    if lambda1 <= 0:
        raise ValueError("lambda1 must be positive")
    traj.params.require(Regime.QUASILINEAR, "quasilinear rescaling")
    fac = discrete_growth_factor(traj, lambda1) if discrete else np.exp(lambda1 * traj.times)
    return Rescaled(traj.times.copy(), traj.states * fac[:, None], traj.times.copy(),
                    traj.domain, traj.params)


def entropy(v, params: Parameters, domain: Domain, weight: float | None = None) -> float:
    """(1/p) int |grad v^m|^p - (m/(m+1)) weight int v^{m+1}; weight defaults to mu."""
    v = domain.check_field(v, "v")
    if np.any(v < -1e-12):
        raise ValueError("entropy needs nonnegative v")
    if weight is None:
        weight = params.mu
    return energy(v, params, domain, weight)


def rescaled_velocity(v, params: Parameters, domain: Domain, weight: float | None = None):
    """Right-hand side Delta_p v^m + weight v of the rescaled equation."""
    weight = params.mu if weight is None else weight
    v = np.maximum(domain.check_field(v, "v"), 0.0)
    out = discrete_p_laplacian(domain, v ** params.m, params.p) + weight * v
    out[domain.boundary_mask] = 0.0
    return out


def entropy_dissipation(v, params: Parameters, domain: Domain, weight: float | None = None) -> float:
    """m int v^{m-1} v_tau^2 with v_tau from the rescaled equation."""
    vt = rescaled_velocity(v, params, domain, weight)
    v = np.maximum(v, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(v > 0, params.m * v ** (params.m - 1.0) * vt ** 2, 0.0)
    return domain.integrate(dens)


@dataclass
class BenilanCrandallReport:
    min_margin: float
    max_l1_ratio: float
    tolerance: float
    passed: bool
    margins: np.ndarray


def check_benilan_crandall(traj: Trajectory, params: Parameters | None = None,
                           tolerance: float | None = None) -> BenilanCrandallReport:
    """Centered-difference check of u_t >= -mu u / t and t ||u_t||_1 <= mu ||u0||_1.

    The pointwise margin min_x (u_t + mu u/t) is reported in units of
    sup_x u / t, so it is dimensionless; it passes if >= -tolerance (default h).
    The L1 ratio uses the first stored state as u0.
    """
    params = params or traj.params
    params.require(Regime.DEGENERATE, "the Benilan-Crandall check")
    if len(traj) < 3:
        raise ValueError("need at least three output times")
    tol = traj.domain.h if tolerance is None else tolerance
    mu = params.mu
    t, U = traj.times, traj.states
    ut = (U[2:] - U[:-2]) / (t[2:] - t[:-2])[:, None]
    tm = t[1:-1]
    um = U[1:-1]
    raw = np.min(ut + mu * um / tm[:, None], axis=1)
    scale = um.max(axis=1) / tm
    margins = np.where(scale > 0, raw / np.where(scale > 0, scale, 1.0), 0.0)
    m0 = traj.domain.integrate(np.abs(U[0]))
    l1 = np.array([traj.domain.integrate(np.abs(r)) for r in ut])
    ratio = float(np.max(tm * l1) / m0) if m0 > 0 else 0.0
    min_margin = float(margins.min())
    passed = min_margin >= -tol and ratio <= mu * (1 + tol)
    return BenilanCrandallReport(min_margin, ratio, tol, passed, margins)


def smoothing_envelope(traj: Trajectory, params: Parameters | None = None) -> float:
    """max over sampled t > 0 of t^mu sup_x u(t)."""
    params = params or traj.params
    params.require(Regime.DEGENERATE, "the smoothing envelope")
    pos = traj.times > 0
    if not np.any(pos):
        return 0.0
    return float(np.max(traj.times[pos] ** params.mu * traj.states[pos].max(axis=1)))
