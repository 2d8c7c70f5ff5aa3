"""Asymptotic profile f (Delta_p f^m + mu f = 0) and the first Dirichlet p-eigenpair."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded
from scipy.optimize import brentq
from scipy.special import jv

from .errors import NonConvergence
from .evolution import SolverControls, implicit_step
from .grid import Domain, Parameters, Regime
from .operators import (FluxRegularization, discrete_p_laplacian, gradients, p_energy,
                        p_laplacian_jacobian)


@dataclass
class StationaryProfile:
    f: np.ndarray
    w: np.ndarray
    residual_norm: float
    C1: float
    C2: float
    iterations: int
    method: str

    @property
    def boundary_constants(self):
        return self.C1, self.C2


@dataclass
class Eigenpair:
    lambda1: float
    V: np.ndarray
    residual_norm: float
    iterations: int
    p: float


# ---------------------------------------------------------------- profile f

def functional_J(w, params: Parameters, domain: Domain) -> float:
    """(1/p) int |grad w|^p - (m/(m+1)) mu int w^{(m+1)/m}."""
    params.require(Regime.DEGENERATE, "functional J")
    w = np.maximum(domain.check_field(w, "w"), 0.0)
    m = params.m
    return p_energy(domain, w, params.p) - m / (m + 1.0) * params.mu * domain.integrate(w ** ((m + 1.0) / m))


def functional_J_gradient(w, params: Parameters, domain: Domain, reg=None) -> np.ndarray:
    """Euclidean gradient of functional_J in the nodal values (zero on Dirichlet nodes)."""
    w = np.maximum(w, 0.0)
    g = -domain.weights * (discrete_p_laplacian(domain, w, params.p, reg) + params.mu * w ** (1.0 / params.m))
    g[domain.boundary_mask] = 0.0
    return g


def stationary_residual(w, params: Parameters, domain: Domain, reg=None) -> np.ndarray:
    """Delta_p w + mu w^{1/m} at interior nodes (0 on Dirichlet nodes)."""
    w = np.maximum(w, 0.0)
    r = discrete_p_laplacian(domain, w, params.p, reg) + params.mu * w ** (1.0 / params.m)
    r[domain.boundary_mask] = 0.0
    return r


def _stiffness(domain: Domain, w, p: float) -> np.ndarray:
    """Banded weighted stiffness K(w) with K(w) w = -W Delta_p w (Kacanov metric)."""
    g = gradients(domain, w)
    if p == 2:
        a = np.ones_like(g)
    else:
        floor = max(1e-3 * np.max(np.abs(g)), 1e-12)
        a = (g * g + floor * floor) ** (0.5 * (p - 2.0))
    c = domain.face_areas * a / domain.h
    n = domain.n
    ab = np.zeros((3, n))
    ab[1, :-1] += c
    ab[1, 1:] += c
    ab[0, 1:] = -c
    ab[2, :-1] = -c
    bnd = domain.boundary_mask
    ab[1, bnd] = 1.0
    ab[0, 1:][bnd[:-1]] = 0.0
    ab[0, 1:][bnd[1:]] = 0.0
    ab[2, :-1][bnd[1:]] = 0.0
    ab[2, :-1][bnd[:-1]] = 0.0
    return ab


def _initial_guess(domain: Domain, m: float, scale: float = 0.1) -> np.ndarray:
    d = domain.distance / domain.xi0
    w = scale * d * (2.0 - d)
    w[domain.boundary_mask] = 0.0
    return w


def _newton_profile(w, params: Parameters, domain: Domain, tol: float, max_iter: int = 30):
    """Newton on Delta_p w + mu w^{1/m} = 0. Returns (w, residual) or raises."""
    p, m, mu = params.p, params.m, params.mu
    reg = FluxRegularization.default(p)
    bnd = domain.boundary_mask
    r = stationary_residual(w, params, domain, reg)
    rn = np.max(np.abs(r))
    for _ in range(max_iter):
        if rn <= tol:
            return w, rn
        lo, di, up = p_laplacian_jacobian(domain, w, p, reg)
        with np.errstate(divide="ignore"):
            src = np.where(w > 0, mu / m * w ** (1.0 / m - 1.0), 0.0)
        ab = np.zeros((3, domain.n))
        ab[0, 1:] = up[:-1]
        ab[1] = di + src
        ab[2, :-1] = lo[1:]
        ab[1, bnd] = 1.0
        ab[0, 1:][bnd[:-1]] = 0.0
        ab[2, :-1][bnd[1:]] = 0.0
        delta = solve_banded((1, 1), ab, r, check_finite=False)
        lam = 1.0
        for _ in range(20):
            w_try = np.maximum(w - lam * delta, 0.0)
            w_try[bnd] = 0.0
            r_try = stationary_residual(w_try, params, domain, reg)
            tn = np.max(np.abs(r_try))
            if tn < (1 - 1e-4 * lam) * rn:
                break
            lam *= 0.5
        else:
            raise NonConvergence("profile Newton line search failed")
        w, r, rn = w_try, r_try, tn
    if rn <= tol:
        return w, rn
    raise NonConvergence(f"profile Newton stalled at residual {rn:.3e}")


def _minimize_J(params: Parameters, domain: Domain, tol: float, max_iter: int, w0=None):
    """Kacanov-preconditioned projected descent on J with Armijo steps, then Newton."""
    p = params.p
    reg = FluxRegularization.default(p)
    w = _initial_guess(domain, params.m) if w0 is None else np.maximum(np.asarray(w0, float), 0.0)
    w = w.copy()
    w[domain.boundary_mask] = 0.0
    if not np.all(w[domain.interior] > 0):
        raise ValueError("initial guess must be positive at interior nodes")
    J = functional_J(w, params, domain)
    it = 0
    for it in range(1, max_iter + 1):
        grad = functional_J_gradient(w, params, domain, reg)
        d = solve_banded((1, 1), _stiffness(domain, w, p), grad, check_finite=False)
        slope = float(np.dot(grad, d))
        s = 1.0
        while True:
            w_try = np.maximum(w - s * d, 0.0)
            J_try = functional_J(w_try, params, domain)
            if J_try <= J - 1e-4 * s * slope or s < 1e-12:
                break
            s *= 0.5
        w, J = w_try, J_try
        res = np.max(np.abs(stationary_residual(w, params, domain, reg)))
        scale = params.mu * np.max(w) ** (1.0 / params.m)
        if res <= tol:
            return w, res, it
        if res <= 1e-3 * scale and np.all(w[domain.interior] > 0):
            try:
                w_n, res_n = _newton_profile(w, params, domain, tol)
                return w_n, res_n, it
            except NonConvergence:
                pass
    res = np.max(np.abs(stationary_residual(w, params, domain, reg)))
    raise NonConvergence(f"minimize_J reached residual {res:.3e} after {it} iterations")


def _long_time_limit(params: Parameters, domain: Domain, tol: float, max_iter: int, v0=None):
    """Evolve v_tau = Delta_p v^m + mu v with growing implicit steps."""
    mu = params.mu
    v = _initial_guess(domain, params.m) ** (1.0 / params.m) if v0 is None else np.asarray(v0, float).copy()
    v[domain.boundary_mask] = 0.0
    controls = SolverControls(dt=0.05, tol=1e-13)
    dtau, tau = 0.05, 0.0
    for it in range(1, max_iter + 1):
        try:
            v_new, _ = implicit_step(v, dtau, params, domain, controls, source=mu)
        except NonConvergence:
            dtau *= 0.5
            if dtau < 1e-8:
                raise
            continue
        vel = np.max(np.abs(v_new - v)) / dtau
        v, tau = v_new, tau + dtau
        if vel < tol:
            break
        dtau = min(dtau * 1.3, 2.0)
    else:
        raise NonConvergence(f"long-time limit not stationary after {max_iter} steps")
    w = v ** params.m
    res = np.max(np.abs(stationary_residual(w, params, domain)))
    return w, res, it


def compute_profile_f(params: Parameters, domain: Domain, method: str = "minimize_J",
                      tolerance: float = 1e-8, max_iter: int = 2000, initial=None) -> StationaryProfile:
    """Certified discrete solution of Delta_p f^m + mu f = 0, f > 0 inside.

    `initial` is a w = f^m guess for minimize_J and a v guess for long_time_limit.
    """
    params.require(Regime.DEGENERATE, "the asymptotic profile")
    if method == "minimize_J":
        w, res, it = _minimize_J(params, domain, tolerance, max_iter, initial)
    elif method == "long_time_limit":
        w, res, it = _long_time_limit(params, domain, tolerance, max_iter, initial)
    else:
        raise ValueError(f"unknown method {method!r}")
    f = np.maximum(w, 0.0) ** (1.0 / params.m)
    f[domain.boundary_mask] = 0.0
    if not np.all(f[domain.interior] > 0):
        raise NonConvergence("profile is not positive at every interior node")
    C1, C2 = boundary_growth_check(f, domain, params.m)
    return StationaryProfile(f=f, w=f ** params.m, residual_norm=float(res), C1=C1, C2=C2,
                             iterations=it, method=method)


def boundary_growth_check(f, domain: Domain, m: float):
    """(C1, C2): extreme values of f / d^{1/m} over interior nodes."""
    f = domain.check_field(f, "f")
    fi = f[domain.interior]
    if np.any(fi <= 0):
        raise ValueError("f must be positive at interior nodes")
    ratio = fi / domain.distance[domain.interior] ** (1.0 / m)
    return float(ratio.min()), float(ratio.max())


def boundary_principle_check(w, domain: Domain) -> float:
    """Smallest inward one-sided difference quotient of w at the Dirichlet nodes."""
    w = domain.check_field(w, "w")
    h = domain.h
    slopes = [(w[-2] - w[-1]) / h]
    if not domain.radial:
        slopes.append((w[1] - w[0]) / h)
    return float(min(slopes))


# ---------------------------------------------------------------- eigenpair

def rayleigh_quotient(phi, p: float, domain: Domain) -> float:
    """int |grad phi|^p / int |phi|^p."""
    phi = domain.check_field(phi, "phi")
    den = domain.integrate(np.abs(phi) ** p)
    if den == 0 or not np.any(phi):
        raise ValueError("Rayleigh quotient of the zero function")
    return p * p_energy(domain, phi, p) / den


def eigen_residual(V, lambda1: float, p: float, domain: Domain, reg=None) -> np.ndarray:
    V = np.asarray(V, float)
    r = discrete_p_laplacian(domain, V, p, reg) + lambda1 * np.sign(V) * np.abs(V) ** (p - 1.0)
    r[domain.boundary_mask] = 0.0
    return r


def heat_eigenfunction_shape(domain: Domain) -> np.ndarray:
    """First Dirichlet Laplacian eigenfunction on the domain, max 1."""
    x = domain.nodes
    if not domain.radial:
        v = np.sin(math.pi * x / domain.extent)
    else:
        N = domain.kind.dim
        nu = N / 2.0 - 1.0
        if N == 1:
            v = np.cos(0.5 * math.pi * x / domain.extent)
        else:
            # first positive zero of J_nu lies in (0, nu + 5)
            grid = np.linspace(1e-6, nu + 6.0, 2000)
            vals = jv(nu, grid)
            k = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0][0]
            j = brentq(lambda z: jv(nu, z), grid[k], grid[k + 1])
            r = np.maximum(x, 1e-9 * domain.extent)
            v = r ** (-nu) * jv(nu, j * r / domain.extent)
    v = np.where(domain.boundary_mask, 0.0, v)
    return v / v.max()


def _p_poisson(rhs, u, p: float, domain: Domain, tol: float = 1e-14, max_iter: int = 100):
    """Solve -Delta_p u = rhs by Newton with Armijo steps on the convex energy."""
    reg = FluxRegularization.default(p)
    bnd = domain.boundary_mask
    Wr = domain.weights * rhs

    def energy(u):
        return p_energy(domain, u, p) - float(np.dot(Wr, u))

    E = energy(u)
    for _ in range(max_iter):
        r = -discrete_p_laplacian(domain, u, p, reg) - rhs
        r[bnd] = 0.0
        if np.max(np.abs(r)) <= tol * max(1.0, np.max(np.abs(rhs))):
            return u
        g = gradients(domain, u)
        jreg = reg if p <= 2 else FluxRegularization(1e-6 * np.max(np.abs(g)))
        lo, di, up = p_laplacian_jacobian(domain, u, p, jreg)
        ab = np.zeros((3, domain.n))
        ab[0, 1:] = -up[:-1]
        ab[1] = -di
        ab[2, :-1] = -lo[1:]
        ab[1, bnd] = 1.0
        ab[0, 1:][bnd[:-1]] = 0.0
        ab[2, :-1][bnd[1:]] = 0.0
        delta = solve_banded((1, 1), ab, r, check_finite=False)
        grad = domain.weights * r
        slope = float(np.dot(grad, delta))
        s = 1.0
        while s > 1e-10:
            u_try = u - s * delta
            u_try[bnd] = 0.0
            E_try = energy(u_try)
            if E_try <= E - 1e-4 * s * slope:
                break
            s *= 0.5
        else:
            return u
        u, E = u_try, E_try
    return u


def _eigen_newton(V, lam, p: float, domain: Domain, tol: float, max_iter: int = 30):
    """Newton on (Delta_p V + lam V^{p-1} = 0, V[i*] = 1)."""
    reg = FluxRegularization.default(p)
    inner = np.nonzero(domain.interior)[0]
    k = inner.size
    i_star = int(np.argmax(V[inner]))

    def resid(V, lam):
        return eigen_residual(V, lam, p, domain, reg)[inner]

    r = resid(V, lam)
    rn = np.max(np.abs(r))
    for _ in range(max_iter):
        if rn <= tol:
            return V, lam, rn
        lo, di, up = p_laplacian_jacobian(domain, V, p, reg)
        Vi = V[inner]
        with np.errstate(divide="ignore"):
            diag = di[inner] + (p - 1.0) * lam * np.where(Vi > 0, Vi ** (p - 2.0), 0.0)
        upper = up[inner][:-1]
        lower = lo[inner][1:]
        A = sp.diags([lower, diag, upper], [-1, 0, 1], shape=(k, k))
        col = sp.csr_matrix((np.abs(Vi) ** (p - 1.0))[:, None])
        row = sp.csr_matrix(([1.0], ([0], [i_star])), shape=(1, k))
        Jm = sp.bmat([[A, col], [row, None]])
        rhs = np.concatenate([r, [V[inner][i_star] - 1.0]])
        step = spla.spsolve(Jm.tocsc(), rhs)
        lam_step = 1.0
        for _ in range(20):
            V_try = V.copy()
            V_try[inner] = V[inner] - lam_step * step[:k]
            V_try = np.maximum(V_try, 0.0)
            l_try = lam - lam_step * step[k]
            r_try = resid(V_try, l_try)
            tn = np.max(np.abs(r_try))
            if tn < (1 - 1e-4 * lam_step) * rn:
                break
            lam_step *= 0.5
        else:
            raise NonConvergence("eigen Newton line search failed")
        V, lam, r, rn = V_try, l_try, r_try, tn
    if rn <= tol:
        return V, lam, rn
    raise NonConvergence(f"eigen Newton stalled at residual {rn:.3e}")


def compute_first_eigenpair(p: float, domain: Domain, tolerance: float = 1e-8,
                            max_iter: int = 500, initial=None) -> Eigenpair:
    """First Dirichlet eigenpair of -Delta_p with max V = 1.

    Nonlinear inverse iteration (each step minimizes the p-energy against the
    previous iterate, i.e. a descent step on the Rayleigh quotient in the
    energy metric) until the quotient settles, then Newton on the bordered
    system for the final residual.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    V = heat_eigenfunction_shape(domain) if initial is None else np.maximum(np.asarray(initial, float), 0.0)
    V = np.where(domain.boundary_mask, 0.0, V)
    V = V / V.max()
    lam = rayleigh_quotient(V, p, domain)
    it = 0
    for it in range(1, max_iter + 1):
        rhs = V ** (p - 1.0)
        guess = V * lam ** (-1.0 / (p - 1.0))
        U = _p_poisson(rhs, guess, p, domain)
        U = np.maximum(U, 0.0)
        V_new = U / U.max()
        lam_new = rayleigh_quotient(V_new, p, domain)
        change = abs(lam_new - lam) / lam_new + np.max(np.abs(V_new - V))
        V, lam = V_new, lam_new
        if change < 1e-7:
            break
    try:
        V, lam, res = _eigen_newton(V, lam, p, domain, tolerance)
    except NonConvergence:
        res = np.max(np.abs(eigen_residual(V, lam, p, domain)))
        if res > tolerance:
            raise
    V = V / V.max()
    res = float(np.max(np.abs(eigen_residual(V, lam, p, domain))))
    if res > tolerance:
        raise NonConvergence(f"eigen residual {res:.3e} above tolerance")
    if not np.all(V[domain.interior] > 0):
        raise NonConvergence("eigenfunction is not positive inside")
    return Eigenpair(lambda1=float(lam), V=V, residual_norm=res, iterations=it, p=p)


def exact_eigenvalue_1d(p: float, length: float = 1.0) -> float:
    """(p-1) (pi_p / L)^p with pi_p = 2 pi / (p sin(pi/p))."""
    pi_p = 2.0 * math.pi / (p * math.sin(math.pi / p))
    return (p - 1.0) * (pi_p / length) ** p
