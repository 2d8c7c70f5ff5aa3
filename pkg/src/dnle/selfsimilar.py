"""Self-similar solutions U = (t+s)^{-alpha} h(|x| (t+s)^{-beta}) and their profile ODE.

With g = h^m the profile satisfies, after one integration,

    |g'|^{p-2} g' = -beta r h - (alpha - beta N) r^{1-N} int_0^r s^{N-1} h ds,

which is integrated here as a first-order system in (g, I) with
I(r) = int_0^r s^{N-1} h. Heights are normalized by h(0) = M, so g(0) = M^m.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationFailure, InvalidParameters, NoCrossing, RegimeError
from .grid import Interval, Parameters, Regime, build_domain
from .operators import discrete_p_laplacian

LINE_TOL = 1e-12


class Case(str, Enum):
    SEPARATE_VARIABLES = "separate_variables"
    BARENBLATT = "barenblatt"
    INTERMEDIATE = "intermediate"
    SLOW_DECAY = "slow_decay"


@dataclass(frozen=True)
class SelfSimilarSpec:
    alpha: float
    beta: float
    s: float = 0.0
    M: float = 1.0

    def __post_init__(self):
        if self.beta < 0 or self.s < 0 or self.M <= 0:
            raise InvalidParameters("need beta >= 0, s >= 0, M > 0")

    def case(self, params: Parameters) -> Case:
        if self.beta == 0:
            return Case.SEPARATE_VARIABLES
        gap = self.alpha - self.beta * params.N
        if abs(gap) <= 1e-12:
            return Case.BARENBLATT
        return Case.INTERMEDIATE if gap > 0 else Case.SLOW_DECAY

    @classmethod
    def on_line(cls, beta: float, params: Parameters, s: float = 0.0, M: float = 1.0):
        """Spec with alpha fixed by (kappa - 1) alpha + p beta = 1."""
        return cls((1.0 - params.p * beta) / (params.kappa - 1.0), beta, s, M)


@dataclass
class ProfileCurve:
    r: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    support_radius: float | None
    crossing_slope: float | None
    case: Case
    spec: SelfSimilarSpec
    params: Parameters
    _sol: object = None

    @property
    def h(self) -> np.ndarray:
        return np.maximum(self.g, 0.0) ** (1.0 / self.params.m)

    def g_at(self, r):
        """g at arbitrary radii; 0 beyond the support radius."""
        r = np.asarray(r, dtype=float)
        r0 = self.r[1]
        out = np.empty_like(r)
        near = r < r0
        out[near] = np.interp(r[near], self.r[:2], self.g[:2])
        far = ~near
        if np.any(far):
            rr = r[far]
            vals = np.full(rr.shape, 0.0)
            end = self.support_radius if self.support_radius is not None else self.r[-1]
            inside = rr <= end
            if np.any(inside):
                vals[inside] = self._sol(rr[inside])[0]
            if self.support_radius is None and np.any(~inside):
                raise ValueError("radius beyond the integrated range")
            out[far] = vals
        return np.maximum(out, 0.0)

    def h_at(self, r):
        return self.g_at(r) ** (1.0 / self.params.m)


@dataclass
class DecayClassification:
    gamma: float
    sign: int
    coefficient: float
    gamma1: float
    beta1: float
    alpha1: float


def _degenerate(params: Parameters):
    if params.regime is not Regime.DEGENERATE:
        raise RegimeError(f"self-similar analysis requires the degenerate regime, got {params.regime.value}")


def check_alpha_beta(alpha: float, beta: float, params: Parameters) -> float:
    _degenerate(params)
    return (params.kappa - 1.0) * alpha + params.p * beta - 1.0


def barenblatt_constants(params: Parameters):
    """(alpha_B, beta_B, q) for the source-type solution.

    q is the coefficient in h = (q (a^P - r^P))_+^E with P = p/(p-1) and
    E = (p-1)/(kappa-1); it is fixed by substituting the profile into the ODE.
    """
    _degenerate(params)
    m, p, N = params.m, params.p, params.N
    k = params.kappa
    if k + p / N <= 1:
        raise InvalidParameters("parameters outside the range kappa + p/N > 1")
    alpha = 1.0 / (k - 1.0 + p / N)
    beta = alpha / N
    q = (k - 1.0) / (m * p) * beta ** (1.0 / (p - 1.0))
    return alpha, beta, q


def unscaled_barenblatt_coefficient(params: Parameters) -> float:
    """((kappa-1)/p) (alpha_B/N)^{1/(p-1)}: the coefficient without the 1/m factor.

    Kept for comparison only; it coincides with q when m = 1 and does not
    produce a solution otherwise.
    """
    _, _, q = barenblatt_constants(params)
    return params.m * q


def _exponents(params: Parameters):
    p = params.p
    return p / (p - 1.0), (p - 1.0) / (params.kappa - 1.0)


def barenblatt_radius_from_height(M: float, params: Parameters, coefficient: float | None = None) -> float:
    """Profile radius a with h(0) = M."""
    P, E = _exponents(params)
    q = barenblatt_constants(params)[2] if coefficient is None else coefficient
    return (M ** (1.0 / E) / q) ** (1.0 / P)


def barenblatt_spec(params: Parameters, M: float = 1.0, s: float = 0.0) -> SelfSimilarSpec:
    alpha, beta, _ = barenblatt_constants(params)
    return SelfSimilarSpec(alpha, beta, s, M)


def barenblatt_profile(xi, params: Parameters, a: float, coefficient: float | None = None):
    P, E = _exponents(params)
    q = barenblatt_constants(params)[2] if coefficient is None else coefficient
    xi = np.abs(np.asarray(xi, dtype=float))
    base = np.maximum(q * (a ** P - xi ** P), 0.0)
    return base ** E


def barenblatt_value(x, t, spec: SelfSimilarSpec, params: Parameters, a: float | None = None,
                     coefficient: float | None = None):
    """Closed-form Barenblatt solution at |x| and time t (offset spec.s).

    The radius `a` defaults to the one matching h(0) = spec.M.
    """
    tau = t + spec.s
    if np.any(np.asarray(tau) <= 0):
        raise ValueError("t + s must be positive")
    if a is None:
        a = barenblatt_radius_from_height(spec.M, params, coefficient)
    alpha, beta, _ = barenblatt_constants(params)
    xi = np.abs(np.asarray(x, dtype=float)) * tau ** (-beta)
    out = tau ** (-alpha) * barenblatt_profile(xi, params, a, coefficient)
    return float(out) if out.ndim == 0 else out


def barenblatt_time_derivative(x, t, spec: SelfSimilarSpec, params: Parameters, a: float | None = None,
                               coefficient: float | None = None):
    """Analytic U_t = (t+s)^{-alpha-1} (-alpha G - beta xi G'(xi))."""
    tau = t + spec.s
    if a is None:
        a = barenblatt_radius_from_height(spec.M, params, coefficient)
    alpha, beta, q0 = barenblatt_constants(params)
    q = q0 if coefficient is None else coefficient
    P, E = _exponents(params)
    xi = np.abs(np.asarray(x, dtype=float)) * tau ** (-beta)
    base = np.maximum(q * (a ** P - xi ** P), 0.0)
    G = base ** E
    with np.errstate(divide="ignore", invalid="ignore"):
        dG = np.where(base > 0, E * base ** (E - 1.0) * (-q * P * xi ** (P - 1.0)), 0.0)
    out = tau ** (-alpha - 1.0) * (-alpha * G - beta * xi * dG)
    return float(out) if out.ndim == 0 else out


def barenblatt_support(t, spec: SelfSimilarSpec, params: Parameters, a: float | None = None) -> float:
    if a is None:
        a = barenblatt_radius_from_height(spec.M, params)
    _, beta, _ = barenblatt_constants(params)
    return a * (t + spec.s) ** beta


def support_radius_bound(M: float, params: Parameters, beta: float) -> float:
    """a <= M^{(k-1)/p} (m p/(k-1))^{(p-1)/p} beta^{-1/p}."""
    _degenerate(params)
    if beta <= 0:
        raise ValueError("beta must be positive")
    m, p, k = params.m, params.p, params.kappa
    return M ** ((k - 1.0) / p) * (m * p / (k - 1.0)) ** ((p - 1.0) / p) * beta ** (-1.0 / p)


def _inv_flux(F, p):
    return np.sign(F) * np.abs(F) ** (1.0 / (p - 1.0))


def integrate_profile(spec: SelfSimilarSpec, params: Parameters, r_max: float,
                      rtol: float = 1e-12, atol: float = 1e-14, samples: int = 2001,
                      method: str = "LSODA") -> ProfileCurve:
    """Integrate the profile ODE from the origin until g first vanishes.

    Raises NoCrossing (with the curve attached) if g stays positive up to r_max.
    """
    _degenerate(params)
    if abs(check_alpha_beta(spec.alpha, spec.beta, params)) > 1e-10:
        raise InvalidParameters("(alpha, beta) is off the self-similarity line")
    m, p, N = params.m, params.p, params.N
    alpha, beta, M = spec.alpha, spec.beta, spec.M
    c = alpha - beta * N
    case = spec.case(params)

    def rhs(r, y):
        g, I = y
        h = max(g, 0.0) ** (1.0 / m)
        F = -beta * r * h - c * I / r ** (N - 1)
        return [_inv_flux(F, p), r ** (N - 1) * h]

    def hit_zero(r, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1

    r0 = 1e-6 * r_max
    c_or = (p - 1.0) / p * (alpha / N * M) ** (1.0 / (p - 1.0))
    y0 = [M ** m - c_or * r0 ** (p / (p - 1.0)), M * r0 ** N / N]
    sol = solve_ivp(rhs, (r0, r_max), y0, method=method, rtol=rtol, atol=atol,
                    events=hit_zero, dense_output=True)
    if sol.status == -1:
        raise IntegrationFailure(sol.message)
    crossed = sol.status == 1 and sol.t_events[0].size > 0
    end = float(sol.t_events[0][0]) if crossed else float(sol.t[-1])

    rs = np.unique(np.concatenate([np.linspace(r0, end, samples), np.geomspace(r0, end, samples)]))
    Y = sol.sol(rs)
    g = Y[0]
    h = np.maximum(g, 0.0) ** (1.0 / m)
    dg = _inv_flux(-beta * rs * h - c * Y[1] / rs ** (N - 1), p)
    r_all = np.concatenate([[0.0], rs])
    g_all = np.concatenate([[M ** m], g])
    dg_all = np.concatenate([[0.0], dg])
    slope = None
    if crossed:
        g_all[-1] = 0.0
        I_a = float(sol.y_events[0][0][1])
        slope = float(-np.abs(c * I_a / end ** (N - 1)) ** (1.0 / (p - 1.0)) * np.sign(c))
        dg_all[-1] = slope
    curve = ProfileCurve(r_all, g_all, dg_all, end if crossed else None, slope, case, spec, params, sol.sol)
    if not crossed:
        raise NoCrossing(f"g stays positive on [0, {r_max}]", curve)
    return curve


def rescale_profile_identity(M: float, r, params: Parameters, beta: float, r_max: float | None = None):
    """Check h(r; M) = M h(M^{-(k-1)/p} r; 1) and a(M) = M^{(k-1)/p} a(1).

    Returns (max pointwise residual over r, relative support-radius error).
    """
    k, p = params.kappa, params.p
    scale = M ** ((k - 1.0) / p)
    r = np.asarray(r, dtype=float)
    if r_max is None:
        r_max = 2.0 * support_radius_bound(max(M, 1.0), params, beta)
    cM = integrate_profile(SelfSimilarSpec.on_line(beta, params, M=M), params, r_max)
    c1 = integrate_profile(SelfSimilarSpec.on_line(beta, params, M=1.0), params, r_max)
    res = np.max(np.abs(cM.h_at(r) - M * c1.h_at(r / scale)))
    rad = abs(cM.support_radius - scale * c1.support_radius) / cM.support_radius
    return float(res), float(rad)


def classify_decay(alpha: float, beta: float, params: Parameters, tol: float = 1e-9) -> DecayClassification:
    """Leading decay exponent gamma = alpha m / beta for alpha < beta N and its sign class."""
    _degenerate(params)
    m, p, N, k = params.m, params.p, params.N, params.kappa
    if beta <= 0 or alpha >= beta * N:
        raise InvalidParameters("decay classification needs alpha < beta N")
    gamma = alpha * m / beta
    coef = gamma * (p - 1.0) + p - N
    sign = 0 if abs(coef) <= tol else int(math.copysign(1, coef))
    _, beta_B, _ = barenblatt_constants(params)
    beta1 = k * beta_B
    return DecayClassification(gamma=gamma, sign=sign, coefficient=coef,
                               gamma1=(N - p) / (p - 1.0), beta1=beta1,
                               alpha1=(1.0 - p * beta1) / (k - 1.0))


def profile_ode_residual(g_fn, r, alpha: float, beta: float, params: Parameters, dr: float = 1e-4):
    """r^{1-N}(r^{N-1}|g'|^{p-2}g')' + beta r h' + alpha h with h = g^{1/m}, by central differences."""
    m, p, N = params.m, params.p, params.N
    r = np.asarray(r, dtype=float)

    def flux(x):
        d = (g_fn(x + dr) - g_fn(x - dr)) / (2 * dr)
        return x ** (N - 1) * np.sign(d) * np.abs(d) ** (p - 1.0)

    def h(x):
        return np.maximum(g_fn(x), 0.0) ** (1.0 / m)

    div = (flux(r + dr) - flux(r - dr)) / (2 * dr) / r ** (N - 1)
    dh = (h(r + dr) - h(r - dr)) / (2 * dr)
    return div + beta * r * dh + alpha * h(r)


def barenblatt_pde_residual(params: Parameters, nodes: int, t: float = 1.0, M: float = 1.0,
                            coefficient: float | None = None, keep: float = 0.8) -> float:
    """Discrete L1 norm of U_t - Delta_{p,h} U^m for the closed form on a 1D grid.

    The grid spans twice the support diameter at time t, centered on the
    source; only nodes with |x| < keep * support radius are scored, away from
    the free boundary. L1 rather than max: for p != 2 the profile behaves like
    a - b|x|^{p/(p-1)} at the origin and the centre node keeps an O(1) error.
    """
    if params.N != 1:
        raise InvalidParameters("the grid residual is implemented for N = 1")
    spec = barenblatt_spec(params, M)
    a = barenblatt_radius_from_height(M, params, coefficient)
    R = barenblatt_support(t, spec, params, a)
    L = 4.0 * R
    domain = build_domain(Interval(L), nodes)
    x = domain.nodes - 0.5 * L
    U = barenblatt_value(x, t, spec, params, a, coefficient)
    Ut = barenblatt_time_derivative(x, t, spec, params, a, coefficient)
    res = Ut - discrete_p_laplacian(domain, U ** params.m, params.p)
    mask = np.abs(x) < keep * R
    return float(np.sum(np.abs(res[mask])) * domain.h)
