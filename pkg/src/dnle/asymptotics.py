"""Verification harness: degenerate rates, positivity, sandwich bounds, quasilinear envelopes and barriers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRegion, Infeasible, NotConverged, SandwichFailure, Unreached
from .evolution import Rescaled, Trajectory, rescale_quasilinear
from .grid import Domain, Parameters, Regime
from .operators import discrete_p_laplacian, gradients
from .selfsimilar import barenblatt_constants
from .stationary import Eigenpair


# ---------------------------------------------------------------- degenerate rate

@dataclass
class RateReport:
    times: np.ndarray
    errors: np.ndarray
    weighted_errors: np.ndarray
    slope: float
    intercept: float
    C_num: float
    window: tuple
    trivial: bool = False

    def to_dict(self):
        return {
            "slope": self.slope, "intercept": self.intercept, "C_num": self.C_num,
            "window": list(self.window), "trivial": self.trivial,
            "times": self.times.tolist(), "errors": self.errors.tolist(),
            "weighted_errors": self.weighted_errors.tolist(),
        }


def _interior_positive(domain: Domain, f):
    mask = domain.interior & (np.asarray(f) > 0)
    if not np.any(mask):
        raise ValueError("profile has no positive interior nodes")
    return mask


def rate_report_degenerate(traj: Trajectory, f, params: Parameters | None = None,
                           window: tuple | None = None) -> RateReport:
    """Error series of t^mu u against f and the log-log slope of the weighted error.

    The slope is fitted on `window` (default: the last two decades of sampled t).
    """
    params = params or traj.params
    params.require(Regime.DEGENERATE, "the rate report")
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    f = traj.domain.check_field(f, "f")
    keep = traj.times > 0
    t = traj.times[keep]
    U = traj.states[keep]
    if t.size == 0:
        raise ValueError("no positive sample times")
    mask = _interior_positive(traj.domain, f)
    diff = np.abs(U[:, mask] * (t ** params.mu)[:, None] - f[mask])
    errors = diff.max(axis=1)
    weighted = (diff / f[mask]).max(axis=1)
    trivial = bool(np.all(U[:, mask] == 0))
    if window is None:
        window = (t[-1] / 100.0, t[-1])
    sel = (t >= window[0] * (1 - 1e-12)) & (t <= window[1] * (1 + 1e-12)) & (weighted > 0)
    if sel.sum() >= 2:
        slope, intercept = np.polyfit(np.log(t[sel]), np.log(weighted[sel]), 1)
    else:
        slope, intercept = math.nan, math.nan
    return RateReport(times=t, errors=errors, weighted_errors=weighted, slope=float(slope),
                      intercept=float(intercept), C_num=float(np.max(t * weighted)),
                      window=(float(window[0]), float(window[1])), trivial=trivial)


# ---------------------------------------------------------------- positivity

@dataclass
class PositivityReport:
    T_inner: float
    T_boundary: float
    bound: float
    threshold: float
    delta: float

    def as_tuple(self):
        return self.T_inner, self.T_boundary


def _first_time(times, ok, what):
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        raise Unreached(f"{what} not reached by t = {times[-1]:g}")
    return float(times[idx[0]])


def barenblatt_positivity_time(eps: float, delta: float, params: Parameters) -> float:
    """Time for a Barenblatt subsolution of height <= eps and radius delta to double its radius.

    s = q^{p-1} delta^p eps^{-(kappa-1)} is the time offset that fits it under
    eps on a delta-ball; the radius a(t+s)^beta reaches 2 delta after s (2^{1/beta} - 1).
    """
    _, beta, q = barenblatt_constants(params)
    s = q ** (params.p - 1.0) * delta ** params.p * eps ** (-(params.kappa - 1.0))
    return s * (2.0 ** (1.0 / beta) - 1.0)


def positivity_experiment(traj: Trajectory, domain: Domain | None = None, delta: float = 0.1,
                          threshold: float | None = None) -> PositivityReport:
    """First sampled times of positivity on {d > delta} and on all interior nodes.

    A node counts as positive when u exceeds `threshold` (default 1e-8 sup u0):
    the implicit scheme leaks values far below the solver tolerance ahead of a
    front, which are not resolved and must not count. `bound` is the earliest
    T1 + T2 over samples T1, with T2 the Barenblatt comparison time for
    eps = min u on {d > delta} at T1.
    """
    domain = domain or traj.domain
    params = traj.params
    params.require(Regime.DEGENERATE, "the positivity experiment")
    U = traj.states
    thr = 1e-8 * U[0].max() if threshold is None else threshold
    d = domain.distance
    inner = d > delta
    if not np.any(inner):
        raise ValueError("delta leaves no inner nodes")
    pos_inner = np.all(U[:, inner] > thr, axis=1)
    pos_all = np.all(U[:, domain.interior] > thr, axis=1)
    T_inner = _first_time(traj.times, pos_inner, "inner positivity")
    T_boundary = _first_time(traj.times, pos_all, "positivity up to the boundary")
    bound = math.inf
    for k in np.nonzero(pos_inner)[0]:
        eps = U[k, inner].min()
        bound = min(bound, traj.times[k] + barenblatt_positivity_time(eps, delta, params))
    return PositivityReport(T_inner, T_boundary, float(bound), float(thr), delta)


@dataclass
class SandwichReport:
    s0: float
    s1: float
    t_min: float


def sandwich_check(traj: Trajectory, f, params: Parameters | None = None,
                   t_min: float | None = None) -> SandwichReport:
    """Fit (s+t)^{-mu} f bounds: s1 largest upper offset, s0 smallest lower offset after t_min.

    t_min defaults to the first sampled time at which u is positive at every
    interior node.
    """
    params = params or traj.params
    params.require(Regime.DEGENERATE, "the sandwich check")
    domain = traj.domain
    f = domain.check_field(f, "f")
    mask = _interior_positive(domain, f)
    mu = params.mu
    t, U = traj.times, traj.states[:, mask]
    fm = f[mask]
    if t_min is None:
        pos = np.all(U > 0, axis=1)
        if not np.any(pos):
            raise SandwichFailure("u never becomes positive at every interior node")
        t_min = float(t[np.argmax(pos)])
    with np.errstate(divide="ignore", over="ignore"):
        offs = (fm / U) ** (1.0 / mu) - t[:, None]
    s1 = float(np.min(np.where(U > 0, offs, np.inf)))
    late = t >= t_min
    if not np.any(late):
        raise SandwichFailure("no samples after t_min")
    if np.any(U[late] <= 0):
        raise SandwichFailure("u vanishes at an interior node after t_min")
    s0 = float(np.max(offs[late]))
    if not (math.isfinite(s0) and math.isfinite(s1)):
        raise SandwichFailure("no admissible offsets")
    return SandwichReport(s0=s0, s1=s1, t_min=t_min)


# ---------------------------------------------------------------- quasilinear

@dataclass
class EnvelopeConstants:
    times: np.ndarray
    c_upper: np.ndarray
    c_lower: np.ndarray

    @property
    def c_upper_inf(self) -> float:
        return float(self.c_upper[-1])

    @property
    def c_lower_inf(self) -> float:
        return float(self.c_lower[-1])

    @property
    def gap(self) -> np.ndarray:
        return self.c_upper - self.c_lower

    def monotone(self, tol: float = 1e-8) -> bool:
        return bool(np.all(np.diff(self.c_upper) <= tol) and np.all(np.diff(self.c_lower) >= -tol))


def envelope_constants(rescaled: Rescaled, S) -> EnvelopeConstants:
    """Per-time sup and inf of v/S over interior nodes."""
    domain = rescaled.domain
    S = domain.check_field(S, "S")
    inner = domain.interior
    if np.any(S[inner] <= 0):
        raise ValueError("S must be positive at interior nodes")
    ratio = rescaled.values[:, inner] / S[inner]
    return EnvelopeConstants(rescaled.times.copy(), ratio.max(axis=1), ratio.min(axis=1))


def relative_error_field(v, S, m: float, domain: Domain) -> np.ndarray:
    """phi = v^m / S^m - 1 at interior nodes; NaN on Dirichlet nodes."""
    v = domain.check_field(v, "v")
    S = domain.check_field(S, "S")
    inner = domain.interior
    if np.any(S[inner] <= 0):
        raise ValueError("S must be positive at interior nodes")
    out = np.full(domain.n, np.nan)
    out[inner] = (np.maximum(v[inner], 0.0) / S[inner]) ** m - 1.0
    return out


@dataclass
class QuasilinearReport:
    c_star: float
    gap: float
    ref_sup: float
    envelope: EnvelopeConstants
    ref_series: np.ndarray

    def to_dict(self):
        return {
            "c_star": self.c_star, "gap": self.gap, "ref_sup": self.ref_sup,
            "times": self.envelope.times.tolist(), "c_upper": self.envelope.c_upper.tolist(),
            "c_lower": self.envelope.c_lower.tolist(), "ref_sup_series": self.ref_series.tolist(),
        }


def quasilinear_convergence_report(traj: Trajectory, eigenpair: Eigenpair, m: float | None = None,
                                   gap_threshold: float = 0.05, discrete: bool = True) -> QuasilinearReport:
    """c* = (c_upper + c_lower)/2 at the horizon, with S = V^{1/m}.

    With discrete=True the orbit is rescaled by the scheme's own damping factor
    of the first eigenmode, which keeps the envelopes exactly monotone.
    """
    params = traj.params
    params.require(Regime.QUASILINEAR, "the quasilinear report")
    m = params.m if m is None else m
    resc = rescale_quasilinear(traj, eigenpair.lambda1, discrete=discrete)
    S = eigenpair.V ** (1.0 / m)
    env = envelope_constants(resc, S)
    c_star = 0.5 * (env.c_upper_inf + env.c_lower_inf)
    ref = np.array([np.nanmax(np.abs(relative_error_field(v, c_star * S, m, traj.domain)))
                    for v in resc.values])
    gap = float(env.gap[-1])
    report = QuasilinearReport(c_star=float(c_star), gap=gap, ref_sup=float(ref[-1]),
                               envelope=env, ref_series=ref)
    if gap > gap_threshold:
        raise NotConverged(f"envelope gap {gap:.3e} above {gap_threshold:g} at the horizon")
    return report


# ---------------------------------------------------------------- barriers

@dataclass
class ProfileBounds:
    """Measured constants of the eigen-profile V used by the barrier construction.

    C0^m d <= V <= C1^m d on the interior; gradient bounds K1, K2 are measured
    on the boundary strip {d < xi} through `gradient_bounds`.
    """

    V: np.ndarray
    lambda1: float
    p: float
    m: float
    domain: Domain
    C0: float
    C1: float
    phi_max: float
    psi_max: float

    def gradient_bounds(self, xi: float):
        g = np.abs(gradients(self.domain, self.V))
        mid = self.domain.nodes[:-1] + 0.5 * self.domain.h
        d = (self.domain.extent - mid) if self.domain.radial else np.minimum(mid, self.domain.extent - mid)
        sel = d < xi
        if not np.any(sel):
            return 0.0, 0.0
        return float(g[sel].min()), float(g[sel].max())


def measure_profile_bounds(eigenpair: Eigenpair, m: float, domain: Domain,
                           phi_max: float | None = None, psi_max: float | None = None) -> ProfileBounds:
    V = eigenpair.V
    inner = domain.interior
    ratio = V[inner] / domain.distance[inner]
    C0 = float(ratio.min() ** (1.0 / m))
    C1 = float(ratio.max() ** (1.0 / m))
    spread = (C1 / C0) ** m
    return ProfileBounds(V=V, lambda1=eigenpair.lambda1, p=eigenpair.p, m=m, domain=domain,
                         C0=C0, C1=C1,
                         phi_max=spread - 1.0 if phi_max is None else phi_max,
                         psi_max=1.0 - 1.0 / spread if psi_max is None else psi_max)


@dataclass
class BarrierSpec:
    which: str
    A: float
    B: float
    C: float
    xi: float
    delta: float
    horizon: float
    t0: float
    eps: float
    omega: float
    K1: float
    K2: float
    C1: float
    C0: float
    lambda1: float
    p: float
    m: float
    extras: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        """Defining inequality of the construction, as RHS - LHS (>= 0 when valid)."""
        p = self.p
        if self.which == "upper":
            return self.omega * self.B - (self.lambda1 * (self.C + 1.0) + self.A * (p - 1.0)) * self.xi ** (p - 1.0)
        beta4 = min(1.0, 4.0 ** (2.0 - p))
        decay = 2.0 * self.B * (p - 1.0) * beta4 * self.K1 ** p
        return min(decay - self.lambda1 * (self.C1 ** self.m * self.xi) ** (p - 1.0),
                   0.25 - self.B * self.C1 ** self.m * self.xi)

    def field(self, V, t):
        """Phi = C - B V - A (t - t0) or Psi = C' + B' V - A' (t - t0)."""
        sgn = -1.0 if self.which == "upper" else 1.0
        return self.C + sgn * self.B * np.asarray(V) - self.A * (t - self.t0)

    def region_end(self, V_strip_max: float) -> float:
        if self.which == "upper":
            return self.horizon
        return (self.C + self.B * V_strip_max) / self.A


def choose_upper_barrier(eps: float, bounds: ProfileBounds, t0: float = 0.0) -> BarrierSpec:
    """Constants for Phi = C - B V - A (t - t0) in the order C, xi1, B, A, delta.

    C = phi_max + 1. xi1 is halved from xi0 until omega / (4 C1^m xi1^p)
    >= 2 lambda1 (C + 1); then B = (1 + eps) / (4 C1^m xi1) keeps
    f'(V) in [k1/2, k1] up to the horizon, A takes half of the admissible range,
    and delta = eps / (2 B C1^m).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    p, m, lam = bounds.p, bounds.m, bounds.lambda1
    C1 = bounds.C1
    C = bounds.phi_max + 1.0
    beta = min(1.0, 2.0 ** (2.0 - p))
    xi = bounds.domain.xi0
    for _ in range(200):
        K1, K2 = bounds.gradient_bounds(xi)
        if K1 <= 0:
            raise Infeasible("gradient lower bound K1 vanishes on the boundary strip")
        omega = beta * 2.0 * (p - 1.0) * K1 ** p / C1
        if omega / (4.0 * C1 ** m * xi ** p) >= 2.0 * lam * (C + 1.0):
            break
        xi *= 0.5
        if xi < bounds.domain.h:
            raise Infeasible("boundary strip narrower than the grid spacing")
    B = (1.0 + eps) / (4.0 * C1 ** m * xi)
    A = (omega * B / xi ** (p - 1.0) - lam * (C + 1.0)) / (2.0 * (p - 1.0))
    if A <= 0:
        raise Infeasible("no admissible A")
    delta = eps / (2.0 * B * C1 ** m)
    T1 = (C - B * C1 ** m * delta - eps) / A
    if T1 <= 0:
        raise Infeasible("non-positive comparison time")
    return BarrierSpec("upper", A, B, C, xi, delta, T1, t0, eps, omega, K1, K2, C1, bounds.C0,
                       lam, p, m)


def choose_lower_barrier(eps: float, bounds: ProfileBounds, t0: float = 0.0,
                         A: float | None = None) -> BarrierSpec:
    """Constants for Psi = C' + B' V - A' (t - t0).

    On {0 <= Psi <= 1/2} we have 1 - Psi >= 1/2, so with B' C1^m xi2 = 1/4 the
    derivative g'(V) = 1 - Psi - B' V stays in [1/4, 1] and |g'|^{p-2} >=
    min(1, 4^{2-p}). The dissipative term then dominates lambda1 when
    xi2^p <= (p-1) min(1, 4^{2-p}) K1^p / (2 lambda1 C1^{1+m}).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    p, m, lam = bounds.p, bounds.m, bounds.lambda1
    C1, C0 = bounds.C1, bounds.C0
    Cp = bounds.psi_max + 1.0
    beta4 = min(1.0, 4.0 ** (2.0 - p))
    xi = bounds.domain.xi0
    for _ in range(200):
        K1, K2 = bounds.gradient_bounds(xi)
        if K1 <= 0:
            raise Infeasible("gradient lower bound K1 vanishes on the boundary strip")
        if xi ** p <= (p - 1.0) * beta4 * K1 ** p / (2.0 * lam * C1 ** (1.0 + m)):
            break
        xi *= 0.5
        if xi < bounds.domain.h:
            raise Infeasible("boundary strip narrower than the grid spacing")
    B = 1.0 / (4.0 * C1 ** m * xi)
    A = lam if A is None else A
    delta = min(eps / (2.0 * B * C1 ** m), 0.5 * xi)
    T2 = (Cp + B * C0 ** m * delta - eps) / A
    omega = beta4 * 2.0 * (p - 1.0) * K1 ** p / C1
    return BarrierSpec("lower", A, B, Cp, xi, delta, T2, t0, eps, omega, K1, K2, C1, C0, lam, p, m)


def barrier_residual(barrier: BarrierSpec, which: str | None, V, lambda1: float, p: float,
                     domain: Domain, times=None, return_field: bool = False):
    """Minimum of LHS - RHS of the REF supersolution inequality over the admissible region.

    upper: -(p-1) A (1+Phi)^{p-2} - [V^{1-p} Delta_p((Phi+1) V) + lambda1 (Phi+1)^{p-1}]
           on {Phi >= -1, d < xi}
    lower: (p-1) A' (1-Psi)^{p-2} - [V^{1-p} Delta_p((1-Psi) V) + lambda1 (1-Psi)^{p-1}]
           on {0 <= Psi <= 1/2, d < xi}
    """
    which = which or barrier.which
    V = domain.check_field(V, "V")
    strip = domain.interior & (domain.distance < barrier.xi) & (V > 0)
    if times is None:
        end = barrier.region_end(float(V[strip].max()) if np.any(strip) else 0.0)
        times = barrier.t0 + np.linspace(0.0, end, 41)
    best = math.inf
    fields = []
    for t in np.atleast_1d(times):
        F = barrier.field(V, t)
        if which == "upper":
            one = F + 1.0
            region = strip & (F >= -1.0)
            lhs = -(p - 1.0) * barrier.A * np.where(one > 0, one, 0.0) ** (p - 2.0) if p >= 2 else \
                -(p - 1.0) * barrier.A * np.abs(one) ** (p - 2.0)
        else:
            one = 1.0 - F
            region = strip & (F >= 0.0) & (F <= 0.5)
            lhs = (p - 1.0) * barrier.A * np.abs(one) ** (p - 2.0)
        lap = discrete_p_laplacian(domain, one * V, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            rhs = np.where(V > 0, lap / V ** (p - 1.0), 0.0) + lambda1 * np.sign(one) * np.abs(one) ** (p - 1.0)
        res = lhs - rhs
        if np.any(region):
            best = min(best, float(res[region].min()))
        if return_field:
            fields.append(np.where(region, res, np.nan))
    if not math.isfinite(best):
        raise EmptyRegion("no grid point falls in the barrier region")
    return (best, np.array(fields)) if return_field else best
