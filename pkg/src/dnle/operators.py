"""Flux-form discrete p-Laplacian and the vector monotonicity inequalities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Domain

DEFAULT_EPS_SINGULAR = 1e-10


@dataclass(frozen=True)
class FluxRegularization:
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    @classmethod
    def default(cls, p: float) -> "FluxRegularization":
        return cls(DEFAULT_EPS_SINGULAR if p < 2 else 0.0)

    def validate(self, p: float):
        if p < 2 and self.epsilon == 0.0:
            raise ValueError("epsilon = 0 is only allowed for p >= 2")


def _reg(reg, p):
    if reg is None:
        return FluxRegularization.default(p)
    if isinstance(reg, (int, float)):
        reg = FluxRegularization(float(reg))
    return reg


def p_flux(g, p: float, reg: FluxRegularization | float | None = None):
    """(g^2 + eps^2)^((p-2)/2) g; the exact |g|^(p-2) g when eps = 0."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    eps = _reg(reg, p).epsilon
    g = np.asarray(g, dtype=float)
    if p == 2.0:
        out = g.copy()
    elif eps > 0:
        out = (g * g + eps * eps) ** (0.5 * (p - 2.0)) * g
    else:
        a = np.abs(g)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(a > 0, a ** (p - 2.0) * g, 0.0)
    return float(out) if out.ndim == 0 else out


def p_flux_derivative(g, p: float, reg: FluxRegularization | float | None = None):
    """Derivative of p_flux in g. Infinite at 0 for p < 2 without regularization."""
    eps = _reg(reg, p).epsilon
    g = np.asarray(g, dtype=float)
    if p == 2.0:
        return np.ones_like(g)
    s = g * g + eps * eps
    with np.errstate(divide="ignore", invalid="ignore"):
        d = s ** (0.5 * (p - 4.0)) * ((p - 1.0) * g * g + eps * eps)
    if p > 2:
        d = np.where(s > 0, d, 0.0)
    return d


def gradients(domain: Domain, w) -> np.ndarray:
    return np.diff(w) / domain.h


def face_fluxes(domain: Domain, w, p: float, reg=None) -> np.ndarray:
    """Area-weighted fluxes at the half nodes."""
    return domain.face_areas * p_flux(gradients(domain, w), p, reg)


def discrete_p_laplacian(domain: Domain, w, p: float, reg=None) -> np.ndarray:
    """Delta_p w at every node; Dirichlet rows are returned as 0.

    Interior rows are (A_{i+1/2} F_{i+1/2} - A_{i-1/2} F_{i-1/2}) / W_i with
    F the p-flux of the half-node difference quotient. On a ball the origin
    row has no inward face, which is the symmetric stencil.
    """
    w = domain.check_field(w, "w")
    q = face_fluxes(domain, w, p, reg)
    div = np.zeros(domain.n)
    div[:-1] += q
    div[1:] -= q
    out = div / domain.weights
    out[domain.boundary_mask] = 0.0
    return out


def p_laplacian_jacobian(domain: Domain, w, p: float, reg=None):
    """Tridiagonal Jacobian of discrete_p_laplacian as (lower, diag, upper).

    lower[i] = dL_i/dw_{i-1} (lower[0] unused), upper[i] = dL_i/dw_{i+1}.
    Dirichlet rows are zero.
    """
    g = gradients(domain, w)
    c = domain.face_areas * p_flux_derivative(g, p, reg) / domain.h
    n = domain.n
    lower = np.zeros(n)
    upper = np.zeros(n)
    diag = np.zeros(n)
    upper[:-1] = c
    lower[1:] = c
    diag[:-1] -= c
    diag[1:] -= c
    lower /= domain.weights
    upper /= domain.weights
    diag /= domain.weights
    for arr in (lower, upper, diag):
        arr[domain.boundary_mask] = 0.0
    return lower, diag, upper


def p_energy(domain: Domain, w, p: float) -> float:
    """(1/p) * integral of |grad w|^p, exact for the piecewise linear interpolant."""
    g = gradients(domain, w)
    return float(np.sum(domain.face_areas * domain.h * np.abs(g) ** p) / p)


def gamma1(p: float) -> float:
    """Strong-monotonicity constant used for p >= 2."""
    return 2.0 ** (2.0 - p)


def gamma2(p: float) -> float:
    return min(1.0, 2.0 * (p - 1.0))


def _vec_flux(a, p):
    norm = np.linalg.norm(a, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > 0, norm ** (p - 2.0), 0.0)
    return scale * a


def monotonicity_lhs(a, b, p: float):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return np.sum((_vec_flux(a, p) - _vec_flux(b, p)) * (a - b), axis=-1)


def monotonicity_gap(a, b, p: float, gamma: float | None = None):
    """LHS minus RHS of the strong monotonicity inequality.

    p >= 2:     <|a|^{p-2}a - |b|^{p-2}b, a-b> >= gamma1 |a-b|^p
    1 < p < 2:  <...> >= gamma2 |a-b|^2 / (|a|^{2-p} + |b|^{2-p})

    Works row-wise on stacked vectors (last axis is the vector index).
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lhs = monotonicity_lhs(a, b, p)
    diff = np.linalg.norm(a - b, axis=-1)
    if p >= 2:
        g = gamma1(p) if gamma is None else gamma
        rhs = g * diff ** p
    else:
        g = gamma2(p) if gamma is None else gamma
        den = np.linalg.norm(a, axis=-1) ** (2 - p) + np.linalg.norm(b, axis=-1) ** (2 - p)
        with np.errstate(divide="ignore", invalid="ignore"):
            rhs = np.where(den > 0, g * diff ** 2 / den, 0.0)
    out = lhs - rhs
    return float(out) if np.ndim(out) == 0 else out
