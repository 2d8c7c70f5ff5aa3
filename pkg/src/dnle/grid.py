"""Parameters, regime classification and uniform 1D / radial grids."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .errors import InvalidParameters, RegimeError

QUASILINEAR_TOL = 1e-12
MIN_NODES = 8


class Regime(str, Enum):
    DEGENERATE = "degenerate"
    QUASILINEAR = "quasilinear"
    FAST = "fast"


def _check_exponents(m, p):
    if not (np.isfinite(m) and np.isfinite(p)):
        raise InvalidParameters("m and p must be finite")
    if m <= 0:
        raise InvalidParameters(f"m must be positive, got {m}")
    if p <= 1:
        raise InvalidParameters(f"p must exceed 1, got {p}")


def classify_regime(m: float, p: float) -> Regime:
    _check_exponents(m, p)
    kappa = m * (p - 1.0)
    if abs(kappa - 1.0) <= QUASILINEAR_TOL:
        return Regime.QUASILINEAR
    return Regime.DEGENERATE if kappa > 1.0 else Regime.FAST


@dataclass(frozen=True)
class Parameters:
    m: float
    p: float
    N: int = 1

    def __post_init__(self):
        _check_exponents(self.m, self.p)
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameters(f"N must be a positive integer, got {self.N}")

    @property
    def kappa(self) -> float:
        return self.m * (self.p - 1.0)

    @property
    def regime(self) -> Regime:
        return classify_regime(self.m, self.p)

    @property
    def mu(self) -> float:
        """Decay exponent 1/(kappa-1); only defined in the degenerate regime."""
        if self.regime is not Regime.DEGENERATE:
            raise RegimeError(f"mu is undefined in the {self.regime.value} regime")
        return 1.0 / (self.kappa - 1.0)

    def require(self, regime: Regime, what: str = "operation"):
        if self.regime is not regime:
            raise RegimeError(f"{what} requires {regime.value} regime, got {self.regime.value}")


@dataclass(frozen=True)
class Interval:
    length: float = 1.0


@dataclass(frozen=True)
class Ball:
    radius: float = 1.0
    dim: int = 1


Kind = Union[Interval, Ball]


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^dim (equals 2 for dim = 1)."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


@dataclass(frozen=True, eq=False)
class Domain:
    """Uniform node set with Dirichlet data at boundary nodes.

    `weights` are the dual-cell quadrature weights and `face_areas` the
    measures of the dual-cell faces at half nodes; together they make the
    flux-form operators conservative.
    """

    kind: Kind
    nodes: np.ndarray
    h: float
    boundary_mask: np.ndarray
    weights: np.ndarray = field(repr=False)
    face_areas: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def radial(self) -> bool:
        return isinstance(self.kind, Ball)

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary_mask

    @property
    def extent(self) -> float:
        return self.kind.radius if self.radial else self.kind.length

    @property
    def xi0(self) -> float:
        """Radius of the strip where the distance function is smooth."""
        return self.kind.radius if self.radial else 0.5 * self.kind.length

    @property
    def distance(self) -> np.ndarray:
        return distance_to_boundary(self, self.nodes)

    def check_field(self, values, name: str = "field") -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.shape != (self.n,):
            raise ValueError(f"{name} has shape {arr.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
        return arr

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def build_domain(kind: Kind, resolution: int) -> Domain:
    resolution = int(resolution)
    if resolution < MIN_NODES:
        raise InvalidParameters(f"resolution below minimum: {resolution} < {MIN_NODES}")
    if isinstance(kind, Interval):
        if kind.length <= 0:
            raise InvalidParameters("interval length must be positive")
        x = np.linspace(0.0, kind.length, resolution)
        h = kind.length / (resolution - 1)
        mask = np.zeros(resolution, dtype=bool)
        mask[[0, -1]] = True
        w = np.full(resolution, h)
        w[[0, -1]] = 0.5 * h
        areas = np.ones(resolution - 1)
    elif isinstance(kind, Ball):
        if kind.radius <= 0:
            raise InvalidParameters("ball radius must be positive")
        if int(kind.dim) != kind.dim or kind.dim < 1:
            raise InvalidParameters("ball dimension must be a positive integer")
        N = int(kind.dim)
        x = np.linspace(0.0, kind.radius, resolution)
        h = kind.radius / (resolution - 1)
        mask = np.zeros(resolution, dtype=bool)
        mask[-1] = True
        half = x[:-1] + 0.5 * h
        edges = np.concatenate([[0.0], half, [kind.radius]])
        omega = sphere_area(N)
        w = omega * (edges[1:] ** N - edges[:-1] ** N) / N
        areas = omega * half ** (N - 1)
    else:
        raise InvalidParameters(f"unknown domain kind {kind!r}")
    for arr in (x, mask, w, areas):
        arr.setflags(write=False)
    return Domain(kind=kind, nodes=x, h=h, boundary_mask=mask, weights=w, face_areas=areas)


def distance_to_boundary(domain: Domain, x):
    """Distance to the boundary; accepts a scalar or an array of positions."""
    xa = np.asarray(x, dtype=float)
    tol = 1e-12 * domain.extent
    if np.any(xa < -tol) or np.any(xa > domain.extent + tol):
        raise ValueError("position outside the domain")
    xa = np.clip(xa, 0.0, domain.extent)
    if domain.radial:
        d = domain.extent - xa
    else:
        d = np.minimum(xa, domain.extent - xa)
    return float(d) if d.ndim == 0 else d
