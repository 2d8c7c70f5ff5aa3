"""Numerical experiments for u_t = Delta_p(u^m) with Dirichlet data on intervals and balls."""
from .errors import (ConfigError, DNLEError, EmptyRegion, Infeasible, IntegrationFailure,
                     InvalidParameters, NoCrossing, NonConvergence, NotConverged, RegimeError,
                     SandwichFailure, Unreached)
from .grid import Ball, Domain, Interval, Parameters, Regime, build_domain, classify_regime, distance_to_boundary

__all__ = [
    "Ball", "Domain", "Interval", "Parameters", "Regime", "build_domain", "classify_regime",
    "distance_to_boundary", "ConfigError", "DNLEError", "EmptyRegion", "Infeasible",
    "IntegrationFailure", "InvalidParameters", "NoCrossing", "NonConvergence", "NotConverged",
    "RegimeError", "SandwichFailure", "Unreached",
]
