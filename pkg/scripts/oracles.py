"""Closed-form reference values frozen into the test suite.

1D profile maximum: multiplying Delta_p w + mu w^{1/m} = 0 by w' gives the
first integral (p-1)/p |w'|^p = mu m/(m+1) (W^q - w^q), q = (m+1)/m, with W
the maximum of w. Integrating dw/|w'| from 0 to W over the half interval
fixes W through a Beta function.

Eigenvalue: (p-1) (pi_p/L)^p, cross-checked by shooting on
(|v'|^{p-2} v')' + lam v^{p-1} = 0.
"""
import argparse

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import beta


def profile_max(m, p, length=1.0):
    mu = 1.0 / (m * (p - 1) - 1)
    q = (m + 1) / m
    K = (p * mu * m / ((p - 1) * (m + 1))) ** (-1.0 / p)
    I = beta(1.0 / q, 1.0 - 1.0 / p) / q
    W = (0.5 * length / (K * I)) ** (1.0 / (1.0 - q / p))
    return W ** (1.0 / m)


def eigen_formula(p, length=1.0):
    pi_p = 2 * np.pi / (p * np.sin(np.pi / p))
    return (p - 1) * (pi_p / length) ** p


def eigen_shooting(p, length=1.0):
    # state (v, phi) with phi = |v'|^{p-2} v'; the first zero of v is at L for the right lam
    def first_zero(lam):
        def rhs(x, y):
            v, phi = y
            return [np.sign(phi) * abs(phi) ** (1 / (p - 1)), -lam * np.sign(v) * abs(v) ** (p - 1)]
        hit = lambda x, y: y[0]
        hit.terminal, hit.direction = True, -1
        sol = solve_ivp(rhs, (0, 10 * length), [0.0, 1.0], events=hit, rtol=1e-12, atol=1e-14)
        return sol.t_events[0][0] - length
    guess = eigen_formula(p, length)
    return brentq(first_zero, 0.5 * guess, 2 * guess, xtol=1e-14, rtol=1e-14)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--length", type=float, default=1.0)
    args = ap.parse_args()
    for m, p in [(2, 2), (1, 3), (2, 3), (3, 1.5)]:
        print(f"profile max m={m} p={p}: {profile_max(m, p, args.length):.17g}")
    for p in [2.0, 3.0, 1.5, 4.0]:
        print(f"lambda1 p={p}: formula {eigen_formula(p, args.length):.17g}  shooting {eigen_shooting(p, args.length):.17g}")
