"""Sesquilinear-form identities of the preconditioned operators, in matrix form.

Each function returns the two sides computed along independent paths so
callers can compare them.
"""

from __future__ import annotations

import numpy as np

from .precond import HelmholtzSetup, TwoLevelOperators


def laplace_identity(setup: HelmholtzSetup, x):
    """x* A K^{-1} M x  versus  x*Mx - kappa^2 g + i sigma g,  g = y* K y, y = K^{-1} M x.

    Only meaningful for a constant loss.
    """
    p = setup.problem
    y = setup.apply_exact_laplace(x)
    lhs = complex(np.vdot(x, setup.A @ y))
    g = float(np.real(np.vdot(y, p.K @ y)))
    mass = float(np.real(np.vdot(x, p.M @ x)))
    rhs = mass - p.kappa2 * g + 1j * p.loss.value * g
    return lhs, rhs


def strip_identity(setup: HelmholtzSetup, x):
    """Re z + (kappa^2/sigma) Im z  versus  x*Mx / x*x  for the Rayleigh quotient z."""
    p = setup.problem
    xx = float(np.real(np.vdot(x, x)))
    z = complex(np.vdot(x, setup.A @ setup.apply_exact_laplace(x))) / xx
    lhs = z.real + p.kappa2 / p.loss.value * z.imag
    return lhs, float(np.real(np.vdot(x, p.M @ x))) / xx


def two_level_identity(tl: TwoLevelOperators, x):
    """x* A B2 x  versus  x*Mx - kappa^2 x*M q + i x*M_sigma q,  q the Q-part of B2 x."""
    s = tl.setup
    p = s.problem
    lhs = complex(np.vdot(x, s.A @ tl.apply(x)))
    q = tl.q_part(x)
    rhs = (np.vdot(x, p.M @ x) - p.kappa2 * np.vdot(x, p.M @ q)
           + 1j * np.vdot(x, p.M_sigma @ q))
    return lhs, complex(rhs)


def random_vectors(n: int, count: int, seed: int = 0, complex_: bool = True):
    rng = np.random.default_rng(seed)
    out = rng.standard_normal((count, n))
    if complex_:
        out = out + 1j * rng.standard_normal((count, n))
    return out


def relative_gap(lhs, rhs) -> float:
    return float(abs(lhs - rhs) / max(abs(rhs), np.finfo(float).tiny))
