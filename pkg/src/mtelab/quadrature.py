"""Composite Gauss-Legendre quadrature with stability diagnostics."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "QuadratureError",
    "legendre_rule",
    "interval_rule",
    "integrate_1d",
    "integrate_checked",
]


class QuadratureError(RuntimeError):
    """Raised when two quadrature resolutions disagree beyond tolerance."""

    def __init__(self, message, *, coarse=None, fine=None, oscillation=None):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine
        self.oscillation = oscillation


@lru_cache(maxsize=64)
def legendre_rule(n):
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    return x, w


def interval_rule(a, b, nodes=32, panels=1):
    """Composite Gauss-Legendre rule on [a, b].

    Returns (points, weights); empty arrays when the interval is empty.
    """
    a = float(a)
    b = float(b)
    if not b > a:
        return np.empty(0), np.empty(0)
    x, w = legendre_rule(nodes)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return pts, wts


def integrate_1d(f, a, b, *, nodes=32, panels=2):
    """Integrate a vectorized callable over [a, b]."""
    pts, wts = interval_rule(a, b, nodes=nodes, panels=panels)
    if pts.size == 0:
        return 0.0
    vals = np.asarray(f(pts))
    return np.tensordot(wts, vals, axes=(0, 0))


def integrate_checked(f, a, b, *, tol=1e-9, nodes=32, panels=2):
    """Integrate with a refinement check.

    Evaluates at the base resolution and at doubled panel count; if the two
    estimates oscillate by more than ``tol`` a :class:`QuadratureError` with
    both values is raised. Returns ``(fine_value, oscillation)``.
    """
    coarse = integrate_1d(f, a, b, nodes=nodes, panels=panels)
    fine = integrate_1d(f, a, b, nodes=nodes, panels=2 * panels)
    osc = float(np.max(np.abs(np.asarray(fine) - np.asarray(coarse))))
    if osc > tol:
        raise QuadratureError(
            f"quadrature did not settle: |Δ|={osc:.3e} > tol={tol:.1e}",
            coarse=coarse,
            fine=fine,
            oscillation=osc,
        )
    return fine, osc
