"""Numeric surrogate of unique continuous extension from a dense set.

A function defined only on a dense subset extends continuously to a boundary
point exactly when it maps Cauchy sequences to Cauchy sequences. The check
here is the computable stand-in: evaluate the function along a supplied
Cauchy sequence and require the image tail to settle. ``sin(1/x)`` along
``x_n = 2/((2n+1)pi)`` is the canonical reject; ``x**2`` along bounded
rationals the canonical accept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CauchyContinuityError",
    "ExtensionResult",
    "cauchy_limit",
    "unique_extension",
]


class CauchyContinuityError(ValueError):
    """The image of a Cauchy sequence failed to settle (no extension exists)."""


@dataclass(frozen=True)
class ExtensionResult:
    value: float
    tail_oscillation: float
    oscillations: tuple


def cauchy_limit(f, points, *, tol=1e-6, blocks=4):
    """Extension value of ``f`` along a Cauchy sequence of points.

    The image sequence is split into ``blocks`` nested tails; the oscillation
    (max - min) of each tail is recorded and the final tail must oscillate by
    at most ``tol``. Returns an :class:`ExtensionResult` whose value is the
    last image; raises :class:`CauchyContinuityError` otherwise.
    """
    pts = list(points)
    if len(pts) < 2 * blocks:
        raise ValueError(f"need at least {2 * blocks} sequence points")
    images = np.array([float(f(x)) for x in pts])
    if not np.all(np.isfinite(images)):
        raise CauchyContinuityError("image sequence contains non-finite values")
    n = images.size
    starts = [int(round(n * b / (blocks + 1.0))) for b in range(blocks + 1)]
    oscs = tuple(float(np.ptp(images[s:])) for s in starts)
    if oscs[-1] > tol:
        raise CauchyContinuityError(
            f"image tail oscillates by {oscs[-1]:.3e} > tol={tol:.1e}; "
            "the function is not Cauchy continuous along this sequence"
        )
    return ExtensionResult(value=float(images[-1]), tail_oscillation=oscs[-1], oscillations=oscs)


def unique_extension(f, sequences, *, tol=1e-6, blocks=4):
    """Common limit of ``f`` along several Cauchy sequences to the same point.

    All per-sequence limits must agree within ``tol`` (the uniqueness
    surrogate); the mean of the limits is returned.
    """
    limits = [cauchy_limit(f, seq, tol=tol, blocks=blocks).value for seq in sequences]
    spread = max(limits) - min(limits)
    if spread > tol:
        raise CauchyContinuityError(
            f"approach paths disagree by {spread:.3e} > tol={tol:.1e}; extension is not well defined"
        )
    return float(np.mean(limits))
