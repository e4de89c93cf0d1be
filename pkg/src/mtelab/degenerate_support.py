"""Three-threshold margin construction and its degenerate support.

For K=3, transforming all pairwise cost differences through their own CDFs
yields the triple (V01, V02, V12). The quantile identity

    F01^-1(V01) = F02^-1(V02) - F12^-1(V12)

holds pointwise, so the triple lives on a two-dimensional surface inside the
unit cube rather than filling it. ``support_cloud`` samples the surface;
``assumption32_violation_report`` measures occupied grid volume across
shrinking cell sizes to certify Lebesgue-nullity against a full-support
uniform control.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .laws import LawError, difference_law

__all__ = [
    "LSVector",
    "CloudSummary",
    "ViolationReport",
    "triple_margin_laws",
    "ls_vector",
    "ls_vectors",
    "constraint_residuals",
    "support_cloud",
    "occupied_fraction",
    "assumption32_violation_report",
    "write_support_cloud_csv",
]

_PAIRS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class LSVector:
    """One point of the (V01, V02, V12) construction."""

    v01: float
    v02: float
    v12: float
    residual: float

    def as_array(self):
        return np.array([self.v01, self.v02, self.v12])


@dataclass(frozen=True)
class CloudSummary:
    n_points: int
    max_residual: float
    occupied_fraction: float
    epsilon: float


@dataclass(frozen=True)
class ViolationReport:
    epsilons: tuple
    cloud_volumes: tuple
    control_volumes: tuple
    control_points: int
    max_residual: float
    decreasing: bool
    lebesgue_null: bool

    def to_dict(self):
        return {
            "epsilons": list(self.epsilons),
            "cloud_volumes": list(self.cloud_volumes),
            "control_volumes": list(self.control_volumes),
            "control_points": self.control_points,
            "max_residual": self.max_residual,
            "decreasing": self.decreasing,
            "lebesgue_null": self.lebesgue_null,
        }


def triple_margin_laws(errors):
    """Difference laws for the pairs (0,1), (0,2), (1,2)."""
    if errors.n_treatments != 3:
        raise LawError("the three-threshold construction needs exactly K=3")
    return tuple(difference_law(errors, a, b) for a, b in _PAIRS)


def ls_vectors(errors, u):
    """Map error draws (n, 3) to (V01, V02, V12) rows."""
    laws = triple_margin_laws(errors)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    cols = [law.cdf(u[:, a] - u[:, b]) for law, (a, b) in zip(laws, _PAIRS)]
    return np.column_stack(cols)


def constraint_residuals(errors, points):
    """F01^-1(v01) - (F02^-1(v02) - F12^-1(v12)) per point."""
    laws = triple_margin_laws(errors)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    q01 = laws[0].quantile(points[:, 0])
    q02 = laws[1].quantile(points[:, 1])
    q12 = laws[2].quantile(points[:, 2])
    return q01 - (q02 - q12)


def ls_vector(errors, u):
    """Single-draw LSVector with its constraint residual."""
    point = ls_vectors(errors, np.asarray(u, dtype=float)[None, :])[0]
    residual = float(constraint_residuals(errors, point[None, :])[0])
    return LSVector(v01=float(point[0]), v02=float(point[1]), v12=float(point[2]), residual=residual)


def occupied_fraction(points, epsilon):
    """Fraction of epsilon-grid cells of [0,1]^3 containing >= 1 point."""
    cells = int(round(1.0 / epsilon))
    idx = np.clip((np.asarray(points) * cells).astype(np.int64), 0, cells - 1)
    flat = (idx[:, 0] * cells + idx[:, 1]) * cells + idx[:, 2]
    return np.unique(flat).size / float(cells**3)


def support_cloud(errors, n, seed, *, u_draws=None, epsilon=0.05):
    """Sample n points of the construction plus a residual/occupancy summary."""
    if n < 1:
        raise ValueError("need n >= 1 points")
    if u_draws is None:
        rng = np.random.default_rng(seed)
        u_draws = errors.sample(n, rng)
    points = ls_vectors(errors, u_draws)
    residuals = constraint_residuals(errors, points)
    summary = CloudSummary(
        n_points=points.shape[0],
        max_residual=float(np.max(np.abs(residuals))),
        occupied_fraction=occupied_fraction(points, epsilon),
        epsilon=epsilon,
    )
    return points, summary


def assumption32_violation_report(errors, n, seed, *, epsilons=(0.1, 0.05, 0.025), control_points=None):
    """Occupied-volume estimates along shrinking epsilon, with a uniform control.

    The control samples enough points to saturate the finest grid
    (max(n, 4 * cells) by default), so its occupancy reflects support
    geometry rather than sampling shortfall.
    """
    points, summary = support_cloud(errors, n, seed)
    cloud_vols = tuple(occupied_fraction(points, eps) for eps in epsilons)

    finest_cells = int(round(1.0 / min(epsilons))) ** 3
    if control_points is None:
        control_points = max(n, 4 * finest_cells)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    control = rng.uniform(0.0, 1.0, size=(control_points, 3))
    control_vols = tuple(occupied_fraction(control, eps) for eps in epsilons)

    decreasing = all(a > b for a, b in zip(cloud_vols[:-1], cloud_vols[1:]))
    return ViolationReport(
        epsilons=tuple(epsilons),
        cloud_volumes=cloud_vols,
        control_volumes=control_vols,
        control_points=control_points,
        max_residual=summary.max_residual,
        decreasing=decreasing,
        lebesgue_null=decreasing and cloud_vols[-1] < 0.2,
    )


def write_support_cloud_csv(path, points):
    """CSV schema: header v01,v02,v12; >= 12 significant digits per value."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("v01,v02,v12\n")
            for row in points:
                fh.write(f"{row[0]:.15g},{row[1]:.15g},{row[2]:.15g}\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
