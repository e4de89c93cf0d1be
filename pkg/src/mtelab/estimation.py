"""Finite-sample harness: simulate observables and estimate the population objects.

The estimators are deliberately plain (product Epanechnikov or Gaussian
kernels, Silverman bandwidths, local constant/linear fits): the goal is to
demonstrate identification-in-the-limit, not optimal rates. Threshold maps
feed the MTE estimator as known functions of z (identification of the
derivative objects is conditional on identified thresholds; recovering the
thresholds themselves is demonstrated separately by ``estimate_thresholds``).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .population import IdentificationReport, mte_identified, population_H
from .scenario import approach_schedule
from .selection import choose_many, thresholds_many

__all__ = [
    "SparseRegionError",
    "BoundarySparsityError",
    "KernelSpec",
    "SampleSet",
    "ThresholdEstimates",
    "simulate",
    "estimate_H",
    "estimate_thresholds",
    "estimate_mte",
    "write_sample",
    "read_sample",
]


class SparseRegionError(RuntimeError):
    """Kernel regression requested where the sample carries no mass."""


class BoundarySparsityError(RuntimeError):
    """Too little data near the pinned-at-one boundary to estimate the derivative."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, bandwidth rule (``"silverman"`` or a fixed float), and
    local polynomial order (0 or 1)."""

    kernel: str = "epanechnikov"
    bandwidth: object = "silverman"
    order: int = 0

    def __post_init__(self):
        if self.kernel not in ("epanechnikov", "gaussian"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not (self.bandwidth == "silverman" or (isinstance(self.bandwidth, (int, float)) and self.bandwidth > 0)):
            raise ValueError("bandwidth must be 'silverman' or a positive number")
        if self.order not in (0, 1):
            raise ValueError("local polynomial order must be 0 or 1")


@dataclass(frozen=True)
class SampleSet:
    """Observed data (z, d, y) with seed and scenario provenance."""

    z: np.ndarray
    d: np.ndarray
    y: np.ndarray
    seed: int
    fingerprint: str
    baseline: int

    @property
    def n(self):
        return self.z.shape[0]


@dataclass(frozen=True)
class ThresholdEstimates:
    values: dict
    traces: dict
    warnings: list = field(default_factory=list)


def simulate(scenario, n, seed, fingerprint=""):
    """Draw n i.i.d. observations of (Z, D, Y); reproducible given the seed."""
    if n < 1:
        raise ValueError("need n >= 1 observations")
    if scenario.outcomes is None:
        raise ValueError("scenario has no outcome model to simulate from")
    rng = np.random.default_rng(seed)
    z = scenario.instruments.sample(n, rng)
    u = scenario.errors.sample(n, rng)
    d, _ = choose_many(scenario, z, u)
    from .scenario import v_from_u

    v = v_from_u(scenario, u)
    env = scenario.v_env(v)
    y = np.empty(n)
    for t in range(scenario.n_treatments):
        sel = d == t
        if np.any(sel):
            y[sel] = scenario.outcomes.draw(t, env[sel], rng)
    return SampleSet(z=z, d=d, y=y, seed=int(seed), fingerprint=fingerprint, baseline=scenario.baseline)


def _silverman(X):
    n, dim = X.shape
    sigma = np.std(X, axis=0, ddof=1)
    iqr = np.subtract(*np.percentile(X, [75, 25], axis=0)) / 1.349
    spread = np.where(iqr > 0, np.minimum(sigma, iqr), sigma)
    return spread * (4.0 / (dim + 2.0)) ** (1.0 / (dim + 4.0)) * n ** (-1.0 / (dim + 4.0))


def _bandwidths(spec, X):
    if spec.bandwidth == "silverman":
        return _silverman(X)
    return np.full(X.shape[1], float(spec.bandwidth))


def _kernel_weights(spec, X, x0, h):
    t = (X - x0) / h
    if spec.kernel == "epanechnikov":
        return np.prod(np.clip(1.0 - t * t, 0.0, None), axis=1)
    return np.exp(-0.5 * np.sum(t * t, axis=1))


def _local_fit(spec, X, resp, x0, h):
    """Weighted local fit at x0; returns (value, gradient, se_gradient, ess).

    Order 0 gives the kernel mean (gradient None); order 1 fits a plane and
    reports the classical WLS slope standard errors.
    """
    w = _kernel_weights(spec, X, x0, h)
    ess = float(np.sum(w > 0)) if spec.kernel == "epanechnikov" else float(np.sum(w)**2 / max(np.sum(w * w), 1e-300))
    total = float(np.sum(w))
    if total <= 0:
        raise SparseRegionError("all kernel weights vanish at the evaluation point")
    if spec.order == 0:
        return float(np.sum(w * resp) / total), None, None, ess
    design = np.column_stack([np.ones(X.shape[0]), X - x0])
    sw = np.sqrt(w)
    A = design * sw[:, None]
    b = resp * sw
    beta, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = b - A @ beta
    dof = max(float(np.sum(w > 0)) - design.shape[1], 1.0)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.pinv(A.T @ A)
    se = np.sqrt(np.clip(np.diag(cov)[1:], 0.0, None))
    return float(beta[0]), beta[1:], se, ess


def estimate_H(sample, z, kernel=None):
    """Kernel regression of 1{D = baseline} on Z at point z, clipped to [0,1]."""
    kernel = KernelSpec() if kernel is None else kernel
    z = np.asarray(z, dtype=float)
    h = _bandwidths(kernel, sample.z)
    resp = (sample.d == sample.baseline).astype(float)
    w = _kernel_weights(kernel, sample.z, z, h)
    if float(np.sum(w)) < 10.0:
        raise SparseRegionError(f"kernel mass {np.sum(w):.3f} < 10 at z={z}")
    value, _, _, _ = _local_fit(kernel, sample.z, resp, z, h)
    return float(np.clip(value, 0.0, 1.0))


def estimate_thresholds(sample, scenario, z, kernel=None, *, n_steps=14, decrement=0.6, h_fn=None, bandwidth_scale=1.3):
    """Threshold estimates via the limit traces of the estimated H.

    For each rival the other rivals' excluded coordinates follow the approach
    schedule (truncated to the data support); the trace is extrapolated
    linearly in the population rate coordinate 1 - prod(other thresholds),
    weighting schedule points by their local kernel mass. Passing ``h_fn``
    (a callable z -> H) replaces the kernel estimate, which degenerates to
    the population limit identification.
    """
    kernel = KernelSpec(order=1) if kernel is None else kernel
    z = np.asarray(z, dtype=float)
    rivals = scenario.rivals
    values, traces, warnings = {}, {}, []

    if h_fn is None:
        if sample is None:
            raise ValueError("need a sample or an explicit h_fn")
        lo = np.min(sample.z, axis=0)
        hi = np.max(sample.z, axis=0)
        hbw = _bandwidths(kernel, sample.z) * bandwidth_scale
        resp = (sample.d == sample.baseline).astype(float)

        def h_est(zz):
            w = _kernel_weights(kernel, sample.z, zz, hbw)
            mass = float(np.sum(w))
            if mass < 10.0:
                raise SparseRegionError(f"kernel mass {mass:.2f} < 10")
            val, _, _, _ = _local_fit(kernel, sample.z, resp, zz, hbw)
            return float(np.clip(val, 0.0, 1.0)), mass

    else:
        lo = np.full(z.shape, -np.inf)
        hi = np.full(z.shape, np.inf)

        def h_est(zz):
            return float(h_fn(zz)), 1.0

    for i in rivals:
        others = [o for o in rivals if o != i]
        rules = [scenario.exclusion_rule_for(o) for o in others]
        schedules = [approach_schedule(scenario, r, z, n_steps=n_steps, decrement=decrement) for r in rules]
        rows = []
        for m in range(n_steps):
            zm = z.copy()
            ok = True
            for rule, sched in zip(rules, schedules):
                c = sched[m][rule.coordinate]
                if not (lo[rule.coordinate] <= c <= hi[rule.coordinate]):
                    ok = False
                    break
                zm[rule.coordinate] = c
            if not ok:
                warnings.append(f"rival {i}: schedule truncated to {m} of {n_steps} steps (data support)")
                break
            rows.append(zm)
        if not rows:
            raise SparseRegionError(f"rival {i}: no schedule step lies inside the data support")

        qs = thresholds_many(scenario, np.asarray(rows))
        other_pos = [rivals.index(o) for o in others]
        x = 1.0 - np.prod(qs[:, other_pos], axis=1)
        hs, masses, kept_x = [], [], []
        for row, xm in zip(rows, x):
            try:
                val, mass = h_est(row)
            except SparseRegionError:
                warnings.append(f"rival {i}: sparse region at schedule point, dropped")
                continue
            hs.append(val)
            masses.append(mass)
            kept_x.append(xm)
        if not hs:
            raise SparseRegionError(f"rival {i}: every schedule point was sparse")
        hs = np.asarray(hs)
        masses = np.asarray(masses)
        kept_x = np.asarray(kept_x)
        traces[i] = {"x": kept_x, "H": hs, "mass": masses}
        if hs.size == 1:
            warnings.append(f"rival {i}: single-point schedule, returning the smoothed value unextrapolated")
            values[i] = float(hs[0])
            continue
        tail = slice(max(0, hs.size - 5), hs.size)
        sw = np.sqrt(masses[tail])
        A = np.column_stack([np.ones(kept_x[tail].size), kept_x[tail]]) * sw[:, None]
        coef, *_ = np.linalg.lstsq(A, hs[tail] * sw, rcond=None)
        values[i] = float(np.clip(coef[0], 0.0, 1.0))
    return ThresholdEstimates(values=values, traces=traces, warnings=warnings)


def estimate_mte(sample, scenario, gfun, boundary, kernel=None, *, population_value=None, min_effective=200, bandwidth_scale=1.8):
    """Local-linear boundary-derivative estimate of the treatment contrast.

    Regresses G(y)*1{d=t} on the threshold coordinates Q(z) and reads the
    derivative in the contrast direction at the boundary point offset one
    bandwidth inward from the pinned coordinates; compares against the
    population value.
    """
    kernel = KernelSpec(kernel="epanechnikov", bandwidth="silverman", order=1) if kernel is None else kernel
    if kernel.order != 1:
        raise ValueError("derivative estimation needs a local-linear fit (order=1)")
    if gfun.n_outputs is not None:
        raise ValueError("estimate_mte handles scalar G only")
    j = boundary.contrast
    rivals = scenario.rivals
    pos_j = rivals.index(j)
    Q = thresholds_many(scenario, sample.z)
    # derivative target: smoother than the density-optimal rule
    h = _bandwidths(kernel, Q) * bandwidth_scale
    point = np.full(len(rivals), np.nan)
    for pos in range(len(rivals)):
        point[pos] = boundary.q_star if pos == pos_j else 1.0 - h[pos]

    gy = gfun.apply(sample.y)
    slopes = {}
    ses = {}
    for t in (scenario.baseline, j):
        resp = gy * (sample.d == t)
        try:
            _, grad, se, ess = _local_fit(kernel, Q, resp, point, h)
        except SparseRegionError:
            raise BoundarySparsityError(
                f"no observations near the boundary point {point}; the instrument cannot push the pinned thresholds to one"
            ) from None
        if ess < min_effective:
            raise BoundarySparsityError(
                f"only {ess:.0f} effective observations near the boundary point {point} (need {min_effective})"
            )
        slopes[t] = float(grad[pos_j])
        ses[t] = float(se[pos_j])
    e_base = slopes[scenario.baseline]
    e_con = -slopes[j]
    recovered = e_base - e_con
    if population_value is None:
        population_value = mte_identified(scenario, gfun, boundary).mte
    se_total = float(np.hypot(ses[scenario.baseline], ses[j]))
    return IdentificationReport(
        recovered=recovered,
        oracle=float(population_value),
        abs_error=abs(recovered - float(population_value)),
        mc_se=se_total,
        steps={
            "bandwidths": h.tolist(),
            "boundary_offset": (1.0 - point).tolist(),
            "expected_baseline": e_base,
            "expected_contrast": e_con,
        },
    )


def write_sample(path, sample):
    """Persist as CSV (z1..zm, d, y) plus a JSON sidecar with provenance."""
    z = np.atleast_2d(sample.z)
    header = ",".join([f"z{i + 1}" for i in range(z.shape[1])] + ["d", "y"])
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(header + "\n")
            for row, d, y in zip(z, sample.d, sample.y):
                cells = [f"{c:.15g}" for c in row] + [str(int(d)), f"{y:.15g}"]
                fh.write(",".join(cells) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    sidecar = {
        "seed": sample.seed,
        "fingerprint": sample.fingerprint,
        "baseline": sample.baseline,
        "n": sample.n,
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_sample(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    data = np.atleast_2d(data)
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    return SampleSet(
        z=data[:, :-2],
        d=data[:, -2].astype(int),
        y=data[:, -1],
        seed=int(sidecar["seed"]),
        fingerprint=sidecar["fingerprint"],
        baseline=int(sidecar["baseline"]),
    )
