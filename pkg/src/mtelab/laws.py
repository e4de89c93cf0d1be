"""Error laws, pairwise-difference laws, and the induced heterogeneity margins.

Univariate laws wrap frozen scipy distributions (or a monotone CDF fit for
empirical data). Difference laws U_k - U_i come in three representations:

* ``closed-form``            - both components Gaussian and independent;
* ``numeric-convolution``    - independent components, CDF by quadrature on a
                               quantile-spaced grid with a monotone spline fit;
* ``empirical-monotone-fit`` - dependent components via a joint sampler.

A :class:`MarginMap` collects the difference laws against a baseline
treatment and exposes the map u -> v (each margin uniform on [0, 1]) together
with the joint CDF of the margin vector.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .quadrature import interval_rule

__all__ = [
    "LawError",
    "UnivariateLaw",
    "ErrorVectorLaw",
    "DifferenceLaw",
    "MarginMap",
    "gaussian",
    "uniform",
    "logistic",
    "student_t",
    "empirical",
    "difference_law",
    "quantile",
    "margin_map",
]

_TAIL_EPS = 1e-13


class LawError(ValueError):
    """Invalid law construction or evaluation outside a law's domain."""


class _MonotoneCdf:
    """Monotone piecewise-cubic CDF fit with matched exponential tails.

    The fit is the law: quantiles are Newton-polished inverses of the same
    spline, so quantile(cdf(x)) = x holds to solver tolerance by construction.
    """

    def __init__(self, x_knots, p_knots):
        x = np.asarray(x_knots, dtype=float)
        p = np.asarray(p_knots, dtype=float)
        keep = np.concatenate([[True], (np.diff(x) > 0) & (np.diff(p) > 0)])
        x, p = x[keep], p[keep]
        if x.size < 8:
            raise LawError("monotone CDF fit needs at least 8 increasing knots")
        self.x = x
        self.p = p
        self._cdf = PchipInterpolator(x, p, extrapolate=False)
        self._pdf = self._cdf.derivative()
        self._inv = PchipInterpolator(p, x, extrapolate=False)
        # Exponential tails matched in level and slope at the outermost knots.
        self._lam_lo = max(float(self._pdf(x[0])) / p[0], 1e-300)
        self._lam_hi = max(float(self._pdf(x[-1])) / (1.0 - p[-1]), 1e-300)

    def cdf(self, xs):
        xs = np.asarray(xs, dtype=float)
        out = np.empty(xs.shape)
        lo = xs < self.x[0]
        hi = xs > self.x[-1]
        mid = ~(lo | hi)
        out[mid] = self._cdf(xs[mid])
        out[lo] = self.p[0] * np.exp(self._lam_lo * (xs[lo] - self.x[0]))
        out[hi] = 1.0 - (1.0 - self.p[-1]) * np.exp(-self._lam_hi * (xs[hi] - self.x[-1]))
        return out

    def sf(self, xs):
        return 1.0 - self.cdf(xs)

    def pdf(self, xs):
        xs = np.asarray(xs, dtype=float)
        out = np.empty(xs.shape)
        lo = xs < self.x[0]
        hi = xs > self.x[-1]
        mid = ~(lo | hi)
        out[mid] = np.maximum(self._pdf(xs[mid]), 0.0)
        out[lo] = self.p[0] * self._lam_lo * np.exp(self._lam_lo * (xs[lo] - self.x[0]))
        out[hi] = (1.0 - self.p[-1]) * self._lam_hi * np.exp(-self._lam_hi * (xs[hi] - self.x[-1]))
        return out

    def quantile(self, ps):
        ps = np.asarray(ps, dtype=float)
        out = np.empty(ps.shape)
        lo = ps < self.p[0]
        hi = ps > self.p[-1]
        mid = ~(lo | hi)
        x0 = self._inv(ps[mid])
        # Newton polish against the forward spline (3 iterations suffice).
        for _ in range(3):
            err = self._cdf(x0) - ps[mid]
            x0 = np.clip(x0 - err / np.maximum(self._pdf(x0), 1e-300), self.x[0], self.x[-1])
        out[mid] = x0
        with np.errstate(divide="ignore"):
            out[lo] = self.x[0] + np.log(ps[lo] / self.p[0]) / self._lam_lo
            out[hi] = self.x[-1] - np.log((1.0 - ps[hi]) / (1.0 - self.p[-1])) / self._lam_hi
        return out

    def mean(self):
        lo = np.geomspace(1e-12, 0.02, 12)
        mid = np.linspace(0.02, 0.98, 25)[1:-1]
        edges = self.quantile(np.concatenate([lo, mid, 1.0 - lo[::-1]]))
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            pts, wts = interval_rule(a, b, nodes=24, panels=1)
            total += float(np.dot(wts, pts * self.pdf(pts)))
        return total


@dataclass(frozen=True)
class UnivariateLaw:
    """A continuous scalar law with CDF/quantile/density handles."""

    kind: str
    params: tuple
    support: tuple
    _impl: object = field(compare=False, repr=False)

    def cdf(self, x):
        return self._impl.cdf(x)

    def sf(self, x):
        return self._impl.sf(x)

    def pdf(self, x):
        return self._impl.pdf(x)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0.0) | (p >= 1.0)):
            raise LawError("quantile level must lie strictly inside (0, 1)")
        if isinstance(self._impl, _MonotoneCdf):
            out = self._impl.quantile(p)
        else:
            out = self._impl.ppf(p)
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, rng, size):
        if isinstance(self._impl, _MonotoneCdf):
            return self._impl.quantile(rng.uniform(1e-15, 1.0 - 1e-15, size=size))
        return self._impl.rvs(size=size, random_state=rng)

    def mean(self):
        return float(self._impl.mean())

    def truncated_support(self, eps=_TAIL_EPS):
        """Interval carrying at least 1 - 2*eps probability mass."""
        lo, hi = self.support
        return (
            max(lo, float(self.quantile(eps))),
            min(hi, float(self.quantile(1.0 - eps))),
        )


def gaussian(mean, *, variance=None, std=None):
    """Gaussian law; exactly one of ``variance``/``std`` must be given."""
    if (variance is None) == (std is None):
        raise LawError("give exactly one of variance= or std=")
    scale = float(np.sqrt(variance)) if variance is not None else float(std)
    if scale <= 0:
        raise LawError("gaussian scale must be positive")
    return UnivariateLaw("gaussian", (float(mean), scale), (-np.inf, np.inf), stats.norm(mean, scale))


def uniform(lo, hi):
    if not hi > lo:
        raise LawError("uniform needs hi > lo")
    return UnivariateLaw("uniform", (float(lo), float(hi)), (float(lo), float(hi)), stats.uniform(lo, hi - lo))


def logistic(loc, scale):
    if scale <= 0:
        raise LawError("logistic scale must be positive")
    return UnivariateLaw("logistic", (float(loc), float(scale)), (-np.inf, np.inf), stats.logistic(loc, scale))


def student_t(df, loc=0.0, scale=1.0):
    if df <= 1:
        raise LawError("student-t with df <= 1 has no finite mean; rejected")
    if scale <= 0:
        raise LawError("student-t scale must be positive")
    return UnivariateLaw("student-t", (float(df), float(loc), float(scale)), (-np.inf, np.inf), stats.t(df, loc, scale))


def _knot_levels(n=4001, z_max=7.4):
    # Normal-scores spacing keeps knots roughly equidistant on the fitted
    # law's own scale, which is what bounds the spline interpolation error.
    return stats.norm.cdf(np.linspace(-z_max, z_max, n))


def _panel_edges(law, tail=_TAIL_EPS):
    """Quadrature panel edges over a law's support: geometric ladders in the
    tails (heavy tails span many decades) plus a linear ladder in the center."""
    lo = np.geomspace(tail, 0.02, 12)
    mid = np.linspace(0.02, 0.98, 25)[1:-1]
    hi = 1.0 - np.geomspace(tail, 0.02, 12)[::-1]
    return law.quantile(np.concatenate([lo, mid, hi]))


def _weighted_nodes(law, nodes=16, tail=_TAIL_EPS):
    """Nodes and density-weighted quadrature weights covering a law's mass."""
    edges = _panel_edges(law, tail)
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        p, w = interval_rule(a, b, nodes=nodes, panels=1)
        pts.append(p)
        wts.append(w * law.pdf(p))
    return np.concatenate(pts), np.concatenate(wts)


def empirical(draws):
    """Monotone CDF fit to draws (10^6 recommended), exponential tails."""
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size < 1000:
        raise LawError("empirical law needs at least 1000 draws")
    if np.ptp(draws) <= 0:
        raise LawError("empirical law requires non-degenerate (continuous) draws")
    levels = np.clip(_knot_levels(), 5.0 / draws.size, 1.0 - 5.0 / draws.size)
    levels = np.unique(levels)
    knots = np.quantile(draws, levels)
    impl = _MonotoneCdf(knots, levels)
    digest = hashlib.sha256(draws.tobytes()).hexdigest()[:16]
    return UnivariateLaw("empirical", (digest,), (-np.inf, np.inf), impl)


@dataclass(frozen=True)
class ErrorVectorLaw:
    """Joint law of the per-treatment cost shocks (U_0, ..., U_{K-1}).

    Components are independent unless a joint sampler ``(n, rng) -> (n, K)``
    is supplied. ``dependent=True`` without a sampler is rejected wherever a
    difference law would be needed.
    """

    components: tuple
    joint_sampler: object = None
    dependent: bool = False

    def __post_init__(self):
        if len(self.components) < 2:
            raise LawError("error vector needs at least two components")

    @property
    def n_treatments(self):
        return len(self.components)

    @property
    def independent(self):
        return self.joint_sampler is None and not self.dependent

    def sample(self, n, rng):
        if self.joint_sampler is not None:
            u = np.asarray(self.joint_sampler(n, rng), dtype=float)
            if u.shape != (n, self.n_treatments):
                raise LawError(f"joint sampler returned shape {u.shape}, expected {(n, self.n_treatments)}")
            return u
        return np.column_stack([law.sample(rng, n) for law in self.components])


@dataclass(frozen=True)
class DifferenceLaw:
    """Law of U_k - U_i (minuend k, subtrahend i)."""

    minuend: int
    subtrahend: int
    representation: str
    law: UnivariateLaw

    def cdf(self, x):
        return self.law.cdf(x)

    def sf(self, x):
        return self.law.sf(x)

    def pdf(self, x):
        return self.law.pdf(x)

    def quantile(self, p):
        return self.law.quantile(p)

    @property
    def support(self):
        return self.law.support


def _convolution_fit(law_k, law_i):
    """Monotone-spline CDF fit of U_k - U_i by Gauss-Legendre convolution.

    Nodes for the inner expectation over U_i sit on equal-mass panels, so
    heavy-tailed components keep full weight coverage; the knot grid in x is
    quantile-spaced through the comonotone spread of the two laws.
    """
    u, w = _weighted_nodes(law_i, nodes=16)

    levels = _knot_levels()
    knots = law_k.quantile(levels) - law_i.quantile(1.0 - levels)
    cdf_vals = law_k.cdf(knots[:, None] + u[None, :]) @ w
    keep = (cdf_vals > 1e-13) & (cdf_vals < 1.0 - 1e-13)
    return _MonotoneCdf(knots[keep], cdf_vals[keep])


def difference_law(errors, k, i):
    """Construct the law of U_k - U_i for an error vector.

    Independent Gaussian pairs get the exact closed form; other independent
    pairs a numeric convolution; dependent errors (joint sampler) an
    empirical monotone fit on 10^6 draws.
    """
    n = errors.n_treatments
    if k == i or not (0 <= k < n and 0 <= i < n):
        raise LawError(f"invalid difference indices ({k}, {i}) for {n} treatments")
    if errors.dependent and errors.joint_sampler is None:
        raise LawError("dependent errors need a joint sampler to form difference laws")

    if errors.joint_sampler is not None:
        rng = np.random.default_rng(np.random.SeedSequence([0x1D1F, k, i]))
        u = errors.sample(1_000_000, rng)
        fitted = empirical(u[:, k] - u[:, i])
        return DifferenceLaw(k, i, "empirical-monotone-fit", fitted)

    law_k = errors.components[k]
    law_i = errors.components[i]
    for law in (law_k, law_i):
        if law.support[1] - law.support[0] <= 0:
            raise LawError("difference law requires continuous components")
    if law_k.kind == "gaussian" and law_i.kind == "gaussian":
        mean = law_k.params[0] - law_i.params[0]
        std = float(np.hypot(law_k.params[1], law_i.params[1]))
        return DifferenceLaw(k, i, "closed-form", gaussian(mean, std=std))

    impl = _convolution_fit(law_k, law_i)
    fitted = UnivariateLaw("fit", (f"conv[{k}-{i}]",), (-np.inf, np.inf), impl)
    return DifferenceLaw(k, i, "numeric-convolution", fitted)


def quantile(law, p):
    """Quantile of a difference (or univariate) law at scalar p in (0, 1).

    Closed-form laws use the analytic inverse; fitted laws are solved by a
    bracketed root-finder so that |CDF(result) - p| <= 1e-10.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise LawError("quantile level must lie strictly inside (0, 1)")
    x0 = float(law.quantile(p))
    if abs(float(law.cdf(x0)) - p) <= 1e-12:
        return x0
    width = 1.0
    lo, hi = x0 - width, x0 + width
    while float(law.cdf(lo)) > p:
        width *= 4.0
        lo -= width
    while float(law.cdf(hi)) < p:
        width *= 4.0
        hi += width
    return float(brentq(lambda x: float(law.cdf(x)) - p, lo, hi, xtol=1e-13, rtol=8.9e-16))


@dataclass(frozen=True)
class MarginMap:
    """Difference laws of a baseline treatment against each rival, and the
    induced margins V_i = F_{U_k - U_i}(U_k - U_i)."""

    errors: ErrorVectorLaw
    baseline: int
    rivals: tuple
    laws: tuple

    def law_for(self, rival):
        return self.laws[self.rivals.index(rival)]

    def v_from_u(self, u):
        """Map sampled error vectors (..., K) to margin vectors (..., K-1)."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.errors.n_treatments:
            raise LawError(f"error vector has dimension {u.shape[-1]}, expected {self.errors.n_treatments}")
        diffs = u[..., self.baseline, None] - u[..., list(self.rivals)]
        out = np.empty_like(diffs)
        for pos, law in enumerate(self.laws):
            out[..., pos] = law.cdf(diffs[..., pos])
        return out

    def sample_v(self, n, rng):
        return self.v_from_u(self.errors.sample(n, rng))

    def joint_cdf(self, q, *, rng=None, n_draws=2_000_000):
        """Pr(V_1 <= q_1, ..., V_{K-1} <= q_{K-1}).

        Independent errors reduce to a single integral over the baseline
        shock; dependent errors fall back to Monte Carlo (see
        :meth:`joint_cdf_with_se`).
        """
        value, _ = self.joint_cdf_with_se(q, rng=rng, n_draws=n_draws)
        return value

    def joint_cdf_with_se(self, q, *, rng=None, n_draws=2_000_000):
        q = np.asarray(q, dtype=float)
        if q.shape != (len(self.rivals),):
            raise LawError(f"q must have shape {(len(self.rivals),)}")
        if np.any(q < 0.0) or np.any(q > 1.0):
            raise LawError("joint CDF argument must lie in [0, 1]^(K-1)")
        if np.any(q == 0.0):
            return 0.0, 0.0
        active = [pos for pos in range(len(self.rivals)) if q[pos] < 1.0]
        if not active:
            return 1.0, 0.0

        if not self.errors.independent:
            rng = np.random.default_rng(0) if rng is None else rng
            v = self.sample_v(n_draws, rng)
            hits = np.all(v <= q, axis=1)
            p = float(np.mean(hits))
            se = float(np.sqrt(max(p * (1.0 - p), 1e-12) / n_draws))
            return p, se

        base = self.errors.components[self.baseline]
        cuts = {pos: float(self.laws[pos].quantile(q[pos])) for pos in active}

        pts, wts = _weighted_nodes(base, nodes=24)
        vals = np.ones_like(pts)
        for pos in active:
            comp = self.errors.components[self.rivals[pos]]
            vals *= comp.sf(pts - cuts[pos])
        value = float(np.dot(wts, vals))
        return min(max(value, 0.0), 1.0), 0.0


def margin_map(errors, baseline):
    """Build the baseline-vs-rival margin structure for an error vector."""
    if not 0 <= baseline < errors.n_treatments:
        raise LawError(f"baseline index {baseline} out of range")
    rivals = tuple(i for i in range(errors.n_treatments) if i != baseline)
    laws = tuple(difference_law(errors, baseline, i) for i in rivals)
    return MarginMap(errors=errors, baseline=baseline, rivals=rivals, laws=laws)
