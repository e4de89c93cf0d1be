"""Population-scale identification engine.

Everything here is exact-at-population numerics for one scenario:

* ``cond_mean_GD``          - E[G(Y) D_t | Q(Z) = q] as an integral over the
                              error space (nested quadrature for K=3 under
                              independence, Monte Carlo otherwise);
* ``extended_cond_mean_GD`` - the unique continuous boundary extension,
                              evaluated through its closed one-dimensional
                              limit form, with an optional sequential
                              interior-approach consistency check;
* ``mte_identified``        - boundary partial derivatives (central
                              differences + Richardson) recovering
                              E[G(Y_t) | V_j = q*] for both branches and the
                              treatment-effect contrast;
* ``identify_thresholds_by_limit`` - threshold recovery by driving excluded
                              utilities to -inf and tracing the baseline
                              choice probability;
* ``qte``                   - quantile treatment effects from traced
                              conditional outcome CDFs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .extension import cauchy_limit
from .laws import LawError
from .mc import chunked_stats
from .quadrature import QuadratureError, interval_rule
from .scenario import approach_schedule, margins
from .selection import thresholds

__all__ = [
    "BoundaryPoint",
    "GFunction",
    "IdentificationReport",
    "MteResult",
    "QteResult",
    "ThresholdLimitResult",
    "ExtensionConsistencyError",
    "StepSizeError",
    "LimitIdentificationError",
    "InversionError",
    "identity_g",
    "indicator_below",
    "custom_g",
    "conditional_outcome_mean",
    "margin_conditional_mean",
    "cond_mean_GD",
    "extended_cond_mean_GD",
    "mte_identified",
    "identify_thresholds_by_limit",
    "qte",
    "leibniz_residuals",
    "population_H",
    "oracle_margin_mean",
    "identification_curve",
]

_TAIL = 1e-12


class ExtensionConsistencyError(RuntimeError):
    """Interior approach to the boundary disagrees with the extension value."""


class StepSizeError(RuntimeError):
    """Richardson levels of the boundary derivative disagree."""


class LimitIdentificationError(RuntimeError):
    """Threshold limit trace is nonmonotone or fails to converge."""


class InversionError(RuntimeError):
    """A traced conditional CDF cannot be inverted."""


@dataclass(frozen=True)
class BoundaryPoint:
    """Evaluation point (1, ..., q_star, ..., 1) with its open neighborhood."""

    contrast: int
    q_star: float
    delta: float = 0.05

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.delta < self.q_star < 1.0 - self.delta:
            raise ValueError(f"q_star={self.q_star} must lie in ({self.delta}, {1 - self.delta})")


@dataclass(frozen=True)
class GFunction:
    """Measurable transform of the outcome: identity, 1{Y <= y}, or custom."""

    kind: str
    y_values: tuple = None
    func: object = None

    @property
    def n_outputs(self):
        return None if self.y_values is None else len(self.y_values)

    def apply(self, y):
        """Apply to simulated outcomes (Monte Carlo oracle path)."""
        y = np.asarray(y, dtype=float)
        if self.kind == "identity":
            return y
        if self.kind == "indicator":
            return (y[..., None] <= np.asarray(self.y_values)).astype(float)
        return np.asarray(self.func(y), dtype=float)


def identity_g():
    return GFunction(kind="identity")


def indicator_below(y):
    """G(Y) = 1{Y <= y}; y may be a grid (vector-valued recovery)."""
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    return GFunction(kind="indicator", y_values=tuple(float(v) for v in ys))


def custom_g(func):
    return GFunction(kind="custom", func=func)


@dataclass(frozen=True)
class IdentificationReport:
    recovered: float
    oracle: float
    abs_error: float
    mc_se: float
    steps: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "recovered": self.recovered,
            "oracle": self.oracle,
            "abs_error": self.abs_error,
            "mc_se": self.mc_se,
            "steps": dict(self.steps),
        }


@dataclass(frozen=True)
class MteResult:
    expected_baseline: object
    expected_contrast: object
    mte: object
    diagnostics: dict


@dataclass(frozen=True)
class QteResult:
    tau: float
    qte: float
    quantile_baseline: float
    quantile_contrast: float
    y_grid: np.ndarray
    cdf_baseline: np.ndarray
    cdf_contrast: np.ndarray


@dataclass(frozen=True)
class ThresholdLimitResult:
    rivals: tuple
    estimates: dict
    truths: dict
    traces: dict

    @property
    def max_abs_error(self):
        return max(abs(self.estimates[i] - self.truths[i]) for i in self.rivals)


# ---------------------------------------------------------------------------
# conditional outcome moments


def conditional_outcome_mean(scenario, gfun, t, v):
    """E[G(Y_t) | V = v] for margin rows v (rival column order).

    With Y_t = m_t(V) + eps_t and independent noise this is a closed form for
    the identity and indicator kinds and a one-dimensional noise quadrature
    for custom G.
    """
    out = scenario.outcomes
    if out is None:
        raise ValueError("scenario has no outcome model")
    env = scenario.v_env(v)
    m = out.mean_value(t, env)
    noise = out.noises[t]
    if gfun.kind == "identity":
        return m + (0.0 if noise is None else noise.mean())
    if gfun.kind == "indicator":
        ys = np.asarray(gfun.y_values)
        if noise is None:
            return (m[..., None] <= ys).astype(float)
        return noise.cdf(ys - m[..., None])
    if noise is None:
        return np.asarray(gfun.func(m), dtype=float)
    pts, wts = _noise_rule(noise)
    vals = np.asarray(gfun.func(m[..., None] + pts), dtype=float)
    return vals @ wts


def _noise_rule(noise, nodes=24):
    edges = noise.quantile(np.concatenate([
        np.geomspace(_TAIL, 0.02, 8),
        np.linspace(0.02, 0.98, 15)[1:-1],
        1.0 - np.geomspace(_TAIL, 0.02, 8)[::-1],
    ]))
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        p, w = interval_rule(a, b, nodes=nodes, panels=1)
        pts.append(p)
        wts.append(w * noise.pdf(p))
    return np.concatenate(pts), np.concatenate(wts)


# ---------------------------------------------------------------------------
# probability-space quadrature grids


_FULL_ENDS = np.array([0.0, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 0.04])
_LIGHT_ENDS = np.array([0.0, 1e-5, 1e-3, 0.04])


def _prob_ladder(lo, hi, n_mid, ends):
    rel = np.unique(np.concatenate([ends, np.linspace(0.04, 0.96, n_mid), 1.0 - ends[::-1]]))
    return lo + (hi - lo) * rel


def _prob_nodes(lo, hi, nodes, n_mid, ends=_FULL_ENDS):
    """Composite Gauss-Legendre nodes on a probability interval, refined
    geometrically toward both endpoints."""
    if not hi > lo:
        return np.empty(0), np.empty(0)
    edges = _prob_ladder(lo, hi, n_mid, ends)
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        p, w = interval_rule(a, b, nodes=nodes, panels=1)
        pts.append(p)
        wts.append(w)
    return np.concatenate(pts), np.concatenate(wts)


def _require_independent(scenario, what):
    if not scenario.errors.independent:
        raise LawError(f"{what} requires independent error components; use the Monte Carlo path")


def margin_conditional_mean(scenario, gfun, t, contrast, v_j, *, nodes=None, n_mid=None):
    """E[G(Y_t) | V_j = v_j] by nested quadrature over the error space.

    Conditioning on the margin V_j pins the difference U_k - U_j; the
    conditional law of the remaining errors then factorizes (independent
    components), leaving one outer integral over the baseline shock and a
    free tensor integral over the other rival shocks. Vectorized over v_j.
    """
    _require_independent(scenario, "margin_conditional_mean")
    mm = margins(scenario)
    k = scenario.baseline
    k3 = scenario.n_treatments == 3
    # wide indicator batches trade a little per-value accuracy for a much
    # smaller tensor (they feed CDF traces judged at ~1e-3, not 1e-5)
    fast = gfun.n_outputs is not None and gfun.n_outputs >= 8
    if nodes is None or n_mid is None:
        nodes, n_mid = (8, 5) if fast else ((10, 7) if k3 else (8, 3))
    inner_ends = _LIGHT_ENDS if (fast or not k3) else _FULL_ENDS
    pos_j = mm.rivals.index(contrast)
    v_j = np.atleast_1d(np.asarray(v_j, dtype=float))
    if np.any((v_j <= 0.0) | (v_j >= 1.0)):
        raise ValueError("margin value must lie strictly inside (0, 1)")
    x_j = mm.laws[pos_j].quantile(v_j)

    base = scenario.errors.components[k]
    comp_j = scenario.errors.components[contrast]
    if fast:
        w_s, ww_s = _prob_nodes(_TAIL, 1.0 - _TAIL, nodes=10, n_mid=7, ends=_LIGHT_ENDS)
    else:
        w_s, ww_s = _prob_nodes(_TAIL, 1.0 - _TAIL, nodes=12 if k3 else 10, n_mid=9 if k3 else 5)
    s = base.quantile(w_s)

    free = [i for i in mm.rivals if i != contrast]
    mesh_v = {}
    mesh_w = np.ones((s.size,) + (1,) * len(free))
    for axis, i in enumerate(free):
        comp_i = scenario.errors.components[i]
        w_i, ww_i = _prob_nodes(_TAIL, 1.0 - _TAIL, nodes=nodes, n_mid=n_mid, ends=inner_ends)
        u_i = comp_i.quantile(w_i)
        shape = [1] * (len(free) + 1)
        shape[axis + 1] = u_i.size
        pos_i = mm.rivals.index(i)
        mesh_v[pos_i] = mm.laws[pos_i].cdf(s.reshape([-1] + [1] * len(free)) - u_i.reshape(shape))
        mesh_w = mesh_w * ww_i.reshape(shape)

    n_out = gfun.n_outputs
    out_shape = (v_j.size,) if n_out is None else (v_j.size, n_out)
    out = np.empty(out_shape)
    mesh_shape = (s.size,) + tuple(
        mesh_v[mm.rivals.index(i)].shape[1 + axis] for axis, i in enumerate(free)
    )
    v_full = np.empty(mesh_shape + (len(mm.rivals),))
    for pos_i, arr in mesh_v.items():
        v_full[..., pos_i] = np.broadcast_to(arr, mesh_shape)
    inner_axes = (list(range(1, 1 + len(free))), list(range(len(free))))
    for a, vj in enumerate(v_j):
        # outer weight: conditional density of the baseline shock given the
        # pinned difference, self-normalized on the same node set
        dens = ww_s * comp_j.pdf(s - x_j[a])
        norm = float(np.sum(dens))
        v_full[..., pos_j] = vj
        vals = conditional_outcome_mean(scenario, gfun, t, v_full)
        inner = np.tensordot(vals, mesh_w[0], axes=inner_axes)
        out[a] = np.tensordot(dens, inner, axes=(0, 0)) / norm
    return out


_MARGIN_TABLES = {}


def _margin_mean_interpolant(scenario, gfun, t, contrast):
    """Cached spline of v -> E[G(Y_t)|V_j=v] on a normal-scores grid.

    The margin conditional mean is a fixed smooth function of v, so boundary
    integrals and finite-difference stencils interpolate it instead of
    re-running the nested quadrature at every node.
    """
    key = (scenario, gfun, t, contrast)
    entry = _MARGIN_TABLES.get(key)
    if entry is None:
        if gfun.n_outputs is not None and gfun.n_outputs >= 8:
            n_grid = 161
        else:
            n_grid = 241 if scenario.n_treatments == 3 else 141
        z = np.linspace(-5.4, 5.4, n_grid)
        grid = _norm_cdf(z)
        vals = margin_conditional_mean(scenario, gfun, t, contrast, grid)
        table = PchipInterpolator(grid, vals, axis=0, extrapolate=True)
        entry = (table, table.antiderivative())
        _MARGIN_TABLES[key] = entry
    return entry


# ---------------------------------------------------------------------------
# E[G(Y) D_t | Q(Z) = q]


def _difference_cut(law, q_pos):
    """Quantile of a difference law at q in (0,1); +/-inf at the endpoints."""
    if q_pos >= 1.0:
        return np.inf
    if q_pos <= 0.0:
        return -np.inf
    return float(law.quantile(q_pos))


def _region_value(scenario, gfun, t, q, nodes, n_mid):
    """Nested quadrature of E[ E[G(Y_t)|V] * indicator_t(V; q) ]."""
    mm = margins(scenario)
    k = scenario.baseline
    cuts = np.array([_difference_cut(law, qi) for law, qi in zip(mm.laws, q)])

    if t == k:
        if np.any(q <= 0.0):
            return 0.0 if gfun.n_outputs is None else np.zeros(gfun.n_outputs)
        outer_comp = scenario.errors.components[k]
        inner = list(mm.rivals)

        def lows(s):
            return {i: s - cuts[mm.rivals.index(i)] for i in inner}

    else:
        pos_t = mm.rivals.index(t)
        if q[pos_t] >= 1.0:
            return 0.0 if gfun.n_outputs is None else np.zeros(gfun.n_outputs)
        if q[pos_t] <= 0.0:
            raise ValueError("contrast threshold q_j = 0 is degenerate")
        outer_comp = scenario.errors.components[t]
        # pseudo-utilities with the baseline pinned at zero
        r = {k: 0.0}
        for pos, i in enumerate(mm.rivals):
            r[i] = -cuts[pos]
        inner = [k] + [i for i in mm.rivals if i != t]

        def lows(s):
            return {i: s + r[i] - r[t] for i in inner}

    w_s, ww_s = _prob_nodes(_TAIL, 1.0 - _TAIL, nodes=nodes, n_mid=n_mid)
    s_nodes = outer_comp.quantile(w_s)
    n_out = gfun.n_outputs
    total = 0.0 if n_out is None else np.zeros(n_out)

    for s, ws in zip(s_nodes, ww_s):
        lo = lows(s)
        axes_pts = []
        axes_wts = []
        empty = False
        for i in inner:
            comp = scenario.errors.components[i]
            w_lo = float(np.clip(comp.cdf(lo[i]), _TAIL, 1.0))
            p, w = _prob_nodes(w_lo, 1.0 - _TAIL, nodes=nodes, n_mid=n_mid)
            if p.size == 0:
                empty = True
                break
            axes_pts.append(comp.quantile(p))
            axes_wts.append(w)
        if empty:
            continue
        mesh = np.meshgrid(*axes_pts, indexing="ij") if axes_pts else []
        wt = ws
        for axis, w in enumerate(axes_wts):
            shape = [1] * len(axes_wts)
            shape[axis] = w.size
            wt = wt * w.reshape(shape)

        u = {i: mesh[pos] for pos, i in enumerate(inner)}
        u_k = s if t == k else u[k]
        shape = mesh[0].shape if mesh else ()
        v = np.empty(shape + (len(mm.rivals),))
        for pos, i in enumerate(mm.rivals):
            u_i = s if i == t else u[i]
            v[..., pos] = mm.laws[pos].cdf(u_k - u_i)
        vals = conditional_outcome_mean(scenario, gfun, t, v)
        axes = tuple(range(len(axes_wts)))
        total = total + np.tensordot(vals, wt, axes=(axes, axes))
    return total


def _mc_region_contrib(scenario, gfun, t, q, rng, n_draws):
    """Per-draw Monte Carlo contributions to the region integral.

    Uses the conditional outcome mean inside the indicator (variance
    reduction); works for any K and for dependent errors.
    """
    mm = margins(scenario)
    k = scenario.baseline
    u = scenario.errors.sample(n_draws, rng)
    v = mm.v_from_u(u)
    if t == k:
        ind = np.all(v < q, axis=1)
    else:
        pos_t = mm.rivals.index(t)
        law_j = mm.laws[pos_t]
        x_vj = law_j.quantile(np.clip(v[:, pos_t], 1e-15, 1.0 - 1e-15))
        shift = x_vj - law_j.quantile(q[pos_t])
        ind = v[:, pos_t] >= q[pos_t]
        for pos, i in enumerate(mm.rivals):
            if i == t:
                continue
            if q[pos] >= 1.0:
                continue
            cut = mm.laws[pos].cdf(shift + mm.laws[pos].quantile(q[pos]))
            ind &= v[:, pos] < cut
    vals = conditional_outcome_mean(scenario, gfun, t, v)
    return vals * (ind if gfun.n_outputs is None else ind[:, None])


def _mc_region_value(scenario, gfun, t, q, rng, n_draws, seed=None, threads=1):
    """Region-integral Monte Carlo mean and standard error.

    With ``rng`` given, one sequential stream; otherwise chunked streams
    spawned from ``seed`` with order-stable pairwise reduction, so results
    are identical for any thread count.
    """
    pos_t = None if t == scenario.baseline else margins(scenario).rivals.index(t)
    if pos_t is not None and q[pos_t] >= 1.0:
        zero = 0.0 if gfun.n_outputs is None else np.zeros(gfun.n_outputs)
        return zero, 0.0
    if rng is not None:
        contrib = _mc_region_contrib(scenario, gfun, t, q, rng, n_draws)
        mean = contrib.mean(axis=0)
        se = contrib.std(axis=0, ddof=1) / np.sqrt(n_draws)
        return mean, float(np.max(se))
    mean, se = chunked_stats(
        lambda r, m: _mc_region_contrib(scenario, gfun, t, q, r, m),
        n_draws,
        0 if seed is None else int(seed),
        threads=threads,
    )
    return mean, float(np.max(se))


def cond_mean_GD(scenario, gfun, t, q, *, tol=1e-6, method="auto", rng=None, seed=None, threads=1, n_draws=400_000, full=False):
    """E[G(Y) D_t | Q(Z) = q] for q inside [0,1]^(K-1).

    K = 3 with independent errors integrates by nested Gauss-Legendre rules
    (two resolutions; oscillation beyond ``tol`` raises QuadratureError,
    ``tol=None`` skips the refinement pass). Larger K or dependent errors
    use Monte Carlo with a reported standard error. ``full=True`` returns
    ``(value, mc_se)``.
    """
    mm = margins(scenario)
    q = np.asarray(q, dtype=float)
    if q.shape != (len(mm.rivals),):
        raise ValueError(f"q must have shape {(len(mm.rivals),)}")
    if np.any(q < 0.0) or np.any(q > 1.0):
        raise ValueError("q must lie in [0, 1]^(K-1)")
    if t != scenario.baseline and t not in scenario.rivals:
        raise ValueError(f"treatment {t} is not part of the scenario")

    if method == "auto":
        method = "quadrature" if (scenario.errors.independent and scenario.n_treatments == 3) else "mc"
    if method == "quadrature":
        _require_independent(scenario, "quadrature cond_mean_GD")
        fine = _region_value(scenario, gfun, t, q, nodes=12, n_mid=11)
        if tol is None:
            return (fine, 0.0) if full else fine
        coarse = _region_value(scenario, gfun, t, q, nodes=8, n_mid=7)
        osc = float(np.max(np.abs(np.asarray(fine) - np.asarray(coarse))))
        if osc > tol:
            raise QuadratureError(
                f"cond_mean_GD did not settle: |Δ|={osc:.3e} > {tol:.1e}",
                coarse=coarse,
                fine=fine,
                oscillation=osc,
            )
        return (fine, osc) if full else fine
    value, se = _mc_region_value(scenario, gfun, t, q, rng, n_draws, seed=seed, threads=threads)
    return (value, se) if full else value


# ---------------------------------------------------------------------------
# boundary extension and derivatives


def _boundary_form(scenario, gfun, t, contrast, q_j):
    """Closed limit form of the extended conditional expectation.

    Baseline branch: integral of E[G(Y_k)|V_j=v] over (0, q_j); contrast
    branch: over (q_j, 1). Evaluated exactly as the antiderivative of the
    cached margin-mean spline, so finite differences of this function see no
    quadrature noise.
    """
    if t == scenario.baseline:
        a, b = 0.0, q_j
    elif t == contrast:
        a, b = q_j, 1.0
    else:
        raise ValueError("extension is defined for the baseline and the contrast treatment")
    lo = max(a, 1e-9)
    hi = min(b, 1.0 - 1e-9)
    if not hi > lo:
        return 0.0 if gfun.n_outputs is None else np.zeros(gfun.n_outputs)
    _, anti = _margin_mean_interpolant(scenario, gfun, t, contrast)
    out = np.asarray(anti(hi)) - np.asarray(anti(lo))
    return float(out) if gfun.n_outputs is None else out


def extended_cond_mean_GD(scenario, gfun, t, boundary, q_j, *, verify_continuity=False, consistency_tol=1e-4):
    """Boundary extension of E[G(Y) D_t | Q(Z) = q] at q = (1,...,q_j,...,1).

    ``verify_continuity=True`` additionally approaches the boundary through
    interior points (pinned coordinates at 1 - delta * 2^-m) and requires the
    Cauchy limit of those interior values to match the closed form within
    ``consistency_tol`` (K = 3 quadrature path only).
    """
    if not (boundary.q_star - boundary.delta) < q_j < (boundary.q_star + boundary.delta):
        raise ValueError(f"q_j={q_j} outside the boundary neighborhood of {boundary.q_star}")
    value = _boundary_form(scenario, gfun, t, boundary.contrast, q_j)
    if not verify_continuity:
        return value

    mm = margins(scenario)
    pos_j = mm.rivals.index(boundary.contrast)

    def interior(pin):
        q = np.full(len(mm.rivals), pin)
        q[pos_j] = q_j
        val = cond_mean_GD(scenario, gfun, t, q, tol=None)
        return float(np.max(val)) if gfun.n_outputs is not None else float(val)

    pins = [1.0 - boundary.delta * 0.5**m for m in range(8)]
    limit = cauchy_limit(interior, pins, tol=consistency_tol, blocks=3)
    target = float(np.max(value)) if gfun.n_outputs is not None else float(value)
    gap = abs(limit.value - target)
    if gap > consistency_tol:
        raise ExtensionConsistencyError(
            f"interior approach gives {limit.value:.8f}, boundary form {target:.8f} (gap {gap:.2e})"
        )
    return value


def _richardson_derivative(f, x, h):
    """Central differences at steps h and h/2 with Richardson combination.

    Returns (derivative, level disagreement).
    """
    d1 = (np.asarray(f(x + h)) - np.asarray(f(x - h))) / (2.0 * h)
    d2 = (np.asarray(f(x + h / 2)) - np.asarray(f(x - h / 2))) / h
    rich = (4.0 * d2 - d1) / 3.0
    return rich, float(np.max(np.abs(d2 - d1)))


def mte_identified(scenario, gfun, boundary, step=None, *, quad_tol=1e-9, richardson_tol=1e-4):
    """Recover E[G(Y_k)|V_j=q*], E[G(Y_j)|V_j=q*], and their contrast.

    Both values are partial derivatives of the extended conditional
    expectations in the contrast coordinate at the pinned boundary point; the
    contrast branch carries a minus sign.
    """
    j = boundary.contrast
    q_star = boundary.q_star
    h = step if step is not None else max(1e-4, quad_tol ** (1.0 / 3.0))
    if 2.0 * h >= boundary.delta:
        raise ValueError(f"stencil 2h={2 * h} exceeds the boundary neighborhood delta={boundary.delta}")
    if q_star - 2 * h <= 0 or q_star + 2 * h >= 1:
        raise ValueError("step too large for the boundary point")

    def f_base(qv):
        return _boundary_form(scenario, gfun, scenario.baseline, j, qv)

    def f_con(qv):
        return _boundary_form(scenario, gfun, j, j, qv)

    e_base, gap_b = _richardson_derivative(f_base, q_star, h)
    e_con_raw, gap_c = _richardson_derivative(f_con, q_star, h)
    e_con = -e_con_raw
    gap = max(gap_b, gap_c)
    if gap > richardson_tol:
        raise StepSizeError(
            f"Richardson levels disagree by {gap:.3e} > {richardson_tol:.1e} at q*={q_star} (h={h})"
        )
    if gfun.n_outputs is None:
        e_base = float(e_base)
        e_con = float(e_con)
        mte = e_base - e_con
    else:
        mte = e_base - e_con
    diagnostics = {"h": h, "richardson_gap_baseline": gap_b, "richardson_gap_contrast": gap_c}
    return MteResult(expected_baseline=e_base, expected_contrast=e_con, mte=mte, diagnostics=diagnostics)


def leibniz_residuals(scenario, gfun, contrast, q_values, *, step=1e-3):
    """|d/dq of the baseline boundary integral - integrand at q| per q.

    The fundamental self-check: numerical differentiation of the cumulative
    form must return the margin conditional mean itself.
    """
    out = []
    for q in np.atleast_1d(q_values):
        deriv, _ = _richardson_derivative(
            lambda x: _boundary_form(scenario, gfun, scenario.baseline, contrast, x), float(q), step
        )
        direct = margin_conditional_mean(scenario, gfun, scenario.baseline, contrast, float(q))[0]
        out.append(float(np.max(np.abs(deriv - direct))))
    return np.asarray(out)


# ---------------------------------------------------------------------------
# threshold identification by limits


def population_H(scenario):
    """The baseline choice probability z -> Pr(D_k = 1 | Z = z)."""
    mm = margins(scenario)

    def H(z):
        q = thresholds(scenario, np.asarray(z, dtype=float)).values
        return mm.joint_cdf(np.clip(q, 0.0, 1.0))

    return H


def identify_thresholds_by_limit(scenario, z, *, n_steps=8, decrement=2.5, convergence_tol=1e-6):
    """Recover each threshold by driving the other rivals' utilities to -inf.

    For rival i the excluded coordinates of every other rival are moved along
    a fixed-decrement schedule; the trace of H must rise monotonically and
    settle, and its limit is the identified Q_i(z).
    """
    z = np.asarray(z, dtype=float)
    mm = margins(scenario)
    H = population_H(scenario)
    truth = thresholds(scenario, z)
    estimates, traces, truths = {}, {}, {}
    for pos, i in enumerate(mm.rivals):
        others = [o for o in mm.rivals if o != i]
        rules = [scenario.exclusion_rule_for(o) for o in others]
        coords = [r.coordinate for r in rules]
        if len(set(coords)) != len(coords):
            raise LimitIdentificationError("exclusion rules must use distinct coordinates")
        schedules = [approach_schedule(scenario, r, z, n_steps=n_steps, decrement=decrement) for r in rules]
        trace = []
        for m in range(n_steps):
            zm = z.copy()
            for rule, sched in zip(rules, schedules):
                zm[rule.coordinate] = sched[m][rule.coordinate]
            trace.append((zm, H(zm)))
        hs = np.array([h for _, h in trace])
        if np.any(np.diff(hs) < -1e-12):
            raise LimitIdentificationError(f"H trace for rival {i} is not monotone: {hs}")
        if abs(hs[-1] - hs[-2]) > convergence_tol:
            raise LimitIdentificationError(f"H trace for rival {i} has not converged: {hs}")
        estimates[i] = float(hs[-1])
        truths[i] = truth[i]
        traces[i] = trace
    return ThresholdLimitResult(rivals=mm.rivals, estimates=estimates, truths=truths, traces=traces)


# ---------------------------------------------------------------------------
# quantile treatment effects


def _invert_cdf(y_grid, cdf, tau, label):
    cdf = np.asarray(cdf, dtype=float)
    if np.any(cdf < -1e-6) or np.any(cdf > 1.0 + 1e-6):
        raise InversionError(f"traced CDF for {label} leaves [0,1]: range [{cdf.min()}, {cdf.max()}]")
    if np.any(np.diff(cdf) < -1e-6):
        raise InversionError(f"traced CDF for {label} is decreasing beyond tolerance")
    cdf = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0))
    keep = np.concatenate([[True], np.diff(cdf) > 1e-12])
    cdf_k, y_k = cdf[keep], np.asarray(y_grid)[keep]
    if cdf_k.size < 2 or not (cdf_k[0] <= tau <= cdf_k[-1]):
        raise InversionError(f"tau={tau} outside the traced CDF range [{cdf[0]:.4f}, {cdf[-1]:.4f}] for {label}")
    return float(PchipInterpolator(cdf_k, y_k)(tau))


def qte(scenario, boundary, tau, y_grid, *, step=None):
    """Quantile treatment effect at level tau from traced conditional CDFs."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    y_grid = np.asarray(y_grid, dtype=float)
    gfun = indicator_below(y_grid)
    res = mte_identified(scenario, gfun, boundary, step=step)
    q_base = _invert_cdf(y_grid, res.expected_baseline, tau, "baseline arm")
    q_con = _invert_cdf(y_grid, res.expected_contrast, tau, "contrast arm")
    return QteResult(
        tau=tau,
        qte=q_base - q_con,
        quantile_baseline=q_base,
        quantile_contrast=q_con,
        y_grid=y_grid,
        cdf_baseline=np.asarray(res.expected_baseline),
        cdf_contrast=np.asarray(res.expected_contrast),
    )


# ---------------------------------------------------------------------------
# oracles


def _gaussian_margin_params(scenario):
    mm = margins(scenario)
    comps = scenario.errors.components
    if not scenario.errors.independent or any(c.kind != "gaussian" for c in comps):
        return None
    k = scenario.baseline
    var_k = comps[k].params[1] ** 2
    means = np.array([comps[k].params[0] - comps[i].params[0] for i in mm.rivals])
    stds = np.array([float(np.hypot(comps[k].params[1], comps[i].params[1])) for i in mm.rivals])
    return means, stds, var_k


def oracle_margin_mean(scenario, gfun, t, contrast, q, *, method="auto", n_draws=2_000_000, seed=0, window=0.005):
    """Independent oracle for E[G(Y_t) | V_j = q].

    Gaussian errors with outcome means affine in the margins admit a closed
    form through conditional-normal moments; anything else falls back to a
    Monte Carlo window estimate (draws with |V_j - q| < window). Returns
    (value, se); the closed form reports se = 0.
    """
    from .expressions import affine_in

    mm = margins(scenario)
    pos_j = mm.rivals.index(contrast)
    params = _gaussian_margin_params(scenario)
    affine = None
    if scenario.outcomes is not None and gfun.kind == "identity":
        affine = affine_in(scenario.outcomes.means[t], "v", set(mm.rivals))
    if method == "auto":
        method = "closed-form" if (params is not None and affine is not None) else "mc"

    if method == "closed-form":
        if params is None or affine is None:
            raise ValueError("closed-form oracle needs Gaussian errors and affine outcome means")
        means, stds, var_k = params
        x_j = means[pos_j] + stds[pos_j] * _norm_ppf(q)
        const, coeffs = affine
        value = const + scenario.outcomes.noise_mean(t)
        for i, b in coeffs.items():
            pos_i = mm.rivals.index(i)
            if pos_i == pos_j:
                value += b * q
                continue
            mu_c = means[pos_i] + (var_k / stds[pos_j] ** 2) * (x_j - means[pos_j])
            var_c = stds[pos_i] ** 2 - var_k**2 / stds[pos_j] ** 2
            value += b * _norm_cdf((mu_c - means[pos_i]) / np.sqrt(stds[pos_i] ** 2 + var_c))
        return float(value), 0.0

    rng = np.random.default_rng(seed)
    picked = []
    for _ in range(30):
        u = scenario.errors.sample(n_draws, rng)
        v = mm.v_from_u(u)
        sel = np.abs(v[:, pos_j] - q) < window
        if np.any(sel):
            vs = v[sel]
            env = scenario.v_env(vs)
            y = scenario.outcomes.draw(t, env, rng)
            picked.append(gfun.apply(y))
        if sum(p.shape[0] for p in picked) >= 50_000:
            break
    if not picked:
        raise ValueError("Monte Carlo window oracle collected no draws")
    allv = np.concatenate(picked, axis=0)
    se = float(np.max(allv.std(axis=0, ddof=1) / np.sqrt(allv.shape[0])))
    mean = allv.mean(axis=0)
    return (float(mean) if gfun.n_outputs is None else mean), se


def _norm_cdf(x):
    from scipy.special import ndtr

    return ndtr(x)


def _norm_ppf(p):
    from scipy.special import ndtri

    return ndtri(p)


def identification_curve(scenario, contrast, q_grid, *, delta=0.04, gfun=None, oracle="auto", seed=0):
    """MTE curve rows over a q* grid: recovered both branches, oracle, error.

    Row keys match the published CSV schema: qstar, recovered_k, recovered_j,
    mte, oracle_mte, abs_error.
    """
    gfun = identity_g() if gfun is None else gfun
    rows = []
    for q_star in np.atleast_1d(q_grid):
        boundary = BoundaryPoint(contrast=contrast, q_star=float(q_star), delta=delta)
        res = mte_identified(scenario, gfun, boundary)
        ok, _ = oracle_margin_mean(scenario, gfun, scenario.baseline, contrast, float(q_star), method=oracle, seed=seed)
        oj, _ = oracle_margin_mean(scenario, gfun, contrast, contrast, float(q_star), method=oracle, seed=seed + 1)
        oracle_mte = ok - oj
        rows.append(
            {
                "qstar": float(q_star),
                "recovered_k": res.expected_baseline,
                "recovered_j": res.expected_contrast,
                "mte": res.mte,
                "oracle_mte": oracle_mte,
                "abs_error": abs(res.mte - oracle_mte),
            }
        )
    return rows
