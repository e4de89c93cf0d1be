"""The multinomial choice rule and its threshold-crossing representation.

``choose`` is the argmax rule D = argmax_k R_k(Z) - U_k. ``thresholds`` and
``hurdle_indicators`` rebuild the same choice from the margin coordinates:
the baseline wins iff every plain hurdle S_i passes; a contrast treatment j
wins iff its own hurdle fails (1 - S_j) and every starred hurdle S*_i passes.
``verify_representation`` checks draw-by-draw that the two routes agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import margins

__all__ = [
    "TieError",
    "BoundaryError",
    "ChoiceOutcome",
    "ThresholdVector",
    "HurdleIndicators",
    "RepresentationReport",
    "choose",
    "choose_many",
    "thresholds",
    "thresholds_many",
    "hurdle_indicators",
    "representation_choice",
    "verify_representation",
]

TIE_TOLERANCE = 1e-12


class TieError(RuntimeError):
    """Exact tie between the top two latent utilities (a measure-zero event)."""


class BoundaryError(ValueError):
    """Quantile evaluation requested at a margin value of exactly 0 or 1."""


@dataclass(frozen=True)
class ChoiceOutcome:
    chosen: int
    indicators: np.ndarray
    latent: np.ndarray


@dataclass(frozen=True)
class ThresholdVector:
    """Q_i(z) = F_{U_k - U_i}(R_k(z) - R_i(z)) for each rival i."""

    rivals: tuple
    values: np.ndarray

    def as_dict(self):
        return {i: float(self.values[pos]) for pos, i in enumerate(self.rivals)}

    def __getitem__(self, rival):
        return float(self.values[self.rivals.index(rival)])


@dataclass(frozen=True)
class HurdleIndicators:
    plain: dict
    starred: dict
    contrast: int


@dataclass(frozen=True)
class RepresentationReport:
    n_draws: int
    n_mismatches: int
    ties_skipped: int
    mismatches: list = field(default_factory=list)

    @property
    def ok(self):
        return self.n_mismatches == 0


def latent_utilities(scenario, z, u):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    return scenario.utilities_at(z) - u


def choose(scenario, z, u):
    """Argmax choice for one draw; exact top-two ties raise TieError."""
    latent = latent_utilities(scenario, z, u)[0]
    order = np.argsort(latent)
    if latent[order[-1]] == latent[order[-2]]:
        raise TieError(f"latent utilities tie at {latent[order[-1]]!r}")
    chosen = int(order[-1])
    indicators = np.zeros(scenario.n_treatments)
    indicators[chosen] = 1.0
    return ChoiceOutcome(chosen=chosen, indicators=indicators, latent=latent)


def choose_many(scenario, z, u):
    """Vectorized argmax choices; returns (chosen, margin to runner-up)."""
    latent = latent_utilities(scenario, z, u)
    part = np.partition(latent, latent.shape[1] - 2, axis=1)
    margin = part[:, -1] - part[:, -2]
    if np.any(margin == 0.0):
        raise TieError(f"{int(np.sum(margin == 0.0))} exact ties in batch")
    return np.argmax(latent, axis=1), margin


def thresholds(scenario, z):
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    values = thresholds_many(scenario, np.atleast_2d(z))
    if single:
        return ThresholdVector(scenario.rivals, values[0])
    return ThresholdVector(scenario.rivals, values)


def thresholds_many(scenario, z):
    mm = margins(scenario)
    r = scenario.utilities_at(z)
    out = np.empty(z.shape[:-1] + (len(mm.rivals),))
    for pos, i in enumerate(mm.rivals):
        out[..., pos] = mm.laws[pos].cdf(r[..., scenario.baseline] - r[..., i])
    return out


def _star_cut(mm, pos_i, pos_j, v_j, q_i, q_j):
    """Threshold inside S*_i: F_{k,i}(F^-1_{k,j}(v_j) - F^-1_{k,j}(q_j) + F^-1_{k,i}(q_i)).

    Thresholds saturated at 0/1 in floating point take their limit values
    (+/-inf cuts); a margin value at exactly 0 or 1 has no finite quantile
    and raises BoundaryError.
    """
    law_i = mm.laws[pos_i]
    law_j = mm.laws[pos_j]
    v_j, q_i, q_j = np.broadcast_arrays(
        np.asarray(v_j, dtype=float), np.asarray(q_i, dtype=float), np.asarray(q_j, dtype=float)
    )
    if np.any((v_j <= 0.0) | (v_j >= 1.0)):
        raise BoundaryError("starred hurdle needs the contrast margin strictly inside (0, 1)")
    cut = np.empty(v_j.shape)
    hi = (q_i >= 1.0) | (q_j <= 0.0)
    lo = ((q_i <= 0.0) | (q_j >= 1.0)) & ~hi
    mid = ~(hi | lo)
    cut[hi] = np.inf
    cut[lo] = -np.inf
    if np.any(mid):
        cut[mid] = law_i.cdf(
            law_j.quantile(v_j[mid]) - law_j.quantile(q_j[mid]) + law_i.quantile(q_i[mid])
        )
    return cut


def hurdle_indicators(scenario, z, v, contrast):
    """Plain hurdles S_i = 1{v_i < Q_i(z)} and starred hurdles S*_i for the
    given contrast treatment; scalar draw interface."""
    if contrast == scenario.baseline or contrast not in scenario.rivals:
        raise ValueError(f"contrast {contrast} must be a rival treatment")
    mm = margins(scenario)
    q = thresholds_many(scenario, np.atleast_2d(np.asarray(z, dtype=float)))[0]
    v = np.asarray(v, dtype=float)
    plain = {}
    for pos, i in enumerate(mm.rivals):
        plain[i] = int(v[pos] < q[pos])
    pos_j = mm.rivals.index(contrast)
    starred = {}
    for pos, i in enumerate(mm.rivals):
        if i == contrast:
            continue
        cut = _star_cut(mm, pos, pos_j, np.asarray(v[pos_j]), np.asarray(q[pos]), np.asarray(q[pos_j]))
        starred[i] = int(v[pos] < cut)
    return HurdleIndicators(plain=plain, starred=starred, contrast=contrast)


def representation_choice(scenario, z, v):
    """Vectorized hurdle-representation choice over draws.

    Returns (chosen, valid) where valid flags rows whose hurdle products
    selected exactly one treatment (they always should).
    """
    mm = margins(scenario)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    q = thresholds_many(scenario, z)
    n = v.shape[0]
    K = scenario.n_treatments
    wins = np.zeros((n, K), dtype=bool)

    s_plain = v < q
    wins[:, scenario.baseline] = np.all(s_plain, axis=1)
    for pos_j, j in enumerate(mm.rivals):
        win_j = ~s_plain[:, pos_j]
        for pos_i, i in enumerate(mm.rivals):
            if i == j:
                continue
            cut = _star_cut(mm, pos_i, pos_j, v[:, pos_j], q[:, pos_i], q[:, pos_j])
            win_j &= v[:, pos_i] < cut
        wins[:, j] = win_j

    counts = wins.sum(axis=1)
    valid = counts == 1
    chosen = np.full(n, -1)
    chosen[valid] = np.argmax(wins[valid], axis=1)
    return chosen, valid


def verify_representation(scenario, n_draws, seed, max_reported=10):
    """Draw (z, u) pairs and require the argmax choice to equal the hurdle
    representation on every draw; ties within TIE_TOLERANCE are skipped."""
    rng = np.random.default_rng(seed)
    z = scenario.instruments.sample(n_draws, rng)
    u = scenario.errors.sample(n_draws, rng)
    chosen, margin = choose_many(scenario, z, u)
    v = margins(scenario).v_from_u(u)
    rep, valid = representation_choice(scenario, z, v)

    ties = margin <= TIE_TOLERANCE
    bad = ((rep != chosen) | ~valid) & ~ties
    mismatches = []
    for idx in np.flatnonzero(bad)[:max_reported]:
        mismatches.append(
            {
                "draw": int(idx),
                "argmax": int(chosen[idx]),
                "representation": int(rep[idx]),
                "latent": (scenario.utilities_at(z[idx]) - u[idx]).tolist(),
            }
        )
    return RepresentationReport(
        n_draws=n_draws,
        n_mismatches=int(np.sum(bad)),
        ties_skipped=int(np.sum(ties)),
        mismatches=mismatches,
    )
