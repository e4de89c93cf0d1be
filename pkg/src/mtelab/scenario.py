"""Scenario assembly: utilities, instruments, errors, outcomes, exclusions.

A :class:`Scenario` is the immutable data-generating process every other
module consumes. Margin structure (difference laws against the baseline) is
built lazily and cached per scenario.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .expressions import Expression
from .laws import ErrorVectorLaw, LawError, UnivariateLaw, margin_map

__all__ = [
    "ScenarioError",
    "InstrumentLaw",
    "OutcomeModel",
    "ExclusionRule",
    "Scenario",
    "margins",
    "v_from_u",
    "joint_cdf_V",
    "approach_schedule",
]


class ScenarioError(ValueError):
    """Inconsistent scenario specification."""


@dataclass(frozen=True)
class InstrumentLaw:
    """Independent continuous instrument coordinates."""

    coordinates: tuple

    @property
    def dim(self):
        return len(self.coordinates)

    def sample(self, n, rng):
        return np.column_stack([law.sample(rng, n) for law in self.coordinates])


@dataclass(frozen=True)
class OutcomeModel:
    """Per-treatment outcomes Y_t = m_t(V) + eps_t with independent noise.

    ``means[t]`` is an expression over ``v[i]`` where i indexes rival
    treatments; ``noises[t]`` may be None for a noiseless outcome.
    """

    means: tuple
    noises: tuple

    def mean_value(self, t, v_env):
        v_env = np.asarray(v_env, dtype=float)
        out = np.asarray(self.means[t](v=v_env), dtype=float)
        return np.broadcast_to(out, v_env.shape[:-1]).copy() if out.shape != v_env.shape[:-1] else out

    def noise_mean(self, t):
        noise = self.noises[t]
        return 0.0 if noise is None else noise.mean()

    def draw(self, t, v_env, rng):
        m = self.mean_value(t, v_env)
        noise = self.noises[t]
        if noise is None:
            return m
        return m + noise.sample(rng, np.shape(m))


@dataclass(frozen=True)
class ExclusionRule:
    """One instrument coordinate drives one utility to -inf at a limit value."""

    treatment: int
    coordinate: int
    limit: float


@dataclass(frozen=True)
class Scenario:
    """Full data-generating process for a K-way treatment choice."""

    utilities: tuple
    instruments: InstrumentLaw
    errors: ErrorVectorLaw
    baseline: int
    outcomes: OutcomeModel = None
    exclusion: tuple = ()
    name: str = ""

    def __post_init__(self):
        K = self.errors.n_treatments
        if K < 3:
            raise ScenarioError("scenario needs at least three treatments")
        if len(self.utilities) != K:
            raise ScenarioError(f"{len(self.utilities)} utilities for {K} treatments")
        if not 0 <= self.baseline < K:
            raise ScenarioError(f"baseline {self.baseline} out of range")
        dim = self.instruments.dim
        for t, expr in enumerate(self.utilities):
            for name, idx in expr.variables():
                if name != "z":
                    raise ScenarioError(f"utility {t} may only reference z[...], got {name}[{idx}]")
                if idx >= dim:
                    raise ScenarioError(f"utility {t} references z[{idx}] but dim(Z)={dim}")
        if self.outcomes is not None:
            if len(self.outcomes.means) != K or len(self.outcomes.noises) != K:
                raise ScenarioError("outcome model must cover every treatment")
            for t, expr in enumerate(self.outcomes.means):
                for name, idx in expr.variables():
                    if name != "v":
                        raise ScenarioError(f"outcome mean {t} may only reference v[...]")
                    if idx == self.baseline or not 0 <= idx < K:
                        raise ScenarioError(f"outcome mean {t} references v[{idx}], not a rival index")
        for rule in self.exclusion:
            if not 0 <= rule.treatment < K or rule.treatment == self.baseline:
                raise ScenarioError(f"exclusion rule for treatment {rule.treatment} is invalid")
            if not 0 <= rule.coordinate < dim:
                raise ScenarioError(f"exclusion rule coordinate {rule.coordinate} out of range")

    @property
    def n_treatments(self):
        return self.errors.n_treatments

    @property
    def rivals(self):
        return tuple(i for i in range(self.n_treatments) if i != self.baseline)

    def utilities_at(self, z):
        """Evaluate every R_k at instrument rows z of shape (..., dim)."""
        z = np.asarray(z, dtype=float)
        shape = z.shape[:-1]
        out = np.empty(shape + (self.n_treatments,))
        for t, expr in enumerate(self.utilities):
            out[..., t] = np.broadcast_to(expr(z=z), shape)
        return out

    def v_env(self, v):
        """Embed rival-ordered margin columns into a width-K array so outcome
        expressions can index v by rival treatment number."""
        v = np.asarray(v, dtype=float)
        env = np.zeros(v.shape[:-1] + (self.n_treatments,))
        env[..., list(self.rivals)] = v
        return env

    def exclusion_rule_for(self, treatment):
        for rule in self.exclusion:
            if rule.treatment == treatment:
                return rule
        raise ScenarioError(f"no exclusion rule registered for treatment {treatment}")


@lru_cache(maxsize=32)
def _margins_cached(errors, baseline):
    return margin_map(errors, baseline)


def margins(scenario):
    """The MarginMap (difference laws and V-transform) of a scenario."""
    return _margins_cached(scenario.errors, scenario.baseline)


def v_from_u(scenario, u, baseline=None):
    """Normalized heterogeneity V from sampled error vectors.

    V_i = F_{U_k - U_i}(u_k - u_i) for each rival i, columns in rival order.
    """
    if baseline is not None and baseline != scenario.baseline:
        if not 0 <= baseline < scenario.n_treatments:
            raise ScenarioError(f"baseline index {baseline} out of range")
        return _margins_cached(scenario.errors, baseline).v_from_u(u)
    return margins(scenario).v_from_u(u)


def joint_cdf_V(scenario, q, **kwargs):
    """Joint CDF of the margin vector at q in [0, 1]^(K-1)."""
    return margins(scenario).joint_cdf(np.asarray(q, dtype=float), **kwargs)


def approach_schedule(scenario, rule, z, n_steps=8, decrement=2.0):
    """Instrument rows driving the excluded utility down a fixed amount per step.

    Starting from row ``z``, coordinate ``rule.coordinate`` is moved toward
    ``rule.limit`` so that R_{rule.treatment} decreases by ``decrement`` at
    every step (geometric approach in the transformed coordinate).
    """
    z = np.asarray(z, dtype=float)
    expr = scenario.utilities[rule.treatment]
    coord = rule.coordinate
    limit = float(rule.limit)

    def util_at(c):
        row = z.copy()
        row[coord] = c
        return float(np.asarray(expr(z=row[None, :]))[0])

    start = float(z[coord])
    r0 = util_at(start)
    rows = []
    lo_probe = start
    for step in range(1, n_steps + 1):
        target = r0 - decrement * step
        probe = lo_probe
        for _ in range(300):
            if np.isinf(limit):
                nxt = probe + np.sign(limit) * max(1.0, abs(probe))
            else:
                nxt = limit + 0.5 * (probe - limit)
            if util_at(nxt) <= target:
                break
            probe = nxt
        else:
            raise ScenarioError(f"could not drive R_{rule.treatment} below {target}")
        a, b = sorted((probe, nxt))
        c = brentq(lambda c: util_at(c) - target, a, b, xtol=1e-12, rtol=8.9e-16)
        row = z.copy()
        row[coord] = c
        rows.append(row)
        lo_probe = c
    return np.asarray(rows)
