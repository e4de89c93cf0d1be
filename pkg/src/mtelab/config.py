"""Declarative scenario configs: parse, validate, serialize, build.

Configs are single JSON documents. Parsing canonicalizes the structure so
``parse -> serialize -> parse`` is the identity; the fingerprint is the
SHA-256 of the canonical form and stamps every artifact a run produces.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import laws
from .expressions import parse_expression
from .scenario import ExclusionRule, InstrumentLaw, OutcomeModel, Scenario

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "parse_config",
    "load_config",
    "serialize_config",
    "fingerprint",
    "build_scenario",
    "bundled_config",
    "bundled_names",
]


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    canonical: str

    @property
    def data(self):
        return json.loads(self.canonical)

    def __getitem__(self, key):
        return self.data[key]


_DEFAULTS = {
    "normal_scale": "variance",
    "grids": {"q_star": [round(0.1 * i, 2) for i in range(1, 10)], "tau": [0.25, 0.5, 0.75], "y": []},
    "seeds": {"root": 20240801},
    "tolerances": {"quadrature": 1e-9},
}

_REQUIRED = ("name", "treatments", "baseline", "errors", "utilities", "instruments")


def parse_config(text):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    data = copy.deepcopy(raw)
    for key, default in _DEFAULTS.items():
        data.setdefault(key, copy.deepcopy(default))
    for key in _REQUIRED:
        if key not in data:
            raise ConfigError(f"config is missing required key {key!r}")
    cfg = ScenarioConfig(canonical=json.dumps(data, sort_keys=True, separators=(",", ":")))
    build_scenario(cfg)  # full structural validation
    return cfg


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def serialize_config(cfg):
    return json.dumps(cfg.data, sort_keys=True, indent=2) + "\n"


def fingerprint(cfg):
    return hashlib.sha256(cfg.canonical.encode()).hexdigest()[:16]


def _parse_limit(value):
    if isinstance(value, str):
        if value in ("inf", "+inf"):
            return np.inf
        if value == "-inf":
            return -np.inf
        raise ConfigError(f"bad limit value {value!r}")
    return float(value)


def _build_law(spec, normal_scale):
    if not isinstance(spec, dict) or "law" not in spec:
        raise ConfigError(f"law spec must be an object with a 'law' key, got {spec!r}")
    kind = spec["law"]
    try:
        if kind == "gaussian":
            if normal_scale == "variance":
                return laws.gaussian(spec["mean"], variance=spec["scale"])
            if normal_scale == "stddev":
                return laws.gaussian(spec["mean"], std=spec["scale"])
            raise ConfigError(f"bad normal_scale {normal_scale!r}")
        if kind == "uniform":
            return laws.uniform(spec["lo"], spec["hi"])
        if kind == "logistic":
            return laws.logistic(spec["loc"], spec["scale"])
        if kind == "student-t":
            return laws.student_t(spec["df"], spec.get("loc", 0.0), spec.get("scale", 1.0))
    except KeyError as exc:
        raise ConfigError(f"law spec {spec!r} missing parameter {exc}") from None
    raise ConfigError(f"unknown law kind {kind!r}")


def build_scenario(cfg):
    """Materialize the Scenario a config describes."""
    data = cfg.data
    normal_scale = data["normal_scale"]
    K = int(data["treatments"])
    comps = data["errors"].get("components", [])
    if len(comps) != K:
        raise ConfigError(f"{len(comps)} error components for {K} treatments")
    errors = laws.ErrorVectorLaw(tuple(_build_law(s, normal_scale) for s in comps))

    utilities = data["utilities"]
    if len(utilities) != K:
        raise ConfigError(f"{len(utilities)} utilities for {K} treatments")
    instruments = InstrumentLaw(tuple(_build_law(s, normal_scale) for s in data["instruments"]))

    outcomes = None
    if data.get("outcomes"):
        means = data["outcomes"]["means"]
        noise = data["outcomes"].get("noise", [None] * K)
        if len(means) != K or len(noise) != K:
            raise ConfigError("outcome means/noise must cover every treatment")
        outcomes = OutcomeModel(
            means=tuple(parse_expression(m) for m in means),
            noises=tuple(None if s is None else _build_law(s, normal_scale) for s in noise),
        )

    exclusion = tuple(
        ExclusionRule(int(r["treatment"]), int(r["coordinate"]), _parse_limit(r["limit"]))
        for r in data.get("exclusion", [])
    )
    try:
        return Scenario(
            utilities=tuple(parse_expression(u) for u in utilities),
            instruments=instruments,
            errors=errors,
            baseline=int(data["baseline"]),
            outcomes=outcomes,
            exclusion=exclusion,
            name=data["name"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# bundled scenarios

_GAUSS = lambda mean, scale: {"law": "gaussian", "mean": mean, "scale": scale}  # noqa: E731

_BUNDLED = {
    # The three-treatment scenario behind the support-surface figure:
    # U0 ~ N(0, 0.5), U1 ~ N(1, 1), U2 ~ N(-1, 1) (variance reading),
    # with linear outcome means in the margins.
    "figure1": {
        "name": "figure1",
        "treatments": 3,
        "baseline": 1,
        "errors": {"components": [_GAUSS(0.0, 0.5), _GAUSS(1.0, 1.0), _GAUSS(-1.0, 1.0)]},
        "utilities": ["-z[0]", "0", "-z[1]"],
        "instruments": [_GAUSS(1.0, 1.5), _GAUSS(2.0, 2.0)],
        "outcomes": {
            "means": [
                "0.1 - 0.4*v[0] + 0.8*v[2]",
                "0.2 + 1.0*v[0] + 0.6*v[2]",
                "-0.3 + 0.5*v[0] + 1.2*v[2]",
            ],
            "noise": [_GAUSS(0.0, 0.09), _GAUSS(0.0, 0.09), _GAUSS(0.0, 0.09)],
        },
        "exclusion": [
            {"treatment": 0, "coordinate": 0, "limit": "inf"},
            {"treatment": 2, "coordinate": 1, "limit": "inf"},
        ],
        "grids": {
            "q_star": [round(0.1 * i, 2) for i in range(1, 10)],
            "tau": [0.25, 0.5, 0.75],
            "y": [round(x, 3) for x in np.linspace(-1.5, 3.0, 31)],
        },
        "seeds": {"root": 20240801},
    },
    # Outcomes defined directly on the margins: Y1 = V2, Y2 = 1 - V2, so the
    # baseline-vs-2 contrast is exactly 2q - 1.
    "trivial_outcomes": {
        "name": "trivial_outcomes",
        "treatments": 3,
        "baseline": 1,
        "errors": {"components": [_GAUSS(0.0, 0.5), _GAUSS(1.0, 1.0), _GAUSS(-1.0, 1.0)]},
        "utilities": ["-z[0]", "0", "-z[1]"],
        "instruments": [_GAUSS(1.0, 1.5), _GAUSS(2.0, 2.0)],
        "outcomes": {"means": ["v[0]", "v[2]", "1 - v[2]"], "noise": [None, None, None]},
        "exclusion": [
            {"treatment": 0, "coordinate": 0, "limit": "inf"},
            {"treatment": 2, "coordinate": 1, "limit": "inf"},
        ],
        "seeds": {"root": 20240802},
    },
    # Non-Gaussian error mix exercising the numeric-convolution difference
    # laws inside the hurdle representation.
    "logistic_mix": {
        "name": "logistic_mix",
        "treatments": 3,
        "baseline": 1,
        "errors": {
            "components": [
                {"law": "logistic", "loc": 0.0, "scale": 1.0},
                _GAUSS(0.5, 1.0),
                {"law": "student-t", "df": 6.0, "loc": -0.3, "scale": 0.9},
            ]
        },
        "utilities": ["-z[0]", "0", "-z[1]"],
        "instruments": [_GAUSS(0.5, 4.0), _GAUSS(0.8, 2.2)],
        "outcomes": {
            "means": ["0.3 + 0.5*v[0]", "0.1 + 0.7*v[2]", "-0.2 + 0.4*v[0] + 0.4*v[2]"],
            "noise": [_GAUSS(0.0, 0.04), _GAUSS(0.0, 0.04), _GAUSS(0.0, 0.04)],
        },
        "exclusion": [
            {"treatment": 0, "coordinate": 0, "limit": "inf"},
            {"treatment": 2, "coordinate": 1, "limit": "inf"},
        ],
        "seeds": {"root": 20240803},
    },
    # Four treatments, baseline 1; contrast-3 identification exercises the
    # general starred-hurdle products.
    "k4_linear": {
        "name": "k4_linear",
        "treatments": 4,
        "baseline": 1,
        "errors": {
            "components": [_GAUSS(0.0, 1.0), _GAUSS(0.3, 1.0), _GAUSS(-0.4, 0.8), _GAUSS(0.2, 1.2)]
        },
        "utilities": ["-z[0]", "0", "-z[1]", "-z[2]"],
        "instruments": [_GAUSS(0.3, 2.0), _GAUSS(0.7, 1.8), _GAUSS(0.1, 2.2)],
        "outcomes": {
            "means": [
                "0.1 - 0.4*v[0] + 0.5*v[2] + 0.3*v[3]",
                "0.2 + 1.0*v[0] + 0.6*v[2] - 0.5*v[3]",
                "-0.3 + 0.5*v[0] + 1.2*v[2] + 0.4*v[3]",
                "0.4 + 0.3*v[0] - 0.6*v[2] + 0.9*v[3]",
            ],
            "noise": [_GAUSS(0.0, 0.09), _GAUSS(0.0, 0.09), _GAUSS(0.0, 0.09), _GAUSS(0.0, 0.09)],
        },
        "exclusion": [
            {"treatment": 0, "coordinate": 0, "limit": "inf"},
            {"treatment": 2, "coordinate": 1, "limit": "inf"},
            {"treatment": 3, "coordinate": 2, "limit": "inf"},
        ],
        "seeds": {"root": 20240804},
    },
}


def bundled_names():
    return tuple(sorted(_BUNDLED))


def bundled_config(name):
    if name not in _BUNDLED:
        raise ConfigError(f"unknown bundled scenario {name!r}; available: {', '.join(bundled_names())}")
    return parse_config(json.dumps(_BUNDLED[name]))
