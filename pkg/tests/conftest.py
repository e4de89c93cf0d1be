import json

import pytest

from mtelab import config


@pytest.fixture(scope="session")
def figure1():
    return config.build_scenario(config.bundled_config("figure1"))


@pytest.fixture(scope="session")
def trivial():
    return config.build_scenario(config.bundled_config("trivial_outcomes"))


@pytest.fixture(scope="session")
def logistic_mix():
    return config.build_scenario(config.bundled_config("logistic_mix"))


@pytest.fixture(scope="session")
def k4():
    return config.build_scenario(config.bundled_config("k4_linear"))


@pytest.fixture(scope="session")
def all_bundled(figure1, trivial, logistic_mix, k4):
    return {"figure1": figure1, "trivial_outcomes": trivial, "logistic_mix": logistic_mix, "k4_linear": k4}


def variant_config(base, **overrides):
    """A bundled config with top-level keys replaced; returns ScenarioConfig."""
    data = config.bundled_config(base).data
    data.update(overrides)
    data.setdefault("name", data["name"] + "_variant")
    return config.parse_config(json.dumps(data))
