import numpy as np
import pytest

from mtelab import config, population as pop
from mtelab.mc import chunked_stats
from mtelab.scenario import ScenarioError, approach_schedule, v_from_u
from tests.conftest import variant_config


def test_utilities_at_shapes(figure1):
    z = np.array([[1.0, 2.0], [0.0, 0.0]])
    r = figure1.utilities_at(z)
    assert r.shape == (2, 3)
    np.testing.assert_allclose(r[0], [-1.0, 0.0, -2.0])


def test_v_env_embeds_rival_columns(figure1):
    env = figure1.v_env(np.array([[0.25, 0.75]]))
    np.testing.assert_allclose(env[0], [0.25, 0.0, 0.75])


def test_v_from_u_baseline_override(figure1):
    u = np.zeros((1, 3))
    v_default = v_from_u(figure1, u)
    v_alt = v_from_u(figure1, u, baseline=0)
    assert v_default.shape == v_alt.shape == (1, 2)
    with pytest.raises(ScenarioError):
        v_from_u(figure1, u, baseline=7)


def test_scenario_validation_errors():
    with pytest.raises(config.ConfigError):
        # utility referencing an instrument coordinate that does not exist
        config.build_scenario(variant_config("figure1", utilities=["-z[0]", "0", "-z[5]"], name="badz"))
    with pytest.raises(config.ConfigError):
        # outcome mean referencing the baseline margin
        variant = variant_config  # readability
        config.build_scenario(
            variant(
                "figure1",
                outcomes={"means": ["v[1]", "v[2]", "v[0]"], "noise": [None, None, None]},
                name="badv",
            )
        )
    with pytest.raises(config.ConfigError):
        config.build_scenario(variant_config("figure1", baseline=9, name="badb"))


def test_exclusion_rule_lookup(figure1):
    rule = figure1.exclusion_rule_for(0)
    assert rule.coordinate == 0
    with pytest.raises(ScenarioError):
        figure1.exclusion_rule_for(1)  # baseline has no exclusion rule


def test_approach_schedule_fixed_decrement(figure1):
    rule = figure1.exclusion_rule_for(2)
    z = np.array([1.0, 2.0])
    rows = approach_schedule(figure1, rule, z, n_steps=5, decrement=1.25)
    r0 = figure1.utilities_at(z[None, :])[0, 2]
    for m, row in enumerate(rows, start=1):
        rm = figure1.utilities_at(row[None, :])[0, 2]
        assert rm == pytest.approx(r0 - 1.25 * m, abs=1e-9)
        assert row[0] == z[0]  # untouched coordinate


def test_approach_schedule_log_limit():
    sc = config.build_scenario(
        variant_config(
            "figure1",
            utilities=["-z[0]", "0", "log(z[1])"],
            instruments=[
                {"law": "gaussian", "mean": 1.0, "scale": 1.5},
                {"law": "uniform", "lo": 0.05, "hi": 4.0},
            ],
            exclusion=[
                {"treatment": 0, "coordinate": 0, "limit": "inf"},
                {"treatment": 2, "coordinate": 1, "limit": 0.0},
            ],
            name="log_sched",
        )
    )
    rows = approach_schedule(sc, sc.exclusion_rule_for(2), np.array([1.0, 1.0]), n_steps=6, decrement=2.0)
    assert np.all(np.diff(rows[:, 1]) < 0) and rows[-1, 1] > 0.0
    np.testing.assert_allclose(np.log(rows[:, 1]), -2.0 * np.arange(1, 7), atol=1e-9)


def test_moment_estimates_finite(all_bundled):
    # registered G transforms have finite absolute moments on every scenario
    rng = np.random.default_rng(55)
    for sc in all_bundled.values():
        u = sc.errors.sample(20_000, rng)
        v = v_from_u(sc, u)
        env = sc.v_env(v)
        for t in range(sc.n_treatments):
            y = sc.outcomes.draw(t, env, rng)
            for g in (pop.identity_g(), pop.indicator_below([0.3])):
                assert np.all(np.isfinite(np.abs(g.apply(y)).mean(axis=0)))


def test_chunked_mc_thread_invariance():
    def fn(rng, m):
        return rng.standard_normal(m)

    m1, s1 = chunked_stats(fn, 1_000_000, 99, threads=1, chunk=200_000)
    m4, s4 = chunked_stats(fn, 1_000_000, 99, threads=4, chunk=200_000)
    assert m1 == m4 and s1 == s4
