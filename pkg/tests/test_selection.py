import json

import numpy as np
import pytest
from scipy.stats import norm

from mtelab import config, selection
from mtelab.scenario import margins
from tests.conftest import variant_config

# frozen 10^7-draw argmax frequencies: R=(0,0,0), figure1 errors
FLAT_CHOICE_FREQS = ([0.18807700, 0.04877880, 0.76314420], [1.24e-4, 6.81e-5, 1.34e-4])


def flat_figure1():
    return config.build_scenario(variant_config("figure1", utilities=["0", "0", "0"], name="flat"))


def test_choose_dominant_utility(figure1):
    sc = config.build_scenario(variant_config("figure1", utilities=["0", "10", "0"], name="dominant"))
    out = selection.choose(sc, np.zeros(2), np.zeros(3))
    assert out.chosen == 1
    assert out.indicators.tolist() == [0.0, 1.0, 0.0]


def test_choose_cost_limit(figure1):
    sc = flat_figure1()
    u = np.array([5.0, 5.0, -1e9])
    assert selection.choose(sc, np.zeros(2), u).chosen == 2


def test_choose_tie_error():
    sc = flat_figure1()
    with pytest.raises(selection.TieError):
        selection.choose(sc, np.zeros(2), np.array([0.0, 0.0, 1.0]))


def test_choice_frequencies_against_oracle():
    sc = flat_figure1()
    rng = np.random.default_rng(21)
    u = sc.errors.sample(1_000_000, rng)
    d, _ = selection.choose_many(sc, np.zeros((1, 2)), u)
    freqs, ses = FLAT_CHOICE_FREQS
    # combined standard error: oracle plus this draw
    for t in range(3):
        emp = float(np.mean(d == t))
        se = float(np.hypot(ses[t], np.sqrt(emp * (1 - emp) / d.size)))
        assert abs(emp - freqs[t]) < 3 * se


def test_thresholds_symmetric_median():
    sc = config.build_scenario(
        variant_config(
            "figure1",
            errors={"components": [{"law": "gaussian", "mean": 0.0, "scale": 1.0}] * 3},
            utilities=["0", "0", "0"],
            name="sym",
        )
    )
    q = selection.thresholds(sc, np.zeros(2))
    assert q[0] == pytest.approx(0.5, abs=1e-12)
    assert q[2] == pytest.approx(0.5, abs=1e-12)


def test_thresholds_figure1_flat_values():
    # Q_i = F_{U_k - U_i}(R_k - R_i) with R = (0,0,0): the CDF argument is 0
    sc = flat_figure1()
    q = selection.thresholds(sc, np.zeros(2))
    assert q[0] == pytest.approx(norm.cdf(0, loc=1, scale=np.sqrt(1.5)), abs=1e-12)
    assert q[2] == pytest.approx(norm.cdf(0, loc=2, scale=np.sqrt(2)), abs=1e-12)


def test_thresholds_divergence_limit(figure1):
    # R_0 -> -inf (z0 -> +inf) drives Q_0 -> 1
    q = selection.thresholds(figure1, np.array([40.0, 2.0]))
    assert q[0] == pytest.approx(1.0, abs=1e-12)


def test_threshold_monotone_in_utility_gap(figure1):
    qs = [selection.thresholds(figure1, np.array([z0, 2.0]))[0] for z0 in (-1.0, 0.5, 2.0, 4.0)]
    assert all(a < b for a, b in zip(qs[:-1], qs[1:]))


def test_hurdle_indicators_all_pass(figure1):
    z = np.array([1.0, 2.0])
    q = selection.thresholds(figure1, z)
    v = np.array([q[0] / 2, q[2] / 2])
    ind = selection.hurdle_indicators(figure1, z, v, contrast=2)
    assert all(ind.plain.values())
    rep, valid = selection.representation_choice(figure1, z, v)
    assert valid[0] and rep[0] == figure1.baseline


def test_hurdle_boundary_error(figure1):
    z = np.array([1.0, 2.0])
    with pytest.raises(selection.BoundaryError):
        selection.hurdle_indicators(figure1, z, np.array([0.5, 1.0]), contrast=2)


def test_hurdle_contrast_validation(figure1):
    with pytest.raises(ValueError):
        selection.hurdle_indicators(figure1, np.zeros(2), np.array([0.5, 0.5]), contrast=1)


@pytest.mark.parametrize("name", ["figure1", "trivial_outcomes", "logistic_mix", "k4_linear"])
def test_representation_equivalence(all_bundled, name):
    report = selection.verify_representation(all_bundled[name], n_draws=20_000, seed=314)
    assert report.ok, report.mismatches


def test_representation_partition(figure1):
    rng = np.random.default_rng(5)
    z = figure1.instruments.sample(5_000, rng)
    u = figure1.errors.sample(5_000, rng)
    v = margins(figure1).v_from_u(u)
    rep, valid = selection.representation_choice(figure1, z, v)
    assert np.all(valid)  # exactly one treatment wins every draw


def test_scale_invariance_of_argmax(figure1):
    shifted = config.build_scenario(
        variant_config("figure1", utilities=["-z[0] + 3.7", "3.7", "-z[1] + 3.7"], name="shifted")
    )
    rng = np.random.default_rng(9)
    z = figure1.instruments.sample(20_000, rng)
    u = figure1.errors.sample(20_000, rng)
    d1, _ = selection.choose_many(figure1, z, u)
    d2, _ = selection.choose_many(shifted, z, u)
    assert np.array_equal(d1, d2)


def test_degenerate_treatment_never_wins():
    sc = config.build_scenario(
        variant_config("figure1", utilities=["-z[0]", "0", "-30"], name="suppressed")
    )
    report = selection.verify_representation(sc, n_draws=20_000, seed=2)
    assert report.ok
    rng = np.random.default_rng(3)
    z = sc.instruments.sample(20_000, rng)
    u = sc.errors.sample(20_000, rng)
    d, _ = selection.choose_many(sc, z, u)
    assert np.mean(d == 2) == 0.0
