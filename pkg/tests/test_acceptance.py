"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete.
"""

import time

import numpy as np
import pytest
from scipy.stats import kstest

from mtelab import config, degenerate_support as ds, estimation as est, population as pop, selection
from mtelab.extension import CauchyContinuityError, cauchy_limit
from mtelab.scenario import joint_cdf_V, margins
from tests.test_population import _oracle_margin_mean_quadrature


def _report(num, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num} [{name}]: {status} -- {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def test_criterion_1_representation_equivalence(all_bundled):
    t0 = time.time()
    worst = {}
    for name, sc in all_bundled.items():
        report = selection.verify_representation(sc, n_draws=100_000, seed=314159)
        worst[name] = report.n_mismatches
    elapsed = time.time() - t0
    ok = all(v == 0 for v in worst.values()) and elapsed < 30.0
    _report(1, "representation equivalence", ok, f"mismatches={worst}, runtime={elapsed:.1f}s (<30s)")


def test_criterion_2_counterexample(figure1):
    t0 = time.time()
    pts, summary = ds.support_cloud(figure1.errors, 100_000, seed=20240801)
    rep = ds.assumption32_violation_report(figure1.errors, 100_000, seed=20240801)
    elapsed = time.time() - t0
    decreasing = all(a > b for a, b in zip(rep.cloud_volumes[:-1], rep.cloud_volumes[1:]))
    ok = (
        summary.max_residual < 1e-9
        and decreasing
        and rep.cloud_volumes[-1] < 0.2
        and all(v > 0.9 for v in rep.control_volumes)
        and elapsed < 60.0
    )
    _report(
        2,
        "degenerate support",
        ok,
        f"max residual={summary.max_residual:.2e}, cloud volumes={[round(v, 4) for v in rep.cloud_volumes]}, "
        f"control={[round(v, 3) for v in rep.control_volumes]}, runtime={elapsed:.1f}s (<60s)",
    )


def test_criterion_3_boundary_derivative_recovery(figure1, k4):
    t0 = time.time()
    grid = np.round(np.arange(0.1, 0.95, 0.1), 2)
    worst3 = 0.0
    for q_star in grid:
        b = pop.BoundaryPoint(contrast=2, q_star=float(q_star), delta=0.04)
        res = pop.mte_identified(figure1, pop.identity_g(), b)
        for t, rec in ((1, res.expected_baseline), (2, res.expected_contrast)):
            oracle = _oracle_margin_mean_quadrature(figure1, t, 2, float(q_star))
            worst3 = max(worst3, abs(rec - oracle))
    worst4 = 0.0
    for q_star in grid:
        b = pop.BoundaryPoint(contrast=3, q_star=float(q_star), delta=0.04)
        res = pop.mte_identified(k4, pop.identity_g(), b)
        for t, rec in ((1, res.expected_baseline), (3, res.expected_contrast)):
            oracle = _oracle_margin_mean_quadrature(k4, t, 3, float(q_star))
            worst4 = max(worst4, abs(rec - oracle))
    elapsed = time.time() - t0
    ok = worst3 <= 1e-3 and worst4 <= 2e-3 and elapsed < 300.0
    _report(
        3,
        "conditional-expectation recovery",
        ok,
        f"K=3 worst={worst3:.2e} (<=1e-3), K=4 worst={worst4:.2e} (<=2e-3), runtime={elapsed:.1f}s (<300s)",
    )


def test_criterion_4_trivial_dgp_exactness(trivial):
    grid = np.round(np.arange(0.1, 0.95, 0.1), 2)
    worst = 0.0
    for q_star in grid:
        b = pop.BoundaryPoint(contrast=2, q_star=float(q_star), delta=0.04)
        res = pop.mte_identified(trivial, pop.identity_g(), b)
        worst = max(worst, abs(res.mte - (2 * q_star - 1)))
    ok = worst <= 1e-3
    _report(4, "trivial DGP exactness", ok, f"max |mte - (2q*-1)| = {worst:.2e} (<=1e-3)")


def test_criterion_5_threshold_limits(figure1):
    t0 = time.time()
    rng = np.random.default_rng(424242)
    worst = 0.0
    for _ in range(5):
        z = figure1.instruments.sample(1, rng)[0]
        res = pop.identify_thresholds_by_limit(figure1, z)
        worst = max(worst, res.max_abs_error)
    elapsed = time.time() - t0
    ok = worst <= 1e-4 and elapsed < 60.0
    _report(5, "threshold limit identification", ok, f"worst |H_lim - Q| = {worst:.2e} (<=1e-4), runtime={elapsed:.1f}s (<60s)")


def test_criterion_6_margins_and_joint_cdf(all_bundled):
    worst_ks = 0.0
    worst_edge = 0.0
    for name, sc in all_bundled.items():
        mm = margins(sc)
        v = mm.sample_v(100_000, np.random.default_rng(271828))
        critical = 1.6276 / np.sqrt(v.shape[0])
        for col in range(v.shape[1]):
            worst_ks = max(worst_ks, kstest(v[:, col], "uniform").statistic / critical)
        ones = np.ones(len(sc.rivals))
        worst_edge = max(worst_edge, abs(joint_cdf_V(sc, ones) - 1.0))
        for pos in range(len(sc.rivals)):
            q = ones.copy()
            q[pos] = 0.37
            worst_edge = max(worst_edge, abs(joint_cdf_V(sc, q) - 0.37))
    ok = worst_ks < 1.0 and worst_edge <= 1e-6
    _report(
        6,
        "uniform margins / joint CDF sanity",
        ok,
        f"KS/critical max = {worst_ks:.3f} (<1), edge error = {worst_edge:.2e} (<=1e-6)",
    )


def test_criterion_7_leibniz_self_check(figure1):
    rng = np.random.default_rng(987)
    qs = rng.uniform(0.05, 0.95, 20)
    resid = pop.leibniz_residuals(figure1, pop.identity_g(), 2, qs)
    ok = float(resid.max()) <= 1e-4
    _report(7, "Leibniz derivative self-check", ok, f"max residual over 20 q = {resid.max():.2e} (<=1e-4)")


def test_criterion_8_finite_sample(figure1):
    H = pop.population_H(figure1)
    rng = np.random.default_rng(31)
    zgrid = figure1.instruments.sample(15, rng)
    truth = np.array([H(z) for z in zgrid])
    maes = []
    for n in (1_000, 10_000, 100_000):
        errs = []
        for seed in range(10):
            s = est.simulate(figure1, n, seed=300 + seed)
            hats = []
            for z in zgrid:
                try:
                    hats.append(est.estimate_H(s, z))
                except est.SparseRegionError:
                    hats.append(np.nan)
            hats = np.array(hats)
            keep = ~np.isnan(hats)
            errs.append(np.mean(np.abs(hats[keep] - truth[keep])))
        maes.append(float(np.mean(errs)))
    drift_ok = maes[0] > maes[1] > maes[2]

    b = pop.BoundaryPoint(contrast=2, q_star=0.5, delta=0.04)
    popv = pop.mte_identified(figure1, pop.identity_g(), b).mte
    estimates = []
    for seed in range(20):
        s = est.simulate(figure1, 200_000, seed=1000 + seed)
        rep = est.estimate_mte(s, figure1, pop.identity_g(), b, population_value=popv)
        estimates.append(rep.recovered)
    estimates = np.array(estimates)
    sd = float(estimates.std(ddof=1))
    mte_ok = abs(estimates[0] - popv) <= 3 * sd
    ok = drift_ok and mte_ok
    _report(
        8,
        "finite-sample drift / dispersion",
        ok,
        f"MAE over n: {[round(m, 4) for m in maes]} (strictly decreasing: {drift_ok}); "
        f"|mte_hat - pop| = {abs(estimates[0] - popv):.3f} vs 3*SD = {3 * sd:.3f}",
    )


def test_criterion_9_extension_unit_tests():
    # reject: sin(1/x) along x_n = 2/((2n+1)pi)
    seq = [2.0 / ((2 * n + 1) * np.pi) for n in range(1, 40)]
    rejected = False
    try:
        cauchy_limit(lambda x: np.sin(1.0 / x), seq, tol=1e-6)
    except CauchyContinuityError:
        rejected = True
    # accept: x^2 along bounded rationals (dyadic approximations of sqrt(2))
    target = np.sqrt(2.0)
    rats = [round(target * 2**n) / 2**n for n in range(2, 40)]
    res = cauchy_limit(lambda x: x * x, rats, tol=1e-6)
    accepted = abs(res.value - 2.0) < 1e-9
    ok = rejected and accepted
    _report(
        9,
        "Cauchy-continuity unit tests",
        ok,
        f"sin(1/x) rejected: {rejected}; x^2 limit on rational grid = {res.value:.12f} (accepted: {accepted})",
    )
