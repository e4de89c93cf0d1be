import numpy as np
import pytest
from scipy.stats import norm

from mtelab import laws
from mtelab import degenerate_support as ds


def figure1_errors():
    return laws.ErrorVectorLaw(
        (laws.gaussian(0, variance=0.5), laws.gaussian(1, variance=1), laws.gaussian(-1, variance=1))
    )


def iid_errors():
    return laws.ErrorVectorLaw((laws.gaussian(0, variance=1),) * 3)


def test_requires_three_treatments():
    errs = laws.ErrorVectorLaw((laws.gaussian(0, variance=1),) * 4)
    with pytest.raises(laws.LawError):
        ds.triple_margin_laws(errs)


def test_iid_zero_point_is_center():
    lsv = ds.ls_vector(iid_errors(), np.zeros(3))
    assert (lsv.v01, lsv.v02, lsv.v12) == pytest.approx((0.5, 0.5, 0.5), abs=1e-12)
    assert abs(lsv.residual) < 1e-9


def test_unit_shift_point():
    lsv = ds.ls_vector(iid_errors(), np.array([1.0, 0.0, 0.0]))
    assert lsv.v01 == pytest.approx(norm.cdf(1 / np.sqrt(2)), abs=1e-12)


def test_constraint_residuals_figure1():
    pts, summary = ds.support_cloud(figure1_errors(), 100_000, seed=20240801)
    assert summary.max_residual < 1e-9
    assert pts.shape == (100_000, 3)


def test_constraint_residuals_iid():
    pts, summary = ds.support_cloud(iid_errors(), 100_000, seed=6)
    assert summary.max_residual < 1e-9


def test_single_point_cloud():
    pts, summary = ds.support_cloud(figure1_errors(), 1, seed=1)
    assert summary.n_points == 1
    assert summary.max_residual < 1e-9


def test_cloud_rejects_empty():
    with pytest.raises(ValueError):
        ds.support_cloud(figure1_errors(), 0, seed=1)


def test_violation_report_surface_vs_control():
    rep = ds.assumption32_violation_report(figure1_errors(), 100_000, seed=20240801)
    assert rep.epsilons == (0.1, 0.05, 0.025)
    assert rep.decreasing
    assert rep.cloud_volumes[-1] < 0.2
    assert all(v > 0.9 for v in rep.control_volumes)
    assert rep.lebesgue_null


def test_constant_u_occupies_single_cell():
    u = np.tile([0.3, -0.2, 0.4], (500, 1))
    pts, summary = ds.support_cloud(figure1_errors(), 500, seed=0, u_draws=u)
    assert ds.occupied_fraction(pts, 0.05) == pytest.approx(1.0 / 20**3)


def test_occupancy_scales_like_surface():
    pts, _ = ds.support_cloud(figure1_errors(), 100_000, seed=77)
    fracs = [ds.occupied_fraction(pts, eps) for eps in (0.1, 0.05, 0.025)]
    assert fracs[0] > fracs[1] > fracs[2]
    # control cloud: same budget, full support, stays near one at coarse eps
    rng = np.random.default_rng(1)
    ctl = rng.uniform(size=(100_000, 3))
    assert ds.occupied_fraction(ctl, 0.1) > 0.99


def test_csv_schema(tmp_path):
    pts, _ = ds.support_cloud(figure1_errors(), 50, seed=3)
    path = tmp_path / "cloud.csv"
    ds.write_support_cloud_csv(path, pts)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "v01,v02,v12"
    assert len(lines) == 51
    first = lines[1].split(",")
    assert len(first) == 3
    # >= 12 significant digits survive the round trip
    np.testing.assert_allclose([float(c) for c in first], pts[0], rtol=1e-12)
