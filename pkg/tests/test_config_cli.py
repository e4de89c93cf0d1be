import json
import os

import numpy as np
import pytest

from mtelab import cli, config


def test_round_trip_identity():
    for name in config.bundled_names():
        cfg = config.bundled_config(name)
        again = config.parse_config(config.serialize_config(cfg))
        assert again == cfg
        assert config.fingerprint(again) == config.fingerprint(cfg)


def test_bundled_inventory():
    names = config.bundled_names()
    assert len(names) >= 4
    ks = {name: config.bundled_config(name)["treatments"] for name in names}
    assert 3 in ks.values() and 4 in ks.values()


def test_parse_rejects_bad_json():
    with pytest.raises(config.ConfigError):
        config.parse_config("{not json")


def test_parse_rejects_missing_keys():
    with pytest.raises(config.ConfigError):
        config.parse_config(json.dumps({"name": "x"}))


def test_parse_rejects_bad_law():
    data = config.bundled_config("figure1").data
    data["errors"]["components"][0] = {"law": "cauchy"}
    with pytest.raises(config.ConfigError):
        config.parse_config(json.dumps(data))


def test_parse_rejects_bad_expression_index():
    data = config.bundled_config("figure1").data
    data["utilities"] = ["-z[7]", "0", "-z[1]"]
    with pytest.raises(config.ConfigError):
        config.parse_config(json.dumps(data))


def test_parse_rejects_two_treatments():
    data = config.bundled_config("figure1").data
    data["treatments"] = 2
    data["errors"]["components"] = data["errors"]["components"][:2]
    data["utilities"] = data["utilities"][:2]
    data["outcomes"]["means"] = data["outcomes"]["means"][:2]
    data["outcomes"]["noise"] = data["outcomes"]["noise"][:2]
    data["exclusion"] = []
    with pytest.raises(config.ConfigError):
        config.parse_config(json.dumps(data))


def test_normal_scale_flag():
    data = config.bundled_config("figure1").data
    sc_var = config.build_scenario(config.parse_config(json.dumps(data)))
    data["normal_scale"] = "stddev"
    sc_std = config.build_scenario(config.parse_config(json.dumps(data)))
    # variance reading: sigma = sqrt(0.5); stddev reading: sigma = 0.5
    assert sc_var.errors.components[0].params[1] == pytest.approx(np.sqrt(0.5))
    assert sc_std.errors.components[0].params[1] == pytest.approx(0.5)


def _bundled_path(tmp_path, name):
    cfg = config.bundled_config(name)
    path = tmp_path / f"{name}.json"
    path.write_text(config.serialize_config(cfg))
    return str(path)


def test_cli_verify_command(tmp_path):
    out = str(tmp_path / "out")
    code = cli.run("verify", _bundled_path(tmp_path, "figure1"), out)
    assert code == 0
    report = json.loads(open(os.path.join(out, "verify_report.json")).read())
    assert report["ok"] and report["n_mismatches"] == 0
    manifest = json.loads(open(os.path.join(out, "run_manifest.json")).read())
    assert manifest["command"] == "verify"
    assert manifest["ok"] is True
    assert "config_hash" in manifest and "wall_time_s" in manifest
    assert "verify_report.json" in manifest["artifacts"]


def test_cli_figure1_reproducible(tmp_path):
    path = _bundled_path(tmp_path, "figure1")
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.run("figure1", path, out1) == 0
    assert cli.run("figure1", path, out2) == 0
    body1 = open(os.path.join(out1, "support_cloud.csv"), "rb").read()
    body2 = open(os.path.join(out2, "support_cloud.csv"), "rb").read()
    assert body1 == body2
    report = json.loads(open(os.path.join(out1, "violation_report.json")).read())
    assert report["lebesgue_null"] and report["cloud_volumes"][-1] < 0.2


def test_cli_identify_trivial(tmp_path):
    out = str(tmp_path / "out")
    assert cli.run("identify", _bundled_path(tmp_path, "trivial_outcomes"), out) == 0
    rows = open(os.path.join(out, "mte_curve.csv")).read().strip().split("\n")
    assert rows[0] == "qstar,recovered_k,recovered_j,mte,oracle_mte,abs_error"
    for line in rows[1:]:
        cells = line.split(",")
        q, mte = float(cells[0]), float(cells[3])
        assert abs(mte - (2 * q - 1)) <= 1e-3
        # >= 12 significant digits in the CSV payload
        assert len(cells[1].replace("-", "").replace(".", "").lstrip("0")) >= 12


def test_cli_unknown_command(tmp_path):
    out = str(tmp_path / "out")
    code = cli.run("explode", _bundled_path(tmp_path, "figure1"), out)
    assert code == 2
    err = json.loads(open(os.path.join(out, "error.json")).read())
    assert "unknown command" in err["message"]


def test_cli_invalid_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    out = str(tmp_path / "out")
    assert cli.run("verify", str(bad), out) == 2
    assert os.path.exists(os.path.join(out, "error.json"))


def test_cli_seed_override_changes_cloud(tmp_path):
    path = _bundled_path(tmp_path, "figure1")
    out1, out2 = str(tmp_path / "s1"), str(tmp_path / "s2")
    assert cli.run("figure1", path, out1, seed=1) == 0
    assert cli.run("figure1", path, out2, seed=2) == 0
    a = open(os.path.join(out1, "support_cloud.csv")).read()
    b = open(os.path.join(out2, "support_cloud.csv")).read()
    assert a != b


def test_cli_main_with_bundled_alias(tmp_path):
    out = str(tmp_path / "out")
    code = cli.main(["--command", "verify", "--config", "bundled:trivial_outcomes", "--out", out, "--seed", "5"])
    assert code == 0
    assert os.path.exists(os.path.join(out, "scenario_config.json"))


def test_cli_thresholds_command(tmp_path):
    out = str(tmp_path / "out")
    assert cli.run("thresholds", _bundled_path(tmp_path, "figure1"), out) == 0
    report = json.loads(open(os.path.join(out, "threshold_report.json")).read())
    assert report["ok"] and report["max_abs_error"] <= 1e-4
    header = open(os.path.join(out, "threshold_trace.csv")).readline().strip()
    assert header.startswith("point,rival,step,H,target")
