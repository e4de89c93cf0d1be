"""Experiment orchestration: one command, one config, one output directory.

Commands
--------
verify     draw-by-draw equivalence of the argmax choice and the hurdle
           representation
figure1    three-threshold support cloud and the occupied-volume report
identify   population MTE (and QTE when grids are configured) over the
           q* grid, against the oracle
thresholds limit-identification traces of the thresholds at random
           instrument points
estimate   finite-sample harness: simulated sample, kernel H, threshold
           and MTE estimates
all        everything above

Every run writes a manifest (config hash, versions, wall time) and returns a
nonzero exit status iff some module reported a failure. Output writes are
atomic (write-temp-then-rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, config as config_mod, degenerate_support, estimation, population, selection

__all__ = ["run", "main"]

_COMMANDS = ("verify", "figure1", "identify", "thresholds", "estimate", "all")


def _write_text(path, text):
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.15g}"


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(c) for c in row))
    _write_text(path, "\n".join(lines) + "\n")


def _cmd_verify(scenario, cfg, out, seed, threads):
    report = selection.verify_representation(scenario, n_draws=100_000, seed=seed)
    body = {
        "n_draws": report.n_draws,
        "n_mismatches": report.n_mismatches,
        "ties_skipped": report.ties_skipped,
        "ok": report.ok,
        "mismatches": report.mismatches,
    }
    _write_json(os.path.join(out, "verify_report.json"), body)
    return body, ["verify_report.json"], report.ok


def _cmd_figure1(scenario, cfg, out, seed, threads):
    if scenario.n_treatments != 3:
        raise config_mod.ConfigError("figure1 needs a K=3 scenario")
    points, summary = degenerate_support.support_cloud(scenario.errors, 100_000, seed)
    degenerate_support.write_support_cloud_csv(os.path.join(out, "support_cloud.csv"), points)
    report = degenerate_support.assumption32_violation_report(scenario.errors, 100_000, seed)
    body = report.to_dict()
    body["cloud_summary"] = {
        "n_points": summary.n_points,
        "max_residual": summary.max_residual,
        "occupied_fraction": summary.occupied_fraction,
        "epsilon": summary.epsilon,
    }
    _write_json(os.path.join(out, "violation_report.json"), body)
    ok = report.lebesgue_null and summary.max_residual < 1e-9
    return body, ["support_cloud.csv", "violation_report.json"], ok


def _default_contrast(scenario, cfg):
    data = cfg.data
    if "contrast" in data:
        return int(data["contrast"])
    return max(scenario.rivals)


def _cmd_identify(scenario, cfg, out, seed, threads):
    if scenario.outcomes is None:
        raise config_mod.ConfigError("identify needs an outcome model")
    contrast = _default_contrast(scenario, cfg)
    grids = cfg.data.get("grids", {})
    q_grid = grids.get("q_star") or [round(0.1 * i, 2) for i in range(1, 10)]
    rows = population.identification_curve(scenario, contrast, q_grid, seed=seed)
    _write_csv(
        os.path.join(out, "mte_curve.csv"),
        ["qstar", "recovered_k", "recovered_j", "mte", "oracle_mte", "abs_error"],
        [[r["qstar"], r["recovered_k"], r["recovered_j"], r["mte"], r["oracle_mte"], r["abs_error"]] for r in rows],
    )
    artifacts = ["mte_curve.csv"]
    max_err = max(r["abs_error"] for r in rows)
    body = {"contrast": contrast, "max_abs_error": max_err, "points": len(rows)}

    y_grid = grids.get("y") or []
    taus = grids.get("tau") or []
    if len(y_grid) >= 4 and taus:
        boundary = population.BoundaryPoint(contrast=contrast, q_star=0.5, delta=0.04)
        qte_rows = []
        for tau in taus:
            res = population.qte(scenario, boundary, float(tau), np.asarray(y_grid, dtype=float))
            qte_rows.append([res.tau, res.qte, res.quantile_baseline, res.quantile_contrast])
        _write_csv(
            os.path.join(out, "qte_curve.csv"),
            ["tau", "qte", "quantile_k", "quantile_j"],
            qte_rows,
        )
        artifacts.append("qte_curve.csv")
        body["qte_points"] = len(qte_rows)
    _write_json(os.path.join(out, "identify_report.json"), body)
    artifacts.append("identify_report.json")
    return body, artifacts, True


def _cmd_thresholds(scenario, cfg, out, seed, threads, n_points=5):
    rng = np.random.default_rng(seed)
    rows = []
    max_err = 0.0
    for pid in range(n_points):
        z = scenario.instruments.sample(1, rng)[0]
        res = population.identify_thresholds_by_limit(scenario, z)
        max_err = max(max_err, res.max_abs_error)
        for rival in res.rivals:
            for step, (zm, h) in enumerate(res.traces[rival]):
                rows.append([pid, rival, step, h, res.truths[rival]] + [c for c in zm])
    dim = scenario.instruments.dim
    _write_csv(
        os.path.join(out, "threshold_trace.csv"),
        ["point", "rival", "step", "H", "target"] + [f"z{i + 1}" for i in range(dim)],
        rows,
    )
    body = {"points": n_points, "max_abs_error": max_err, "ok": max_err <= 1e-4}
    _write_json(os.path.join(out, "threshold_report.json"), body)
    return body, ["threshold_trace.csv", "threshold_report.json"], body["ok"]


def _cmd_estimate(scenario, cfg, out, seed, threads):
    if scenario.outcomes is None:
        raise config_mod.ConfigError("estimate needs an outcome model")
    n = int(cfg.data.get("estimate", {}).get("n", 200_000))
    sample = estimation.simulate(scenario, n, seed, fingerprint=config_mod.fingerprint(cfg))
    estimation.write_sample(os.path.join(out, "sample.csv"), sample)

    contrast = _default_contrast(scenario, cfg)
    boundary = population.BoundaryPoint(contrast=contrast, q_star=0.5, delta=0.04)
    report = estimation.estimate_mte(sample, scenario, population.identity_g(), boundary)

    z_center = np.array([law.quantile(0.5) for law in scenario.instruments.coordinates])
    thr = estimation.estimate_thresholds(sample, scenario, z_center)
    truth = selection.thresholds(scenario, z_center)
    body = {
        "n": n,
        "mte": report.to_dict(),
        "thresholds": {
            str(i): {"estimate": thr.values[i], "truth": truth[i], "abs_error": abs(thr.values[i] - truth[i])}
            for i in scenario.rivals
        },
        "warnings": thr.warnings,
    }
    _write_json(os.path.join(out, "estimate_report.json"), body)
    return body, ["sample.csv", "sample.csv.json", "estimate_report.json"], True


_DISPATCH = {
    "verify": _cmd_verify,
    "figure1": _cmd_figure1,
    "identify": _cmd_identify,
    "thresholds": _cmd_thresholds,
    "estimate": _cmd_estimate,
}


def run(command, config_path, out_dir, seed=None, threads=None):
    """Execute one command; returns the process exit status (0 = success)."""
    t0 = time.time()
    os.makedirs(out_dir, exist_ok=True)
    try:
        if command not in _COMMANDS:
            raise config_mod.ConfigError(f"unknown command {command!r}; expected one of {', '.join(_COMMANDS)}")
        cfg = config_mod.load_config(config_path)
        scenario = config_mod.build_scenario(cfg)
        seed = int(seed) if seed is not None else int(cfg.data.get("seeds", {}).get("root", 0))
        threads = int(threads if threads is not None else os.environ.get("MTELAB_THREADS", "1"))
        names = _COMMANDS[:-1] if command == "all" else (command,)
        summaries = {}
        artifacts = []
        ok = True
        for name in names:
            body, files, good = _DISPATCH[name](scenario, cfg, out_dir, seed, threads)
            summaries[name] = body
            artifacts.extend(files)
            ok = ok and good
        manifest = {
            "command": command,
            "config_hash": config_mod.fingerprint(cfg),
            "scenario": scenario.name,
            "seed": seed,
            "threads": threads,
            "versions": {"mtelab": __version__, "numpy": np.__version__, "python": sys.version.split()[0]},
            "wall_time_s": round(time.time() - t0, 3),
            "artifacts": artifacts,
            "ok": ok,
        }
        _write_json(os.path.join(out_dir, "run_manifest.json"), manifest)
        return 0 if ok else 1
    except config_mod.ConfigError as exc:
        _write_json(os.path.join(out_dir, "error.json"), {"error": type(exc).__name__, "message": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numeric failures and the like
        _write_json(os.path.join(out_dir, "error.json"), {"error": type(exc).__name__, "message": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None):
    parser = argparse.ArgumentParser(prog="mtelab", description="Multinomial-choice MTE laboratory")
    parser.add_argument("--command", required=True, choices=_COMMANDS)
    parser.add_argument("--config", required=True, help="scenario config path, or bundled:<name>")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)

    config_path = args.config
    if config_path.startswith("bundled:"):
        cfg = config_mod.bundled_config(config_path.split(":", 1)[1])
        os.makedirs(args.out, exist_ok=True)
        config_path = os.path.join(args.out, "scenario_config.json")
        _write_text(config_path, config_mod.serialize_config(cfg))
    return run(args.command, config_path, args.out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
