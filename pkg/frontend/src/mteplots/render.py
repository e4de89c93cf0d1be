"""Batch figure rendering for mtelab CSV artifacts.

Four figure kinds, one per producing artifact:

* ``support3d``       - the (v01, v02, v12) point cloud of the three-threshold
                        construction, a curved surface inside the unit cube;
* ``mte-curve``       - recovered vs oracle treatment-effect curve over q*,
                        with an absolute-error subplot;
* ``qte-curve``       - quantile treatment effect and both arm quantiles
                        over tau;
* ``threshold-trace`` - limit traces of the baseline choice probability
                        against their threshold targets.

Rendering is deterministic under the fixed styling profile: the same input
bytes produce the same output bytes.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["SchemaError", "FigureJob", "render", "main"]

STYLE_PROFILE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.family": "DejaVu Sans",
    "font.size": 9.0,
    "axes.titlesize": 10.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.facecolor": "white",
    "savefig.facecolor": "white",
    "path.simplify": False,
}

EXPECTED_COLUMNS = {
    "support3d": ["v01", "v02", "v12"],
    "mte-curve": ["qstar", "recovered_k", "recovered_j", "mte", "oracle_mte", "abs_error"],
    "qte-curve": ["tau", "qte", "quantile_k", "quantile_j"],
    "threshold-trace": ["point", "rival", "step", "H", "target"],
}


class SchemaError(ValueError):
    """Input CSV does not match the producing module's documented schema."""


@dataclass(frozen=True)
class FigureJob:
    kind: str
    source: str
    target: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EXPECTED_COLUMNS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {sorted(EXPECTED_COLUMNS)}")


def _read_table(path, kind):
    """Read a CSV with the kind's schema; header must start with the
    expected columns (extra trailing columns are kept by name)."""
    expected = EXPECTED_COLUMNS[kind]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(expected)}") from None
        if header[: len(expected)] != expected:
            raise SchemaError(
                f"{path}: header {','.join(header)!r} does not match the {kind} schema; "
                f"expected columns {','.join(expected)}"
            )
        rows = [[float(c) for c in row] for row in reader if row]
    data = np.asarray(rows, dtype=float).reshape(-1, len(header))
    return {name: data[:, idx] for idx, name in enumerate(header)}


def _finish(fig, target):
    fig.savefig(target, metadata={"Software": "mteplots"})
    plt.close(fig)


def _render_support3d(table, target, options):
    fig = plt.figure(figsize=(6.0, 5.4))
    ax = fig.add_subplot(projection="3d")
    ax.view_init(elev=18.0, azim=-56.0)
    if table["v01"].size:
        ax.scatter(
            table["v01"], table["v02"], table["v12"],
            s=options.get("marker_size", 1.0), c=table["v12"], cmap="viridis", linewidths=0, alpha=0.6,
        )
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_zlim(0, 1)
    ax.set_xlabel("v01")
    ax.set_ylabel("v02")
    ax.set_zlabel("v12")
    ax.set_title("Support of the three-threshold margins")
    _finish(fig, target)


def _render_mte_curve(table, target, options):
    fig, (top, bottom) = plt.subplots(
        2, 1, figsize=(6.0, 5.0), sharex=True, gridspec_kw={"height_ratios": [3, 1]}
    )
    if table["qstar"].size:
        top.plot(table["qstar"], table["mte"], "o-", color="#1f77b4", label="recovered")
        top.plot(table["qstar"], table["oracle_mte"], "s--", color="#d62728", label="oracle", markersize=4)
        bottom.semilogy(table["qstar"], np.maximum(table["abs_error"], 1e-16), "o-", color="#2ca02c")
    top.set_ylabel("treatment contrast")
    if table["qstar"].size:
        top.legend(loc="best")
    top.set_title("Recovered vs oracle marginal contrast")
    bottom.set_xlabel("q*")
    bottom.set_ylabel("|error|")
    fig.align_ylabels()
    _finish(fig, target)


def _render_qte_curve(table, target, options):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    if table["tau"].size:
        ax.plot(table["tau"], table["qte"], "o-", color="#1f77b4", label="QTE")
        ax.plot(table["tau"], table["quantile_k"], "s--", color="#7f7f7f", label="baseline quantile", markersize=4)
        ax.plot(table["tau"], table["quantile_j"], "d--", color="#bcbd22", label="contrast quantile", markersize=4)
    ax.set_xlabel("tau")
    ax.set_ylabel("outcome scale")
    ax.set_title("Quantile treatment effect")
    if table["tau"].size:
        ax.legend(loc="best")
    _finish(fig, target)


def _render_threshold_trace(table, target, options):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    if table["point"].size:
        combos = sorted({(int(p), int(r)) for p, r in zip(table["point"], table["rival"])})
        cmap = plt.get_cmap("tab10")
        for idx, (p, r) in enumerate(combos):
            sel = (table["point"] == p) & (table["rival"] == r)
            color = cmap(idx % 10)
            ax.plot(table["step"][sel], table["H"][sel], "o-", color=color, label=f"point {p}, rival {r}")
            ax.axhline(table["target"][sel][0], color=color, linestyle=":", linewidth=0.8)
    ax.set_xlabel("schedule step")
    ax.set_ylabel("baseline choice probability")
    ax.set_title("Threshold identification by limits")
    if table["point"].size:
        ax.legend(loc="best", fontsize=6)
    _finish(fig, target)


_RENDERERS = {
    "support3d": _render_support3d,
    "mte-curve": _render_mte_curve,
    "qte-curve": _render_qte_curve,
    "threshold-trace": _render_threshold_trace,
}


def render(job):
    """Render one figure job to its target path (read-only on inputs)."""
    table = _read_table(job.source, job.kind)
    with plt.rc_context(STYLE_PROFILE):
        _RENDERERS[job.kind](table, job.target, job.options)
    return job.target


def main(argv=None):
    parser = argparse.ArgumentParser(prog="render", description="Render mtelab CSV artifacts to figures")
    parser.add_argument("--kind", required=True, choices=sorted(EXPECTED_COLUMNS))
    parser.add_argument("--in", dest="source", required=True, help="input CSV path")
    parser.add_argument("--out", dest="target", required=True, help="output image path")
    parser.add_argument("--marker-size", type=float, default=None)
    args = parser.parse_args(argv)
    options = {}
    if args.marker_size is not None:
        options["marker_size"] = args.marker_size
    try:
        render(FigureJob(kind=args.kind, source=args.source, target=args.target, options=options))
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
