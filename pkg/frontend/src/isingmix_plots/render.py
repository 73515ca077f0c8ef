"""Figure rendering from the documented isingmix CSV schemas.

All numbers come from the CSV input; nothing is recomputed here. Matrix
entries in sweep files are row-major flattened with an _ij suffix; the
curves plot the leading (00) entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("variance_curve", "estimator_comparison", "lan_scatter")

_REQUIRED = {
    "variance_curve": ("beta", "inv_I0_00", "inv_Ibeta_00"),
    "estimator_comparison": ("beta", "inv_I0_00", "inv_Ibeta_00", "amle_var_00"),
    "lan_scatter": ("llr", "predicted"),
}


class SchemaError(ValueError):
    """Input CSV does not carry the documented header for its kind."""


@dataclass(frozen=True)
class PlotSpec:
    input_csv: str
    kind: str
    output_path: str
    xlabel: str | None = None
    ylabel: str | None = None
    title: str | None = None
    scale: bool = False  # normalize variance curves by their beta=0 value

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected {KINDS}")


@dataclass(frozen=True)
class RenderResult:
    kind: str
    output_path: str
    x: np.ndarray
    series: dict = field(default_factory=dict)
    marker_x: float | None = None


def read_table(path) -> tuple[list, np.ndarray]:
    """Read a metadata-block CSV: '#' comment lines, header row, numeric rows."""
    columns = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if columns is None:
                columns = line.split(",")
                continue
            rows.append([float(v) for v in line.split(",")])
    if columns is None or not rows:
        raise SchemaError(f"{path}: empty CSV (no header or no data rows)")
    return columns, np.asarray(rows)


def _columns_for(kind: str, columns: list, path) -> dict:
    out = {}
    for name in _REQUIRED[kind]:
        if name not in columns:
            raise SchemaError(f"{path}: missing column {name!r} required for {kind}")
        out[name] = columns.index(name)
    return out


def render(spec: PlotSpec) -> RenderResult:
    """Render the figure and return the plotted arrays for inspection."""
    columns, rows = read_table(spec.input_csv)
    idx = _columns_for(spec.kind, columns, spec.input_csv)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        if spec.kind == "lan_scatter":
            result = _render_lan_scatter(ax, spec, rows, idx)
        else:
            result = _render_variance(ax, spec, rows, idx)
        if spec.xlabel:
            ax.set_xlabel(spec.xlabel)
        if spec.ylabel:
            ax.set_ylabel(spec.ylabel)
        if spec.title:
            ax.set_title(spec.title)
        fig.tight_layout()
        fig.savefig(spec.output_path)
    finally:
        plt.close(fig)
    return result


def _render_variance(ax, spec: PlotSpec, rows, idx) -> RenderResult:
    order = np.argsort(rows[:, idx["beta"]], kind="stable")
    rows = rows[order]
    beta = rows[:, idx["beta"]]
    series = {}
    labels = {"inv_I0_00": "IID", "inv_Ibeta_00": "MF", "amle_var_00": "aMLE"}
    names = (("inv_Ibeta_00", "inv_I0_00") if spec.kind == "variance_curve"
             else ("inv_I0_00", "inv_Ibeta_00", "amle_var_00"))
    for name in names:
        y = rows[:, idx[name]].copy()
        if spec.scale:
            base = y[np.argmin(np.abs(beta))]
            if base != 0 and np.isfinite(base):
                y = y / base
        series[name] = y
        ax.plot(beta, y, marker="o", markersize=3, label=labels[name])
    ax.axvline(1.0, color="gray", linestyle="--", linewidth=1)
    ax.set_xlabel("dependence strength")
    ax.set_ylabel("scaled limiting variance" if spec.scale else "limiting variance")
    ax.legend()
    return RenderResult(kind=spec.kind, output_path=spec.output_path,
                        x=beta, series=series, marker_x=1.0)


def _render_lan_scatter(ax, spec: PlotSpec, rows, idx) -> RenderResult:
    pred = rows[:, idx["predicted"]]
    llr = rows[:, idx["llr"]]
    ax.scatter(pred, llr, s=6, alpha=0.5)
    lo = float(min(pred.min(), llr.min()))
    hi = float(max(pred.max(), llr.max()))
    ax.plot([lo, hi], [lo, hi], color="black", linewidth=1, label="unit slope")
    ax.set_xlabel("quadratic score expansion")
    ax.set_ylabel("exact log likelihood ratio")
    ax.legend()
    return RenderResult(kind=spec.kind, output_path=spec.output_path,
                        x=pred, series={"llr": llr}, marker_x=None)
