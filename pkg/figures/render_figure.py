#!/usr/bin/env python3
"""Render experiment figures from results CSV files.

Strictly a CSV consumer: reads the harness output schema (one row per
grid point x repetition), aggregates per x-value, and draws mean lines
with shaded spread bands. Never recomputes solver quantities.

Kinds:
  k_sweep      distance value vs projection dimension k
  n_sweep      estimation errors vs number of points n
  noise_ratio  projected/full distance ratio vs k, one series per noise level
  noise_error  ratio (or relative error when present) vs noise level sigma
  timing       wall time vs ambient dimension d, log-log axes
"""

import argparse
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

BANDS = ("minmax", "quantile_10_90_25_75")

# (x column, y column, series column or None) per figure kind
KIND_AXES = {
    "k_sweep": ("k", "prw_sq_value", "algorithm"),
    "n_sweep": ("n", "subspace_error", None),
    "noise_ratio": ("k", "ratio", "sigma"),
    "noise_error": ("sigma", "ratio", None),
    "timing": ("d", "wall_time_seconds", "algorithm"),
}


def aggregate(frame: pd.DataFrame, x: str, y: str) -> pd.DataFrame:
    """Per-x mean/min/max and type-7 (linear interpolation) quantiles."""
    grouped = frame.groupby(x)[y]
    out = grouped.agg(
        mean="mean",
        min="min",
        max="max",
        q10=lambda s: s.quantile(0.10, interpolation="linear"),
        q25=lambda s: s.quantile(0.25, interpolation="linear"),
        q75=lambda s: s.quantile(0.75, interpolation="linear"),
        q90=lambda s: s.quantile(0.90, interpolation="linear"),
    )
    return out.reset_index()


def _plot_series(ax, stats: pd.DataFrame, x: str, label: str, band: str, color):
    ax.plot(stats[x], stats["mean"], label=label, color=color, marker="o", ms=3)
    if band == "minmax":
        ax.fill_between(stats[x], stats["min"], stats["max"], alpha=0.2, color=color)
    else:
        ax.fill_between(stats[x], stats["q10"], stats["q90"], alpha=0.15, color=color)
        ax.fill_between(stats[x], stats["q25"], stats["q75"], alpha=0.3, color=color)


def load_results(path: str) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if frame.empty:
        raise ValueError(f"{path}: no data rows")
    return frame


def pick_y(frame: pd.DataFrame, kind: str, y: str) -> str:
    # sweeps report several error flavors; fall back to whichever is populated
    fallbacks = {
        "n_sweep": ("subspace_error", "rel_error"),
        "noise_error": ("rel_error", "ratio"),
    }
    for candidate in fallbacks.get(kind, (y,)):
        if candidate in frame.columns and frame[candidate].notna().any():
            return candidate
    return y


def render(input_path: str, kind: str, output_path: str, band: str = "minmax") -> None:
    if kind not in KIND_AXES:
        raise ValueError(f"unknown kind {kind!r}; choose from {sorted(KIND_AXES)}")
    if band not in BANDS:
        raise ValueError(f"unknown band {band!r}; choose from {BANDS}")
    frame = load_results(input_path)
    x, y, series = KIND_AXES[kind]
    y = pick_y(frame, kind, y)
    for column in (x, y):
        if column not in frame.columns:
            raise ValueError(f"missing column {column!r} in {input_path}")
    frame = frame[frame[y].notna()]
    if frame.empty:
        raise ValueError(f"column {y!r} has no values in {input_path}")

    fig, ax = plt.subplots(figsize=(6, 4))
    cycle = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    if series is not None and series in frame.columns and frame[series].nunique() > 1:
        for i, (name, group) in enumerate(frame.groupby(series)):
            stats = aggregate(group, x, y)
            _plot_series(ax, stats, x, f"{series}={name}", band, cycle[i % len(cycle)])
        ax.legend()
    else:
        _plot_series(ax, aggregate(frame, x, y), x, y, band, cycle[0])
    if kind == "timing":
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(output_path, metadata={"Software": None} if output_path.endswith(".png") else None)
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--input", required=True, help="results CSV path")
    parser.add_argument("--kind", required=True, choices=sorted(KIND_AXES))
    parser.add_argument("--output", required=True, help="PNG/SVG path")
    parser.add_argument("--band", default="minmax", choices=BANDS)
    args = parser.parse_args(argv)
    try:
        render(args.input, args.kind, args.output, args.band)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
