"""Render decay curves and envelope overlays from plapdecay CSV outputs.

Inputs are consumed purely through the documented CSV schemas:

    series:  t,mass,sup,flux_cum,absorbed_cum,dt
    theory:  t,R_tilde,mass_rate,sup_env_unit_mass,rstar_fujita_q1,
             rstar_fujita_power,rstar_alpha_eq_r,lambda,H,gamma
    summary: one row per run; the columns used here are label and fitted_C

All decay rates are power laws with at most logarithmic corrections, so
log-log axes are the only first-class mode.  Rendering never modifies its
inputs; the returned dictionary carries exactly the arrays that were drawn,
so callers can verify the figure against the source data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SERIES_HEADER = ("t", "mass", "sup", "flux_cum", "absorbed_cum", "dt")


class SchemaError(ValueError):
    """An input CSV does not match its documented schema."""


@dataclass(frozen=True)
class PlotSpec:
    """One figure: mass curves, optional envelope overlay, optional sup panel."""

    series_paths: tuple
    out_path: str
    theory_path: str | None = None
    summary_path: str | None = None
    title: str | None = None
    sup_panel: bool = False
    labels: tuple = field(default=())

    def __post_init__(self) -> None:
        if not self.series_paths:
            raise ValueError("at least one input series is required")
        if self.labels and len(self.labels) != len(self.series_paths):
            raise ValueError("labels must match the number of series")


def _read_csv_columns(path, required: tuple) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        rows = [row for row in reader if row]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(
            f"{path}: missing columns {missing}, found {list(header)}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    out = {}
    for name in required:
        i = header.index(name)
        out[name] = np.array([float(row[i]) for row in rows])
    return out


def read_series(path) -> dict:
    """Read one run series; enforces the exact series schema."""
    with open(path, newline="") as fh:
        header = tuple(next(csv.reader(fh), ()))
    if header != SERIES_HEADER:
        raise SchemaError(
            f"{path}: expected header {','.join(SERIES_HEADER)}, got "
            f"{','.join(header) if header else '(empty file)'}")
    return _read_csv_columns(path, SERIES_HEADER)


def read_theory(path) -> dict:
    return _read_csv_columns(path, ("t", "mass_rate"))


def read_fitted_constants(path) -> dict:
    """Map run label -> fitted envelope constant from a summary CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "label" not in reader.fieldnames \
                or "fitted_C" not in reader.fieldnames:
            raise SchemaError(
                f"{path}: summary needs 'label' and 'fitted_C' columns")
        out = {}
        for row in reader:
            try:
                out[row["label"]] = float(row["fitted_C"])
            except (TypeError, ValueError):
                continue  # failed rows carry empty statistics
    return out


def render(spec: PlotSpec) -> dict:
    """Draw the figure described by ``spec`` and write it to spec.out_path.

    Returns the plotted data: {'series': {label: (t, mass)}, 'sup': {...},
    'overlay': (t, values) or None, 'fitted_C': float or None}.
    """
    series = {}
    sups = {}
    for k, path in enumerate(spec.series_paths):
        label = spec.labels[k] if spec.labels else Path(path).stem
        data = read_series(path)
        keep = (data["t"] > 0) & (data["mass"] > 0)  # log axes
        series[label] = (data["t"][keep], data["mass"][keep])
        sups[label] = (data["t"][keep], data["sup"][keep])

    fitted_c = None
    overlay = None
    if spec.theory_path is not None:
        theory = read_theory(spec.theory_path)
        if spec.summary_path is not None:
            constants = read_fitted_constants(spec.summary_path)
            for label in series:
                c = constants.get(label)
                if c is not None and math.isfinite(c):
                    fitted_c = c
                    break
        scale = fitted_c if fitted_c is not None else 1.0
        overlay = (theory["t"], scale * theory["mass_rate"])

    ncols = 2 if spec.sup_panel else 1
    fig, axes = plt.subplots(1, ncols, figsize=(6.4 * ncols, 4.8),
                             squeeze=False)
    ax = axes[0][0]
    for label, (t, m) in series.items():
        ax.loglog(t, m, marker=".", label=label)
    if overlay is not None:
        suffix = " (fitted C)" if fitted_c is not None else ""
        ax.loglog(overlay[0], overlay[1], "k--",
                  label=f"mass envelope{suffix}")
    ax.set_xlabel("t")
    ax.set_ylabel("mass")
    ax.legend(fontsize="small")
    if spec.title:
        ax.set_title(spec.title)
    if spec.sup_panel:
        ax2 = axes[0][1]
        for label, (t, s) in sups.items():
            ax2.loglog(t, s, marker=".", label=label)
        ax2.set_xlabel("t")
        ax2.set_ylabel("sup")
        ax2.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)
    return {"series": series, "sup": sups, "overlay": overlay,
            "fitted_C": fitted_c}
