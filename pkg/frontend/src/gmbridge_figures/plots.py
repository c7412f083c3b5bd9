"""Chart builders over the gmbridge CSV contract.

This package deliberately knows nothing about the simulator: it consumes only
the documented CSV schemas (``figure1.csv``, ``occupation.csv``, ``ks.csv``)
and turns them into matplotlib files.  Schema violations raise
:class:`SchemaError` so the CLI can fail with a clean message.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["SchemaError", "read_csv_rows", "plot_figure1", "plot_convergence"]

FIGURE1_COLUMNS = [
    "delta",
    "bin",
    "lossBound",
    "lossBound_se",
    "mixtureBound",
    "mixtureBound_se",
]
OCCUPATION_COLUMNS = [
    "delta",
    "t",
    "occMean",
    "occSE",
    "localTimeRef",
    "identityGap",
    "identitySE",
    "paths",
]
KS_COLUMNS = ["delta", "t", "bin", "ks", "ksCritical1pct", "paths"]

# rasterizer metadata (creation date) is stripped so identical CSV input
# yields byte-identical images
_SAVE_KWARGS = {"dpi": 150, "metadata": {"Date": None}}


class SchemaError(ValueError):
    """Raised when a CSV file does not match its documented schema."""


def read_csv_rows(path: str, columns: list[str]) -> list[dict]:
    """Parse a gmbridge CSV, skipping comment lines, enforcing the schema."""
    try:
        with open(path, newline="") as f:
            lines = [ln for ln in f if not ln.startswith("#")]
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: empty file, expected header {columns}") from None
    if header != columns:
        raise SchemaError(f"{path}: header {header} does not match schema {columns}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(columns):
            raise SchemaError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(rec)}")
        rows.append(dict(zip(columns, rec)))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _floats(rows, key):
    try:
        return [float(r[key]) for r in rows]
    except ValueError as exc:
        raise SchemaError(f"non-numeric value in column {key!r}: {exc}") from exc


def plot_figure1(csv_path: str, out_path: str) -> str:
    """Errorbar chart of the mixture loss bound vs order size, per-bin series faint."""
    rows = read_csv_rows(csv_path, FIGURE1_COLUMNS)
    mixture = [r for r in rows if r["bin"] == "mixture"]
    if not mixture:
        raise SchemaError(f"{csv_path}: no mixture rows")
    deltas = _floats(mixture, "delta")
    bounds = _floats(mixture, "lossBound")
    ses = _floats(mixture, "lossBound_se")
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    bins = sorted({r["bin"] for r in rows} - {"mixture"})
    for b in bins:
        sub = [r for r in rows if r["bin"] == b]
        ax.errorbar(
            _floats(sub, "delta"),
            _floats(sub, "lossBound"),
            yerr=_floats(sub, "lossBound_se"),
            marker=".",
            alpha=0.35,
            label=f"bin {b}",
        )
    style = {"marker": "o", "capsize": 3, "color": "black", "label": "mixture"}
    if len(deltas) == 1:
        style["linestyle"] = "none"
    ax.errorbar(deltas, bounds, yerr=ses, **style)
    ax.set_xlabel(r"order size $\delta$")
    ax.set_ylabel("profit-loss bound")
    ax.set_title("Insider optimality-gap bound vs order size")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KWARGS)
    plt.close(fig)
    return out_path


def plot_convergence(csv_dir: str, out_dir: str) -> list[str]:
    """Occupation-time and KS-distance charts from a converge output directory."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    occ = read_csv_rows(os.path.join(csv_dir, "occupation.csv"), OCCUPATION_COLUMNS)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    deltas = _floats(occ, "delta")
    ax.errorbar(
        deltas,
        _floats(occ, "occMean"),
        yerr=_floats(occ, "occSE"),
        marker="o",
        label="scaled occupation at 0",
    )
    ax.axhline(
        _floats(occ, "localTimeRef")[0],
        linestyle="--",
        color="gray",
        label="Brownian local-time mean",
    )
    ax.set_xlabel(r"order size $\delta$")
    ax.set_ylabel("mean scaled occupation")
    ax.set_title("Occupation time vs Brownian local time")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "occupation.png")
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
    written.append(path)

    ks = read_csv_rows(os.path.join(csv_dir, "ks.csv"), KS_COLUMNS)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    times = sorted({r["t"] for r in ks}, key=float)
    for t in times:
        sub = [r for r in ks if r["t"] == t]
        ax.plot(_floats(sub, "delta"), _floats(sub, "ks"), marker="o", label=f"t={t}")
    ax.axhline(
        _floats(ks, "ksCritical1pct")[0],
        linestyle="--",
        color="gray",
        label="1% critical value",
    )
    ax.set_xlabel(r"order size $\delta$")
    ax.set_ylabel("two-sample KS distance")
    ax.set_title("Lattice demand vs continuous limit")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "ks.png")
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
    written.append(path)
    return written
