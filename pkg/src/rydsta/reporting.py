"""File writers and figures for command-line runs.

CSV files start with ``#`` lines echoing the resolved scenario and use
``%.12e`` numbers.  JSON files carry the same echo under a ``scenario`` key.
Figures are rendered with the Agg backend and written without timestamps
so that identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PNG_METADATA = {"Software": None}


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


def write_csv(path, header: Sequence[str], columns: Mapping[str, Sequence]) -> Path:
    path = Path(path)
    names = list(columns)
    rows = zip(*(columns[k] for k in names))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_table_csv(path, header: Sequence[str], row_labels: Sequence[str], col_labels: Sequence[str],
                    table: np.ndarray, corner: str = "out\\in") -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([corner] + list(col_labels))
        for lab, row in zip(row_labels, table):
            w.writerow([lab] + [_fmt(float(v)) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json(path, scenario: Mapping[str, str], payload: Mapping) -> Path:
    path = Path(path)
    doc = {"scenario": dict(scenario)}
    doc.update(_jsonable(dict(payload)))
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def _save(fig, path, header: Sequence[str]):
    meta = dict(PNG_METADATA)
    meta["Description"] = "\n".join(header)
    fig.savefig(path, dpi=120, metadata=meta)
    plt.close(fig)
    return Path(path)


def plot_waveforms(path, header, t, base_p, base_s, dressed_p, dressed_s, tau: float) -> Path:
    """Base (dashed) and dressed (solid) pump/Stokes envelopes against ``t / tau``."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.asarray(t) / tau
    scale = float(np.max(np.hypot(base_p, base_s)))
    ax.plot(x, np.asarray(base_p) / scale, "C0--", label="pump, base")
    ax.plot(x, np.asarray(base_s) / scale, "C1--", label="Stokes, base")
    ax.plot(x, np.asarray(dressed_p) / scale, "C0-", label="pump, dressed")
    ax.plot(x, np.asarray(dressed_s) / scale, "C1-", label="Stokes, dressed")
    ax.set_xlabel("t / tau")
    ax.set_ylabel("amplitude / base rms")
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    return _save(fig, path, header)


def plot_populations(path, header, t, curves: Mapping[str, np.ndarray], time_unit: float = 1e-6,
                     unit_label: str = "us", boundaries: Sequence[float] = ()) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.asarray(t) / time_unit
    for label, y in curves.items():
        ax.plot(x, y, label=label)
    for b in boundaries:
        ax.axvline(b / time_unit, color="0.7", lw=0.8, ls=":")
    ax.set_xlabel(f"t ({unit_label})")
    ax.set_ylabel("population")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8, frameon=False, ncol=2)
    fig.tight_layout()
    return _save(fig, path, header)


def plot_truth_table(path, header, labels: Sequence[str], table: np.ndarray, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(table, vmin=0, vmax=1, cmap="viridis", origin="upper")
    ax.set_xticks(range(len(labels)), labels, rotation=90, fontsize=7)
    ax.set_yticks(range(len(labels)), labels, fontsize=7)
    ax.set_xlabel("input")
    ax.set_ylabel("output")
    if title:
        ax.set_title(title, fontsize=9)
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            if table[i, j] > 0.05:
                ax.text(j, i, f"{table[i, j]:.3f}", ha="center", va="center", fontsize=6, color="w")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    return _save(fig, path, header)


def plot_sphere_paths(path, header, paths: Mapping[str, np.ndarray]) -> Path:
    """Two projections of ``(a, b, c)`` paths on the unit sphere."""
    fig, axes = plt.subplots(1, 2, figsize=(7, 3.5))
    phi = np.linspace(0, np.pi / 2, 100)
    for ax, (i, j, xl, yl) in zip(axes, [(0, 2, "a (In)", "c (Out)"), (0, 1, "a (In)", "b (R)")]):
        ax.plot(np.cos(phi), np.sin(phi), color="0.8", lw=0.8)
        for label, coords in paths.items():
            ax.plot(coords[:, i], coords[:, j], label=label)
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        ax.set_aspect("equal")
        ax.set_xlim(-0.02, 1.05)
        ax.set_ylim(-0.02, 1.05)
    axes[0].legend(fontsize=8, frameon=False)
    fig.tight_layout()
    return _save(fig, path, header)


def plot_sweep(path, header, x, y, xlabel: str, series: Sequence[str] | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        ax.plot(x, y, "o-")
    else:
        for k, col in enumerate(y.T):
            ax.plot(x, col, "o-", label=series[k] if series else None)
        ax.legend(fontsize=8, frameon=False)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("average fidelity")
    fig.tight_layout()
    return _save(fig, path, header)
