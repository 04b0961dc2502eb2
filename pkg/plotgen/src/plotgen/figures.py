"""Figure construction from exported tables.

Each figure kind owns an exact CSV header; a file is accepted for a kind
only when the headers match, and the mismatch report spells out the
difference. Rendering is deterministic: fixed figure geometry, the Agg
backend, and no timestamps in the written files, so re-rendering the
same table reproduces the image byte for byte under a pinned toolchain.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

EXPECTED_HEADERS = {
    "cooling": ["delta_rad_s", "delta_over_omega_m", "n_final", "converged"],
    "fock": ["stage", "time_s", "fidelity", "n_mech"],
    "ghz": ["N_p", "beta", "P1_sim", "P1_theory", "fid_cat_odd", "fid_ghz"],
    "wigner": ["x", "p", "w"],
}

# columns that stay text; everything else parses as float
_TEXT_COLUMNS = {"stage"}


class SchemaError(Exception):
    """CSV header does not match the requested figure kind."""


@dataclass
class FigureSpec:
    """What to draw: input table, figure kind, labels and output file."""

    kind: str
    source: str
    out: str
    title: str | None = None
    xlabel: str | None = None
    ylabel: str | None = None
    dpi: int = 150
    extra_sources: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.kind not in EXPECTED_HEADERS:
            raise SchemaError(
                f"unknown figure kind {self.kind!r}; expected one of "
                f"{sorted(EXPECTED_HEADERS)}")
        for path in (self.source, *self.extra_sources):
            if not os.path.exists(path):
                raise FileNotFoundError(f"input table not found: {path}")


def _header_diff(kind: str, found: list[str]) -> str:
    expected = EXPECTED_HEADERS[kind]
    missing = [c for c in expected if c not in found]
    extra = [c for c in found if c not in expected]
    lines = [f"schema mismatch for kind {kind!r}:",
             f"  expected: {','.join(expected)}",
             f"  found:    {','.join(found)}"]
    if missing:
        lines.append(f"  missing:  {','.join(missing)}")
    if extra:
        lines.append(f"  extra:    {','.join(extra)}")
    return "\n".join(lines)


def load_table(kind: str, path) -> dict[str, np.ndarray | list[str]]:
    """Read a CSV whose header must match the kind; columns keyed by name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header") from None
        rows = [row for row in reader if row]
    if header != EXPECTED_HEADERS[kind]:
        raise SchemaError(_header_diff(kind, header))
    columns: dict[str, np.ndarray | list[str]] = {}
    for j, name in enumerate(header):
        cells = [row[j] for row in rows]
        if name in _TEXT_COLUMNS:
            columns[name] = cells
        else:
            columns[name] = np.array([float(c) for c in cells])
    return columns


def read_sidecar(path) -> dict:
    """Metadata JSON written next to the CSV, if present."""
    sidecar = str(path) + ".json"
    if not os.path.exists(sidecar):
        return {}
    with open(sidecar) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# per-kind builders
# ---------------------------------------------------------------------------

def _build_cooling(spec: FigureSpec, info: dict) -> tuple[plt.Figure, dict]:
    cols = load_table("cooling", spec.source)
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.semilogy(cols["delta_over_omega_m"], cols["n_final"], "o-",
                color="#1f5fa8", markersize=4, label="stationary solution")
    bad = cols["converged"] < 0.5
    if bad.any():
        ax.semilogy(cols["delta_over_omega_m"][bad], cols["n_final"][bad],
                    "o", mfc="none", color="#c03020", markersize=8,
                    label="not converged")
        ax.legend(frameon=False)
    ax.set_xlabel(spec.xlabel or r"drive detuning $\delta/\Omega_m$")
    ax.set_ylabel(spec.ylabel or "final phonon number")
    title = spec.title or info.get("preset") or ""
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.25)
    stats = {"n_final_min": float(cols["n_final"].min()),
             "delta_at_min": float(cols["delta_over_omega_m"][
                 int(np.argmin(cols["n_final"]))])}
    return fig, stats


def _build_fock(spec: FigureSpec, info: dict) -> tuple[plt.Figure, dict]:
    cols = load_table("fock", spec.source)
    idx = np.arange(len(cols["stage"]))
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.plot(idx, cols["fidelity"], "s-", color="#1f5fa8", label="fidelity")
    ax.set_ylabel(spec.ylabel or "fidelity to target Fock state")
    ax.set_ylim(0.0, 1.05)
    ax2 = ax.twinx()
    ax2.plot(idx, cols["n_mech"], "o--", color="#c07020",
             label="mean phonon number")
    ax2.set_ylabel("mean phonon number")
    ax.set_xticks(idx, cols["stage"], rotation=30, ha="right")
    ax.set_xlabel(spec.xlabel or "protocol stage")
    if spec.title or info.get("run"):
        ax.set_title(spec.title or f"Fock ladder ({info['run']})")
    handles = (ax.get_lines() + ax2.get_lines())
    ax.legend(handles, [h.get_label() for h in handles], frameon=False,
              loc="center left")
    stats = {"final_fidelity": float(cols["fidelity"][-1]),
             "stages": len(idx)}
    return fig, stats


def _build_ghz(spec: FigureSpec, info: dict) -> tuple[plt.Figure, dict]:
    cols = load_table("ghz", spec.source)
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    order = np.argsort(cols["N_p"])
    n_p = cols["N_p"][order]
    ax.plot(n_p, cols["P1_theory"][order], "-", color="#777777",
            label="coherent-overlap theory")
    ax.plot(n_p, cols["P1_sim"][order], "o", color="#1f5fa8",
            markersize=7, label="simulation")
    ax.axhline(0.5, color="#aaaaaa", linestyle=":", linewidth=1)
    ax.set_xticks(n_p)
    ax.set_xlabel(spec.xlabel or "number of pulses")
    ax.set_ylabel(spec.ylabel or "transmon excited-state probability")
    ax.set_ylim(0.0, 0.6)
    if spec.title or info.get("preset") or info.get("run"):
        ax.set_title(spec.title or info.get("preset") or info.get("run"))
    ax.legend(frameon=False, loc="lower right")
    stats = {"series": [ln.get_label() for ln in ax.get_lines()
                        if not ln.get_label().startswith("_")],
             "max_gap": float(np.abs(cols["P1_sim"]
                                     - cols["P1_theory"]).max())}
    return fig, stats


def _build_wigner(spec: FigureSpec, info: dict) -> tuple[plt.Figure, dict]:
    cols = load_table("wigner", spec.source)
    x = np.unique(cols["x"])
    p = np.unique(cols["p"])
    if x.size * p.size != len(cols["w"]):
        raise SchemaError(
            f"{spec.source}: {len(cols['w'])} rows do not fill a "
            f"{x.size} x {p.size} grid")
    w = np.asarray(cols["w"]).reshape(x.size, p.size)
    limit = float(np.abs(w).max()) or 1.0
    fig, ax = plt.subplots(figsize=(4.8, 4.0))
    mesh = ax.pcolormesh(x, p, w.T, cmap="RdBu_r", vmin=-limit, vmax=limit,
                         shading="nearest", rasterized=True)
    fig.colorbar(mesh, ax=ax, label=r"$W(x, p)$")
    ax.set_aspect("equal")
    ax.set_xlabel(spec.xlabel or r"$x$")
    ax.set_ylabel(spec.ylabel or r"$p$")
    if spec.title:
        ax.set_title(spec.title)
    stats = {"data_min": float(w.min()), "data_max": float(w.max()),
             "vmin": -limit, "vmax": limit,
             "normalization": info.get("normalization")}
    return fig, stats


_BUILDERS = {
    "cooling": _build_cooling,
    "fock": _build_fock,
    "ghz": _build_ghz,
    "wigner": _build_wigner,
}


def build_figure(spec: FigureSpec) -> tuple[plt.Figure, dict]:
    """Construct the figure and its summary stats without writing files."""
    info = read_sidecar(spec.source)
    fig, stats = _BUILDERS[spec.kind](spec, info)
    fig.tight_layout()
    return fig, stats


def _save_deterministic(fig: plt.Figure, out: str, dpi: int) -> None:
    ext = os.path.splitext(out)[1].lower()
    metadata: dict | None
    if ext == ".png":
        metadata = {"Software": None}
    elif ext == ".pdf":
        metadata = {"CreationDate": None, "Producer": None, "Creator": None}
    elif ext == ".svg":
        metadata = {"Date": None}
    else:
        metadata = None
    fig.savefig(out, dpi=dpi, metadata=metadata)


def render(spec: FigureSpec) -> str:
    """Write the image plus a small JSON sidecar of rendered quantities."""
    fig, stats = build_figure(spec)
    try:
        _save_deterministic(fig, spec.out, spec.dpi)
    finally:
        plt.close(fig)
    doc = {"kind": spec.kind,
           "source": os.path.basename(str(spec.source)),
           "out": os.path.basename(str(spec.out))}
    doc.update(stats)
    with open(str(spec.out) + ".json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return spec.out
