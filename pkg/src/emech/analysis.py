"""State metrics and target-state constructors.

Fidelity is the pure-target overlap <psi|rho|psi> throughout; every
target built here is pure. The Wigner map uses the displaced-parity
form W = Tr[rho D(2 alpha) Pi] / pi with alpha = (x + i p) / sqrt(2),
evaluated over the whole grid at once by generalized-Laguerre
recurrences along the density-matrix diagonals. That convention makes
the map integrate to 1 over dx dp.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .hilbert import (LayoutError, ModeLayout, QState, TruncationWarning,
                      coherent_amplitudes, coherent_truncation_loss,
                      state_vector)


def fidelity(rho: QState, target: QState) -> float:
    """Overlap of a state with a pure target, in [0, 1]."""
    if rho.layout != target.layout:
        raise LayoutError("state and target live on different layouts")
    if target.kind != "vector":
        raise ValueError("target must be a pure state vector")
    psi = target.data
    if rho.kind == "vector":
        val = abs(np.vdot(psi, rho.data)) ** 2
    else:
        raw = complex(np.vdot(psi, rho.data @ psi))
        if abs(raw.imag) > 1e-10 * max(1.0, abs(raw.real)):
            raise ValueError(f"overlap has a non-real part: {raw!r}")
        val = raw.real
    return float(min(1.0, max(0.0, val)))


def number_distribution(state: QState, mode: int | str) -> np.ndarray:
    """Occupation probabilities of one mode, tracing out the rest."""
    from .hilbert import partial_trace
    reduced = partial_trace(state, (state.layout.index(mode),))
    return np.diag(reduced.to_density().data).real.copy()


# ---------------------------------------------------------------------------
# target states
# ---------------------------------------------------------------------------

def cat_state(dim: int, beta: complex, parity: str = "even",
              label: str = "mech") -> QState:
    """Normalized superposition of |beta> and |-beta> with fixed parity.

    Built by zeroing the opposite-parity Fock amplitudes, so the parity
    selection is exact rather than limited by cancellation error.
    """
    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    if parity == "odd" and beta == 0:
        raise ValueError("odd cat at beta = 0 has zero norm")
    safe = abs(beta) ** 2 + 6 * abs(beta) + 10
    loss = coherent_truncation_loss(dim, beta)
    if dim < safe or loss > 1e-6:
        warnings.warn(
            f"cat_state(dim={dim}, |beta|={abs(beta):.3g}) loses {loss:.2e} "
            f"probability to truncation (safe dim ~ {safe:.0f})",
            TruncationWarning, stacklevel=2)
    amps = coherent_amplitudes(dim, beta)
    keep = 0 if parity == "even" else 1
    amps[np.arange(dim) % 2 != keep] = 0.0
    nrm = np.linalg.norm(amps)
    if nrm == 0.0:
        raise ValueError("cat state has zero norm at this truncation")
    return state_vector(ModeLayout((dim,), (label,)), amps / nrm)


def ghz_target(beta: complex, layout: ModeLayout) -> QState:
    """Hybrid three-mode target: transmon and cavity share one excitation
    that tags the parity of a mechanical cat,

        (|0, 0> (|beta> + |-beta>) + |1, 1> (|beta> - |-beta>)) / 2.

    With unnormalized cat components the 1/2 prefactor normalizes the
    whole state exactly; the constructor checks this instead of assuming
    it, then renormalizes away the truncation residual.
    """
    if beta == 0:
        raise ValueError("beta = 0 leaves the odd component with zero norm")
    if layout.nmodes != 3:
        raise LayoutError("layout must carry exactly the three standard modes")
    idx = {name: layout.index(name) for name in ("transmon", "cavity", "mech")}
    mech_dim = layout.dims[idx["mech"]]
    plus = coherent_amplitudes(mech_dim, beta) + coherent_amplitudes(mech_dim, -beta)
    minus = coherent_amplitudes(mech_dim, beta) - coherent_amplitudes(mech_dim, -beta)
    loss = coherent_truncation_loss(mech_dim, beta)
    if loss > 1e-6:
        warnings.warn(
            f"ghz_target loses {loss:.2e} probability to mechanical truncation",
            TruncationWarning, stacklevel=2)
    if loss > 0.01:
        raise ValueError(
            f"mechanical dim {mech_dim} truncates {loss:.1%} of the cat "
            "branches; the result would not resemble the target")

    psi = np.zeros(layout.size, dtype=complex)
    occ = [0, 0, 0]
    for branch, mech_vec in ((0, plus), (1, minus)):
        occ[idx["transmon"]] = branch
        occ[idx["cavity"]] = branch
        for n, amp in enumerate(mech_vec):
            if amp == 0.0:
                continue
            occ[idx["mech"]] = n
            psi[layout.state_index(occ)] = 0.5 * amp
    nrm = float(np.linalg.norm(psi))
    if abs(nrm - 1.0) > 0.02:
        raise ValueError(f"constructed norm {nrm} is inconsistent with the "
                         "half prefactor")
    return state_vector(layout, psi / nrm)


# ---------------------------------------------------------------------------
# Wigner map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WignerMap:
    """values[i, j] = W(x_grid[i], p_grid[j]), unit integral over dx dp."""

    x_grid: np.ndarray
    p_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_grid", np.asarray(self.x_grid, dtype=float))
        object.__setattr__(self, "p_grid", np.asarray(self.p_grid, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (self.x_grid.size, self.p_grid.size):
            raise ValueError("values shape does not match the grids")

    def normalization(self) -> float:
        """Riemann-sum integral; near 1 when the grid covers the state.
        A degenerate single-point grid has zero measure, hence 0."""
        dx = float(self.x_grid[1] - self.x_grid[0]) if self.x_grid.size > 1 else 0.0
        dp = float(self.p_grid[1] - self.p_grid[0]) if self.p_grid.size > 1 else 0.0
        return float(self.values.sum() * dx * dp)


def wigner(rho: QState, x_grid, p_grid) -> WignerMap:
    """Wigner quasi-probability map of a single-mode state."""
    if rho.layout.nmodes != 1:
        raise LayoutError("wigner needs a single-mode state; partial_trace first")
    x = np.asarray(x_grid, dtype=float)
    p = np.asarray(p_grid, dtype=float)
    dm = rho.to_density().data
    d = dm.shape[0]

    # displaced parity: W = Tr[rho D(2 alpha) Pi] / pi, expanded along the
    # k-th diagonals of rho with scaled Laguerre recurrences so that the
    # Gaussian envelope never meets an overflowing polynomial
    big = np.sqrt(2.0) * (x[:, None] + 1j * p[None, :])
    absb = np.abs(big)
    xarg = absb ** 2
    values = np.zeros_like(xarg)
    unit = np.ones_like(big)
    nonzero = absb > 0.0
    for k in range(d):
        if k == 0:
            phase = unit
            logmag = -0.5 * xarg
        else:
            phase = np.ones_like(big)
            phase[nonzero] = (big[nonzero] / absb[nonzero]) ** k
            with np.errstate(divide="ignore"):
                logmag = -0.5 * xarg + k * np.log(absb) - 0.5 * math.lgamma(k + 1)
        # u_n = sqrt(n!/(n+k)!) |B|^k e^{-|B|^2/2} L_n^(k)(|B|^2)
        u_n = np.exp(logmag)
        u_prev = np.zeros_like(u_n)
        acc = np.zeros_like(big)
        weight = 1.0 if k == 0 else 2.0
        for n in range(d - k):
            coeff = (-1.0) ** n * dm[n, n + k]
            if coeff != 0.0:
                acc = acc + coeff * u_n
            r_next = math.sqrt((n + 1.0) / (n + 1.0 + k))
            r_cur = math.sqrt(n / (n + k)) if n > 0 else 1.0
            u_next = (r_next * (2.0 * n + k + 1.0 - xarg) * u_n
                      - r_next * r_cur * (n + k) * u_prev) / (n + 1.0)
            u_prev, u_n = u_n, u_next
        values += weight * (phase * acc).real
    return WignerMap(x, p, values / math.pi)


def write_wigner_csv(wmap: WignerMap, csv_path, sidecar_path=None) -> None:
    """Long-format x, p, w rows plus a JSON sidecar naming the convention."""
    with open(csv_path, "w") as fh:
        fh.write("x,p,w\n")
        for i, xv in enumerate(wmap.x_grid):
            for j, pv in enumerate(wmap.p_grid):
                fh.write(f"{xv:.17g},{pv:.17g},{wmap.values[i, j]:.17g}\n")
    meta = {
        "convention": "x = (b + b^dag)/sqrt(2); unit integral over dx dp",
        "x_grid": {"lo": float(wmap.x_grid[0]), "hi": float(wmap.x_grid[-1]),
                   "n": int(wmap.x_grid.size)},
        "p_grid": {"lo": float(wmap.p_grid[0]), "hi": float(wmap.p_grid[-1]),
                   "n": int(wmap.p_grid.size)},
        "normalization": wmap.normalization(),
        "min": float(wmap.values.min()),
        "max": float(wmap.values.max()),
    }
    if sidecar_path is None:
        sidecar_path = str(csv_path) + ".json"
    with open(sidecar_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
