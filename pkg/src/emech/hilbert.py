"""Truncated multi-mode Fock-space algebra.

Conventions fixed here and used everywhere else in the package:

* mode ordering is the order of ``ModeLayout.labels``; composite indices are
  row-major (C order) over the mode dimensions,
* Hamiltonians and collapse operators are sparse (CSR), density matrices and
  state vectors are dense complex arrays,
* truncation is user-visible: canonical states renormalize after truncation
  and warn when the analytic tail mass exceeds ``TRUNCATION_WARN``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

TRUNCATION_WARN = 1e-6


class TruncationWarning(UserWarning):
    """A canonical state lost more than TRUNCATION_WARN probability to truncation."""


class LayoutError(ValueError):
    """Operator/state layout mismatch or malformed layout."""


@dataclass(frozen=True)
class ModeLayout:
    """Ordered truncated bosonic modes spanning a composite Hilbert space."""

    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        if len(self.dims) != len(self.labels):
            raise LayoutError("dims and labels must have equal length")
        if not self.dims:
            raise LayoutError("layout needs at least one mode")
        if any(d < 2 for d in self.dims):
            raise LayoutError(f"every mode dim must be >= 2, got {self.dims}")
        if len(set(self.labels)) != len(self.labels):
            raise LayoutError(f"mode labels must be unique, got {self.labels}")

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    @property
    def nmodes(self) -> int:
        return len(self.dims)

    def index(self, mode: int | str) -> int:
        """Resolve a mode given by position or label to its position."""
        if isinstance(mode, str):
            try:
                return self.labels.index(mode)
            except ValueError:
                raise LayoutError(f"no mode labeled {mode!r} in {self.labels}") from None
        i = int(mode)
        if not 0 <= i < self.nmodes:
            raise LayoutError(f"mode index {i} out of range for {self.nmodes} modes")
        return i

    def state_index(self, occupations: Sequence[int]) -> int:
        """Flat row-major index of the product basis state |n_0, n_1, ...>."""
        occ = tuple(int(n) for n in occupations)
        if len(occ) != self.nmodes:
            raise LayoutError(f"expected {self.nmodes} occupations, got {len(occ)}")
        for n, d, label in zip(occ, self.dims, self.labels):
            if not 0 <= n < d:
                raise LayoutError(f"occupation {n} out of range for mode "
                                  f"{label!r} with dim {d}")
        return int(np.ravel_multi_index(occ, self.dims))


def _as_csr(m) -> sp.csr_matrix:
    return m.tocsr() if sp.issparse(m) else sp.csr_matrix(np.asarray(m, dtype=complex))


@dataclass
class QOperator:
    """Complex operator tagged with its ModeLayout.

    ``data`` is CSR when ``storage == "sparse"`` (the default for everything
    built here) or a dense ndarray. Arithmetic keeps sparsity.
    """

    layout: ModeLayout
    data: object
    storage: str = "sparse"
    _herm: bool | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = self.layout.size
        if self.storage == "sparse":
            self.data = _as_csr(self.data).astype(complex)
        else:
            self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (n, n):
            raise LayoutError(f"operator shape {self.data.shape} != layout size {n}")

    # -- algebra ------------------------------------------------------------
    def _check(self, other: "QOperator"):
        if self.layout != other.layout:
            raise LayoutError("operator layouts differ")

    def __add__(self, other: "QOperator") -> "QOperator":
        self._check(other)
        return QOperator(self.layout, self.data + other.data, self.storage)

    def __sub__(self, other: "QOperator") -> "QOperator":
        self._check(other)
        return QOperator(self.layout, self.data - other.data, self.storage)

    def __neg__(self) -> "QOperator":
        return QOperator(self.layout, -self.data, self.storage)

    def __mul__(self, scalar: complex) -> "QOperator":
        return QOperator(self.layout, self.data * scalar, self.storage)

    __rmul__ = __mul__

    def __matmul__(self, other: "QOperator") -> "QOperator":
        self._check(other)
        return QOperator(self.layout, self.data @ other.data, self.storage)

    def dag(self) -> "QOperator":
        return QOperator(self.layout, self.data.conj().T, self.storage)

    # -- queries ------------------------------------------------------------
    def toarray(self) -> np.ndarray:
        return self.data.toarray() if sp.issparse(self.data) else np.asarray(self.data)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        if self._herm is None:
            d = self.data - self.data.conj().T
            dev = abs(d).max() if sp.issparse(d) and d.nnz else (np.abs(d).max() if not sp.issparse(d) else 0.0)
            scale = max(1.0, abs(self.data).max() if sp.issparse(self.data) else np.abs(self.data).max())
            self._herm = bool(dev <= tol * scale)
        return self._herm


@dataclass
class QState:
    """Normalized vector or density matrix over a ModeLayout."""

    layout: ModeLayout
    kind: str  # "vector" | "density"
    data: np.ndarray

    def __post_init__(self):
        n = self.layout.size
        self.data = np.asarray(self.data, dtype=complex)
        if self.kind == "vector":
            if self.data.shape != (n,):
                raise LayoutError(f"vector shape {self.data.shape} != ({n},)")
        elif self.kind == "density":
            if self.data.shape != (n, n):
                raise LayoutError(f"density shape {self.data.shape} != ({n},{n})")
        else:
            raise ValueError(f"unknown state kind {self.kind!r}")

    # -- scalars ------------------------------------------------------------
    def norm(self) -> float:
        if self.kind == "vector":
            return float(np.linalg.norm(self.data))
        return float(np.trace(self.data).real)

    def purity(self) -> float:
        if self.kind == "vector":
            return 1.0
        return float(np.einsum("ij,ji->", self.data, self.data).real)

    def to_density(self) -> "QState":
        if self.kind == "density":
            return self
        return QState(self.layout, "density", np.outer(self.data, self.data.conj()))


def state_vector(layout: ModeLayout, data, *, norm_tol: float = 1e-10) -> QState:
    """Checked vector-state constructor (unit norm within norm_tol)."""
    v = np.asarray(data, dtype=complex)
    st = QState(layout, "vector", v)
    if abs(st.norm() - 1.0) > norm_tol:
        raise ValueError(f"state vector norm {st.norm()} deviates from 1 by > {norm_tol}")
    return st


def density_state(layout: ModeLayout, data, *, trace_tol: float = 1e-10,
                  herm_tol: float = 1e-12, eig_floor: float = -1e-8) -> QState:
    """Checked density-matrix constructor (Hermitian, unit trace, near-positive)."""
    m = np.asarray(data, dtype=complex)
    st = QState(layout, "density", m)
    if np.abs(m - m.conj().T).max() > herm_tol * max(1.0, np.abs(m).max()):
        raise ValueError("density matrix is not Hermitian within tolerance")
    if abs(st.norm() - 1.0) > trace_tol:
        raise ValueError(f"density trace {st.norm()} deviates from 1 by > {trace_tol}")
    evals = np.linalg.eigvalsh((m + m.conj().T) / 2)
    if evals.min() < eig_floor:
        raise ValueError(f"density matrix min eigenvalue {evals.min():.3e} < {eig_floor:.1e}")
    return st


# ---------------------------------------------------------------------------
# operator construction
# ---------------------------------------------------------------------------

def destroy_matrix(dim: int) -> np.ndarray:
    """Single-mode lowering operator, entry (n-1, n) = sqrt(n)."""
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


def embed(layout: ModeLayout, mode: int | str, local) -> QOperator:
    """Embed a single-mode operator as I x ... x M x ... x I (sparse)."""
    i = layout.index(mode)
    m = sp.csr_matrix(np.asarray(local, dtype=complex)) if not sp.issparse(local) else local
    if m.shape != (layout.dims[i], layout.dims[i]):
        raise LayoutError(f"local operator shape {m.shape} != mode dim {layout.dims[i]}")
    out = sp.identity(1, dtype=complex, format="csr")
    for j, d in enumerate(layout.dims):
        block = m if j == i else sp.identity(d, dtype=complex, format="csr")
        out = sp.kron(out, block, format="csr")
    return QOperator(layout, out)


def mode_lowering(layout: ModeLayout, mode: int | str) -> QOperator:
    """Annihilation operator of one mode embedded in the full space."""
    i = layout.index(mode)
    return embed(layout, i, destroy_matrix(layout.dims[i]))


def mode_raising(layout: ModeLayout, mode: int | str) -> QOperator:
    return mode_lowering(layout, mode).dag()


def number_operator(layout: ModeLayout, mode: int | str) -> QOperator:
    i = layout.index(mode)
    return embed(layout, i, np.diag(np.arange(layout.dims[i], dtype=float)))


def identity_operator(layout: ModeLayout) -> QOperator:
    return QOperator(layout, sp.identity(layout.size, dtype=complex, format="csr"))


# ---------------------------------------------------------------------------
# canonical states
# ---------------------------------------------------------------------------

def fock_state(layout: ModeLayout, occupations) -> QState:
    """Unit basis vector |n1, n2, ...> at the row-major composite index."""
    v = np.zeros(layout.size, dtype=complex)
    v[layout.state_index(occupations)] = 1.0
    return state_vector(layout, v)


def vacuum_state(layout: ModeLayout) -> QState:
    return fock_state(layout, (0,) * layout.nmodes)


def coherent_amplitudes(dim: int, beta: complex) -> np.ndarray:
    """Unnormalized truncated coherent amplitudes e^{-|b|^2/2} b^n / sqrt(n!)."""
    if beta == 0:
        amps = np.zeros(dim, dtype=complex)
        amps[0] = 1.0
        return amps
    n = np.arange(dim)
    # log space keeps n! under control for large |beta| grids
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, dim)))))
    logmag = -abs(beta) ** 2 / 2 + n * np.log(abs(beta)) - 0.5 * log_fact
    phase = np.exp(1j * n * np.angle(beta))
    return np.exp(logmag) * phase


def coherent_truncation_loss(dim: int, beta: complex) -> float:
    """Probability mass of |beta> above the truncation, from the amplitudes."""
    return float(max(0.0, 1.0 - np.sum(np.abs(coherent_amplitudes(dim, beta)) ** 2)))


def coherent_state(dim: int, beta: complex, label: str = "mode") -> QState:
    """Truncated coherent state on a fresh single-mode layout, renormalized."""
    safe = abs(beta) ** 2 + 6 * abs(beta) + 10
    loss = coherent_truncation_loss(dim, beta)
    if dim < safe or loss > TRUNCATION_WARN:
        warnings.warn(
            f"coherent_state(dim={dim}, |beta|={abs(beta):.3g}) loses {loss:.2e} "
            f"probability to truncation (safe dim ~ {safe:.0f})",
            TruncationWarning, stacklevel=2)
    amps = coherent_amplitudes(dim, beta)
    amps = amps / np.linalg.norm(amps)
    return state_vector(ModeLayout((dim,), (label,)), amps)


def thermal_truncation_loss(dim: int, n_bar: float) -> float:
    """Tail mass of the truncated Bose-Einstein distribution."""
    if n_bar <= 0:
        return 0.0
    q = n_bar / (1.0 + n_bar)
    p = (1 - q) * q ** np.arange(dim)
    return float(max(0.0, 1.0 - p.sum()))


def thermal_state(dim: int, n_bar: float, label: str = "mode") -> QState:
    """Truncated thermal (Bose-Einstein) density matrix, renormalized."""
    if n_bar < 0:
        raise ValueError("n_bar must be >= 0")
    loss = thermal_truncation_loss(dim, n_bar)
    if loss > TRUNCATION_WARN:
        warnings.warn(
            f"thermal_state(dim={dim}, n_bar={n_bar:.3g}) loses {loss:.2e} "
            "probability to truncation", TruncationWarning, stacklevel=2)
    if n_bar == 0:
        p = np.zeros(dim)
        p[0] = 1.0
    else:
        q = n_bar / (1.0 + n_bar)
        p = (1 - q) * q ** np.arange(dim)
        p = p / p.sum()
    return density_state(ModeLayout((dim,), (label,)), np.diag(p).astype(complex))


def tensor_states(*states: QState) -> QState:
    """Tensor product of states; labels must stay unique across factors."""
    dims: list[int] = []
    labels: list[str] = []
    for st in states:
        dims.extend(st.layout.dims)
        labels.extend(st.layout.labels)
    layout = ModeLayout(tuple(dims), tuple(labels))
    if all(st.kind == "vector" for st in states):
        v = states[0].data
        for st in states[1:]:
            v = np.kron(v, st.data)
        return QState(layout, "vector", v)
    mats = [st.to_density().data for st in states]
    m = mats[0]
    for x in mats[1:]:
        m = np.kron(m, x)
    return QState(layout, "density", m)


# ---------------------------------------------------------------------------
# measurements
# ---------------------------------------------------------------------------

def expectation(op: QOperator, state: QState) -> complex:
    """<psi|O|psi> or Tr(O rho); asserts a small imaginary part for Hermitian O."""
    if op.layout != state.layout:
        raise LayoutError("operator and state layouts differ")
    if state.kind == "vector":
        val = complex(np.vdot(state.data, op.data @ state.data))
    else:
        if sp.issparse(op.data):
            val = complex(op.data.multiply(state.data.T).sum())
        else:
            val = complex(np.einsum("ij,ji->", op.data, state.data))
    if op.is_hermitian():
        assert abs(val.imag) < 1e-9 * max(1.0, abs(val)), \
            f"Hermitian expectation has imaginary part {val.imag:.3e}"
    return val


def partial_trace(state: QState, keep) -> QState:
    """Reduced density matrix over the kept modes (by index or label)."""
    keep_idx = sorted({state.layout.index(k) for k in (keep if isinstance(keep, (list, tuple, set)) else [keep])})
    if not keep_idx:
        raise LayoutError("keep set must be non-empty")
    rho = state.to_density().data
    k = state.layout.nmodes
    dims = state.layout.dims
    t = rho.reshape(dims + dims)
    # kept modes keep distinct row/col letters, traced modes share one letter
    letters = "abcdefghijklmnopqrstuvwx"
    row = [letters[i] for i in range(k)]
    col = [letters[i] if i not in keep_idx else letters[i + k] for i in range(k)]
    out_row = "".join(letters[i] for i in keep_idx)
    out_col = "".join(letters[i + k] for i in keep_idx)
    sub = "".join(row) + "".join(col) + "->" + out_row + out_col
    red = np.einsum(sub, t)
    newdim = math.prod(dims[i] for i in keep_idx)
    red = red.reshape(newdim, newdim)
    layout = ModeLayout(tuple(dims[i] for i in keep_idx),
                        tuple(state.layout.labels[i] for i in keep_idx))
    return QState(layout, "density", red)


# ---------------------------------------------------------------------------
# serialization (CLI --save-state / --load-state)
# ---------------------------------------------------------------------------

def state_to_dict(state: QState) -> dict:
    flat = state.data.reshape(-1)  # row-major
    return {
        "labels": list(state.layout.labels),
        "dims": list(state.layout.dims),
        "kind": state.kind,
        "re": flat.real.tolist(),
        "im": flat.imag.tolist(),
    }


def state_from_dict(d: dict) -> QState:
    layout = ModeLayout(tuple(d["dims"]), tuple(d["labels"]))
    flat = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
    n = layout.size
    data = flat if d["kind"] == "vector" else flat.reshape(n, n)
    return QState(layout, d["kind"], data)


def save_state(state: QState, path) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_dict(state), fh)


def load_state(path) -> QState:
    with open(path) as fh:
        return state_from_dict(json.load(fh))
