"""Open-system time evolution.

The master equation is integrated in vectorized form: with row-major
vec(rho), the generator is the sparse matrix

    L = -i (H x I - I x H^T) + sum_k rate_k (c x conj(c)
        - (c^dag c x I + I x (c^dag c)^T) / 2)

and d vec(rho)/dt = L vec(rho). Schedules are piecewise-constant
Hamiltonian segments interleaved with instantaneous unitaries; the
adaptive integrator is an embedded Dormand-Prince 5(4) pair with step
rejection, and a fixed-step RK4 is kept for cross-validation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hilbert import LayoutError, ModeLayout, QOperator, QState, density_state
from .model import SystemParams, derive
from . import hilbert


class IntegrationError(RuntimeError):
    """Step underflow, trace-guard violation, or a failed unitary check."""


@dataclass(frozen=True)
class CollapseSet:
    """Collapse channels as (operator, angular rate) pairs."""

    channels: tuple[tuple[QOperator, float], ...] = ()

    def __post_init__(self) -> None:
        chans = tuple((op, float(rate)) for op, rate in self.channels)
        object.__setattr__(self, "channels", chans)
        lay = None
        for op, rate in chans:
            if not (math.isfinite(rate) and rate >= 0.0):
                raise ValueError(f"collapse rate must be finite and >= 0, got {rate!r}")
            if lay is None:
                lay = op.layout
            elif op.layout != lay:
                raise LayoutError("collapse operators must share one layout")

    @property
    def layout(self) -> ModeLayout | None:
        return self.channels[0][0].layout if self.channels else None


def standard_collapses(params: SystemParams, layout: ModeLayout) -> CollapseSet:
    """The five channels of the standard model on a 3-mode layout:
    transmon decay and dephasing, mechanical thermal pair, cavity decay."""
    d = derive(params)
    a = hilbert.mode_lowering(layout, layout.index("transmon"))
    c = hilbert.mode_lowering(layout, layout.index("cavity"))
    b = hilbert.mode_lowering(layout, layout.index("mech"))
    channels = [
        (a, params.gamma_t),
        (hilbert.number_operator(layout, layout.index("transmon")), params.gamma_phi),
        (b, (d.n_bar + 1.0) * d.Gamma_m),
        (b.dag(), d.n_bar * d.Gamma_m),
        (c, params.kappa_c),
    ]
    return CollapseSet(tuple((op, r) for op, r in channels if r > 0.0))


@dataclass(frozen=True)
class IntegratorSettings:
    """Integration knobs.

    ``method`` is "adaptive-embedded" or "fixed-rk4"; for the fixed
    method ``max_step`` is the step size. ``record_every`` = 0 records
    only segment boundaries.
    """

    method: str = "adaptive-embedded"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    min_step: float = 1e-16
    record_every: float = 0.0

    def __post_init__(self) -> None:
        if self.method not in ("adaptive-embedded", "fixed-rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.rel_tol > 0.0 and self.abs_tol > 0.0):
            raise ValueError("tolerances must be positive")
        if not self.min_step < self.max_step:
            raise ValueError("min_step must be below max_step")
        if self.method == "fixed-rk4" and not math.isfinite(self.max_step):
            raise ValueError("fixed-rk4 needs a finite max_step")
        if self.record_every < 0.0:
            raise ValueError("record_every must be >= 0")


@dataclass(frozen=True)
class Segment:
    """Evolve under a constant Hamiltonian for ``duration`` seconds."""

    duration: float
    hamiltonian: QOperator

    def __post_init__(self) -> None:
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError(f"segment duration must be positive, got {self.duration!r}")


@dataclass(frozen=True)
class Pulse:
    """Instantaneous unitary (an idealized fast microwave pulse)."""

    unitary: QOperator
    label: str = ""


@dataclass
class Trajectory:
    """Sampled observables along one evolution.

    ``observables`` always contains "trace" and "purity" in addition to
    the caller's named operators. ``converged`` is set by
    evolve_to_stationarity and is None otherwise.
    """

    times: np.ndarray
    observables: dict[str, np.ndarray]
    final_state: QState
    converged: bool | None = None


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _csr(data) -> sp.csr_matrix:
    return data.tocsr() if sp.issparse(data) else sp.csr_matrix(data)


def build_liouvillian(h: QOperator, collapses: CollapseSet | None) -> sp.csr_matrix:
    """Sparse vectorized generator for constant H plus collapse channels."""
    hm = _csr(h.data).astype(complex)
    n = hm.shape[0]
    eye = sp.identity(n, format="csr", dtype=complex)
    lio = -1j * (sp.kron(hm, eye, format="csr") - sp.kron(eye, hm.T, format="csr"))
    if collapses is not None:
        if collapses.layout is not None and collapses.layout != h.layout:
            raise LayoutError("collapse operators live on a different layout")
        for op, rate in collapses.channels:
            if rate == 0.0:
                continue
            c = _csr(op.data).astype(complex)
            cdc = (c.conj().T @ c).tocsr()
            lio = lio + rate * (
                sp.kron(c, c.conj(), format="csr")
                - 0.5 * (sp.kron(cdc, eye, format="csr")
                         + sp.kron(eye, cdc.T, format="csr"))
            )
    return lio.tocsr()


def lindblad_rhs(h: QOperator, collapses: CollapseSet | None, rho) -> np.ndarray:
    """Matrix-form d(rho)/dt. The integrator itself uses the vectorized
    generator; this form exists for direct checks and tiny systems."""
    if isinstance(rho, QState):
        if rho.layout != h.layout:
            raise LayoutError("state layout differs from Hamiltonian layout")
        r = rho.to_density().data
    else:
        r = np.asarray(rho, dtype=complex)
        if r.shape != (h.layout.size, h.layout.size):
            raise LayoutError("density matrix shape does not match layout")
    hm = h.toarray()
    out = -1j * (hm @ r - r @ hm)
    if collapses is not None:
        if collapses.layout is not None and collapses.layout != h.layout:
            raise LayoutError("collapse operators live on a different layout")
        for op, rate in collapses.channels:
            if rate == 0.0:
                continue
            c = op.toarray()
            cr = c @ r
            cdag = c.conj().T
            out = out + rate * (cr @ cdag - 0.5 * (cdag @ cr + r @ (cdag @ c)))
    return out


# ---------------------------------------------------------------------------
# steppers
# ---------------------------------------------------------------------------

# Dormand-Prince 5(4) tableau; the last stage row equals the 5th-order
# weights, so the final stage of an accepted step seeds the next (FSAL).
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)
_DP_E = tuple(b5 - b4 for b5, b4 in zip(_DP_B5, _DP_B4))


class _AdaptiveStepper:
    """DP5(4) with mixed-tolerance error norm, rejection, and PI control."""

    def __init__(self, lio: sp.csr_matrix, settings: IntegratorSettings):
        self.lio = lio
        self.s = settings
        self.k1 = None          # FSAL cache
        self.err_prev = 1.0

    def _error_norm(self, err, v, vnew):
        sc = self.s.abs_tol + self.s.rel_tol * np.maximum(np.abs(v), np.abs(vnew))
        return math.sqrt(float(np.mean(np.abs(err / sc) ** 2)))

    def initial_step(self, v, limit):
        f = self.lio @ v
        scale = float(np.linalg.norm(f))
        if scale == 0.0:
            return limit
        dt = 0.01 * float(np.linalg.norm(v)) / scale
        return min(dt if dt > 0 else limit, limit)

    def step(self, v, dt):
        """One attempt; returns (accepted, vnew, err_norm)."""
        k0 = self.k1 if self.k1 is not None else self.lio @ v
        k = [k0]
        for i in range(1, 7):
            vi = v + dt * sum(a * kk for a, kk in zip(_DP_A[i], k))
            k.append(self.lio @ vi)
        vnew = v + dt * sum(b * kk for b, kk in zip(_DP_B5, k) if b != 0.0)
        err = dt * sum(e * kk for e, kk in zip(_DP_E, k) if e != 0.0)
        norm = self._error_norm(err, v, vnew)
        if math.isfinite(norm) and norm <= 1.0:
            self.k1 = k[6]  # FSAL: stage 7 was evaluated at vnew
            return True, vnew, norm
        self.k1 = k0  # v is unchanged, so its stage stays valid
        return False, v, (norm if math.isfinite(norm) else math.inf)

    def next_dt(self, dt, err_norm, accepted):
        if err_norm == 0.0:
            return dt * 5.0
        if not math.isfinite(err_norm):
            return dt * 0.2
        if accepted:
            fac = 0.9 * err_norm ** -0.14 * self.err_prev ** 0.08
            self.err_prev = err_norm
        else:
            fac = max(0.2, 0.9 * err_norm ** -0.2)
        return dt * min(5.0, max(0.2, fac))


def _rk4_step(lio, v, dt):
    k1 = lio @ v
    k2 = lio @ (v + 0.5 * dt * k1)
    k3 = lio @ (v + 0.5 * dt * k2)
    k4 = lio @ (v + dt * k3)
    return v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate_segment(lio, v, duration, settings, on_sample, t0):
    """Advance vec(rho) over one constant-generator stretch, invoking
    ``on_sample(t, v)`` at the record grid and at the segment end."""
    if settings.record_every > 0.0:
        nrec = max(1, math.ceil(duration / settings.record_every - 1e-9))
        targets = [min(duration, (i + 1) * settings.record_every) for i in range(nrec)]
        if targets[-1] >= duration - 1e-9 * settings.record_every:
            targets[-1] = duration
        else:
            targets.append(duration)
    else:
        targets = [duration]

    if settings.method == "fixed-rk4":
        t = 0.0
        for target in targets:
            while t < target - 1e-15 * duration:
                dt = min(settings.max_step, target - t)
                v = _rk4_step(lio, v, dt)
                t += dt
            on_sample(t0 + target, v)
        return v

    stepper = _AdaptiveStepper(lio, settings)
    t = 0.0
    dt = stepper.initial_step(v, min(settings.max_step, duration))
    for target in targets:
        while t < target - 1e-15 * duration:
            trial = min(dt, settings.max_step, target - t)
            accepted, vnew, err = stepper.step(v, trial)
            if accepted:
                v = vnew
                t += trial
                dt = stepper.next_dt(trial, err, True)
            else:
                dt = stepper.next_dt(trial, err, False)
                if dt < settings.min_step:
                    raise IntegrationError(
                        f"step underflow at t = {t0 + t:.3e} s: required step "
                        f"{dt:.3e} s is below min_step = {settings.min_step:.3e} s")
        on_sample(t0 + target, v)
    return v


# ---------------------------------------------------------------------------
# public evolution API
# ---------------------------------------------------------------------------

def _expect_vec(opdata, rho: np.ndarray) -> float:
    if sp.issparse(opdata):
        val = complex(opdata.multiply(rho.T).sum())
    else:
        val = complex(np.sum(opdata * rho.T))
    return val.real


def apply_unitary(state: QState, u: QOperator, tol: float = 1e-9) -> QState:
    """Apply an instantaneous unitary, verifying unitarity first."""
    if state.layout != u.layout:
        raise LayoutError("unitary layout differs from state layout")
    um = u.toarray()
    dev = np.abs(um.conj().T @ um - np.eye(um.shape[0])).max()
    if dev > tol:
        raise IntegrationError(f"operator is not unitary: max |U^dag U - 1| = {dev:.3e}")
    if state.kind == "vector":
        return QState(state.layout, "vector", um @ state.data)
    return QState(state.layout, "density", um @ state.data @ um.conj().T)


class _Recorder:
    def __init__(self, names, ops, trace_guard):
        self.names = names
        self.ops = ops
        self.guard = trace_guard
        self.times: list[float] = []
        self.series: dict[str, list[float]] = {n: [] for n in names}
        self.series["trace"] = []
        self.series["purity"] = []

    def __call__(self, t: float, v: np.ndarray) -> None:
        n = int(round(math.sqrt(v.size)))
        rho = v.reshape(n, n)
        tr = float(np.trace(rho).real)
        if not math.isfinite(tr) or abs(tr - 1.0) > self.guard:
            raise IntegrationError(
                f"trace left the guard band at t = {t:.6e} s: trace = {tr!r}, "
                f"guard = 1 +- {self.guard:g}; tighten tolerances or shrink max_step")
        self.times.append(t)
        for name, op in zip(self.names, self.ops):
            self.series[name].append(_expect_vec(op, rho))
        self.series["trace"].append(tr)
        # Tr rho^2 equals the squared Frobenius norm for Hermitian rho
        self.series["purity"].append(float(np.vdot(v, v).real))


def _final_state(layout: ModeLayout, v: np.ndarray, trace_guard: float) -> QState:
    n = layout.size
    rho = v.reshape(n, n)
    rho = 0.5 * (rho + rho.conj().T)
    eigs = np.linalg.eigvalsh(rho)
    low = float(eigs.min())
    if low < -1e-6:
        raise IntegrationError(
            f"final state lost positivity: min eigenvalue = {low:.3e}")
    if low < 0.0:
        warnings.warn(f"projecting tiny negative eigenvalues (min {low:.3e}) "
                      "out of the final state", RuntimeWarning, stacklevel=3)
        w, u = np.linalg.eigh(rho)
        w = np.clip(w, 0.0, None)
        rho = (u * w) @ u.conj().T
        rho = rho / np.trace(rho).real
    return density_state(layout, rho, trace_tol=max(trace_guard, 1e-9),
                         herm_tol=1e-9, eig_floor=-1e-6)


def evolve(rho0: QState, schedule: Sequence[Segment | Pulse],
           collapses: CollapseSet | None, settings: IntegratorSettings,
           observables: Mapping[str, QOperator] | None = None,
           trace_guard: float = 1e-6) -> Trajectory:
    """Run a schedule of constant-H segments and instantaneous pulses.

    Observables (plus trace and purity) are sampled at ``record_every``
    within segments, at every segment boundary, and around pulses. The
    trace leaving 1 +- trace_guard aborts the run.
    """
    layout = rho0.layout
    obs = dict(observables or {})
    for name, op in obs.items():
        if op.layout != layout:
            raise LayoutError(f"observable {name!r} lives on a different layout")
    rec = _Recorder(list(obs), [op.data for op in obs.values()], trace_guard)

    state = rho0.to_density()
    v = np.ascontiguousarray(state.data, dtype=complex).reshape(-1)
    rec(0.0, v)
    t = 0.0
    lio_cache: dict[int, sp.csr_matrix] = {}
    for item in schedule:
        if isinstance(item, Pulse):
            psi = QState(layout, "density", v.reshape(layout.size, layout.size))
            v = apply_unitary(psi, item.unitary).data.reshape(-1)
            rec(t, v)
            continue
        if not isinstance(item, Segment):
            raise TypeError(f"schedule items must be Segment or Pulse, got {type(item)!r}")
        if item.hamiltonian.layout != layout:
            raise LayoutError("segment Hamiltonian lives on a different layout")
        key = id(item.hamiltonian)
        if key not in lio_cache:
            lio_cache[key] = build_liouvillian(item.hamiltonian, collapses)
        v = _integrate_segment(lio_cache[key], v, item.duration, settings, rec, t)
        t += item.duration
    return Trajectory(
        times=np.asarray(rec.times),
        observables={k: np.asarray(s) for k, s in rec.series.items()},
        final_state=_final_state(layout, v, trace_guard),
    )


def evolve_to_stationarity(rho0: QState, h: QOperator,
                           collapses: CollapseSet | None,
                           observable, settings: IntegratorSettings,
                           window: float, eps: float,
                           t_max: float | None = None,
                           trace_guard: float = 1e-6) -> tuple[float, Trajectory]:
    """Integrate window by window until the tracked observable settles.

    Convergence: the window-averaged observable changes by less than
    ``eps`` relative to its current scale between consecutive windows.
    Non-convergence by ``t_max`` (default 200 windows) is flagged on the
    returned Trajectory, never raised. Returns the tail average.
    """
    if eps <= 0.0 or window <= 0.0:
        raise ValueError("window and eps must be positive")
    name, op = observable if isinstance(observable, tuple) else ("observable", observable)
    if op.layout != rho0.layout:
        raise LayoutError(f"observable {name!r} lives on a different layout")
    if t_max is None:
        t_max = 200.0 * window
    per_window = settings.record_every
    if per_window <= 0.0 or per_window > window / 2.0:
        per_window = window / 8.0
    inner = IntegratorSettings(
        method=settings.method, rel_tol=settings.rel_tol,
        abs_tol=settings.abs_tol, max_step=settings.max_step,
        min_step=settings.min_step, record_every=per_window)

    layout = rho0.layout
    rec = _Recorder([name], [op.data], trace_guard)
    state = rho0.to_density()
    v = np.ascontiguousarray(state.data, dtype=complex).reshape(-1)
    rec(0.0, v)
    lio = build_liouvillian(h, collapses)

    t = 0.0
    prev_mean = None
    first_scale = None
    converged = False
    value = rec.series[name][0]
    while t < t_max - 1e-12 * t_max:
        start = len(rec.times)
        v = _integrate_segment(lio, v, window, inner, rec, t)
        t += window
        cur = np.asarray(rec.series[name][start:])
        mean = float(cur.mean())
        if first_scale is None:
            first_scale = max(abs(rec.series[name][0]), abs(mean))
        value = mean
        if prev_mean is not None:
            scale = max(abs(mean), 1e-3 * first_scale, 1e-300)
            if abs(mean - prev_mean) / scale < eps:
                converged = True
                break
        prev_mean = mean
    traj = Trajectory(
        times=np.asarray(rec.times),
        observables={k: np.asarray(s) for k, s in rec.series.items()},
        final_state=_final_state(layout, v, trace_guard),
        converged=converged,
    )
    return value, traj


def steady_state(h: QOperator, collapses: CollapseSet) -> QState:
    """Null vector of the vectorized generator, normalized to unit trace.

    Solves L vec(rho) = 0 with the first row replaced by the trace
    constraint; valid when the stationary state is unique (all of this
    package's channel sets damp every mode). Much faster than waiting out
    the slowest decay on a sweep.
    """
    if not collapses.channels:
        raise ValueError("steady_state needs at least one collapse channel")
    lio = build_liouvillian(h, collapses).tolil()
    n = h.layout.size
    trace_row = np.zeros(n * n, dtype=complex)
    trace_row[:: n + 1] = 1.0
    lio[0] = trace_row
    rhs = np.zeros(n * n, dtype=complex)
    rhs[0] = 1.0
    v = spla.spsolve(lio.tocsr(), rhs)
    rho = v.reshape(n, n)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    eigs = np.linalg.eigvalsh(rho)
    if eigs.min() < -1e-6:
        raise IntegrationError(
            f"steady-state solve lost positivity: min eigenvalue = {eigs.min():.3e}")
    if eigs.min() < 0.0:
        w, u = np.linalg.eigh(rho)
        w = np.clip(w, 0.0, None)
        rho = (u * w) @ u.conj().T
        rho = rho / np.trace(rho).real
    return density_state(h.layout, rho, trace_tol=1e-9, herm_tol=1e-9,
                         eig_floor=-1e-6)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per sample: t_s, the named observables, trace, purity."""
    names = [k for k in traj.observables if k not in ("trace", "purity")]
    header = ["t_s", *names, "trace", "purity"]
    columns = [traj.times] + [traj.observables[k] for k in names] \
        + [traj.observables["trace"], traj.observables["purity"]]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def standard_observables(layout: ModeLayout) -> dict[str, QOperator]:
    """The default recorded set on a 3-mode layout: mechanical phonon
    number, transmon level-1 population, cavity photon number."""
    t_idx = layout.index("transmon")
    proj1 = np.zeros((layout.dims[t_idx], layout.dims[t_idx]))
    proj1[1, 1] = 1.0
    return {
        "n_mech": hilbert.number_operator(layout, layout.index("mech")),
        "p_transmon_1": hilbert.embed(layout, t_idx, proj1),
        "n_cavity": hilbert.number_operator(layout, layout.index("cavity")),
    }
