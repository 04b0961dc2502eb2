"""Cooling and state-preparation protocols built on the model layer.

Three experiments live here. A sideband-cooling sweep drives one
polariton branch below its resonance and reads out the stationary
phonon number. A swap protocol climbs the mechanical Fock ladder by
alternating polariton pulses with resonant three-mode transfer. A
displacement-train protocol entangles the transmon with a mechanical
cat state and then maps one superposition branch onto a single cavity
photon.

No function here integrates at microwave carrier frequencies. Cooling
runs in the frame rotating at the drive. The Fock swap rotates the
transmon and cavity at the cavity frequency, which leaves the polariton
splitting intact. The displacement train rotates the transmon at its
own 0-1 frequency so only the mechanical frequency and the couplings
remain. Pulses are instantaneous unitaries, and the deterministic frame
phases they would track in the lab are absorbed into the pulse and
correction definitions, the same bookkeeping a virtual-Z pass performs
on hardware.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from . import hilbert
from .analysis import cat_state, fidelity, ghz_target
from .dynamics import (CollapseSet, IntegratorSettings, Pulse, Segment,
                       apply_unitary, evolve, evolve_to_stationarity,
                       standard_collapses, steady_state)
from .hilbert import (LayoutError, ModeLayout, QOperator, QState,
                      fock_state, partial_trace, state_vector,
                      tensor_states, thermal_state, vacuum_state)
from .model import (DriveParams, RegimeWarning, SystemParams, derive,
                    hamiltonian_rotating, polariton, standard_layout)


class ProtocolError(RuntimeError):
    """A protocol cannot be scheduled or executed as requested."""


# ---------------------------------------------------------------------------
# pulse sequences
# ---------------------------------------------------------------------------

ROTATION_TARGETS = ("transmon01", "transmon12", "polariton+", "polariton-")
BRANCHES = ("+", "-")


@dataclass(frozen=True)
class Rotation:
    """Instantaneous rotation of one two-level transition.

    ``target`` picks the transition, ``angle`` the rotation angle and
    ``axis`` the equatorial rotation axis ("x" or "y").
    """

    time: float
    target: str
    angle: float
    axis: str = "x"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.time) and self.time >= 0.0):
            raise ValueError(f"rotation time must be finite and >= 0, got {self.time!r}")
        if self.target not in ROTATION_TARGETS:
            raise ValueError(f"unknown rotation target {self.target!r}; "
                             f"expected one of {ROTATION_TARGETS}")
        if not math.isfinite(self.angle):
            raise ValueError("rotation angle must be finite")
        if self.axis not in ("x", "y"):
            raise ValueError(f"rotation axis must be 'x' or 'y', got {self.axis!r}")


@dataclass(frozen=True)
class Retune:
    """Instantaneous change of the operating point to ``params``."""

    time: float
    params: SystemParams

    def __post_init__(self) -> None:
        if not (math.isfinite(self.time) and self.time >= 0.0):
            raise ValueError(f"retune time must be finite and >= 0, got {self.time!r}")


@dataclass(frozen=True)
class FreeSegment:
    """Evolution under the current Hamiltonian for ``duration`` seconds."""

    time: float
    duration: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.time) and self.time >= 0.0):
            raise ValueError(f"segment time must be finite and >= 0, got {self.time!r}")
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError(f"segment duration must be positive, got {self.duration!r}")


@dataclass(frozen=True)
class PulseSequence:
    """Ordered protocol schedule of rotations, retunes and free segments."""

    events: tuple

    def __post_init__(self) -> None:
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        t = 0.0
        for ev in events:
            if not isinstance(ev, (Rotation, Retune, FreeSegment)):
                raise TypeError(f"unknown event type {type(ev).__name__}")
            if ev.time < t - 1e-15:
                raise ValueError("event times must be non-decreasing")
            t = max(t, ev.time + (ev.duration if isinstance(ev, FreeSegment) else 0.0))

    @property
    def duration(self) -> float:
        """End time of the last event."""
        t = 0.0
        for ev in self.events:
            t = max(t, ev.time + (ev.duration if isinstance(ev, FreeSegment) else 0.0))
        return t

    def validate_for(self, layout: ModeLayout) -> None:
        """Check every rotation is representable in ``layout``."""
        labels = layout.labels
        for ev in self.events:
            if not isinstance(ev, Rotation):
                continue
            if ev.target.startswith("transmon") and "transmon" not in labels:
                raise ProtocolError(f"{ev.target} rotation needs a transmon mode")
            if ev.target == "transmon12" and layout.dims[labels.index("transmon")] < 3:
                raise ProtocolError("transmon12 rotation needs at least three transmon levels")
            if ev.target.startswith("polariton") and not (
                    "transmon" in labels and "cavity" in labels):
                raise ProtocolError(f"{ev.target} rotation needs transmon and cavity modes")


# ---------------------------------------------------------------------------
# rotation unitaries
# ---------------------------------------------------------------------------

def _su2(angle: float, axis: str) -> np.ndarray:
    c = math.cos(0.5 * angle)
    s = math.sin(0.5 * angle)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]])
    return np.array([[c, -s], [s, c]], dtype=complex)


def _embedded_rotation(dim: int, lo: int, r: np.ndarray) -> np.ndarray:
    """SU(2) block ``r`` on levels (lo, lo+1), identity elsewhere."""
    u = np.eye(dim, dtype=complex)
    u[lo:lo + 2, lo:lo + 2] = r
    return u


def single_excitation_modes(h: QOperator) -> dict[str, np.ndarray]:
    """Polariton eigenvectors of the single-excitation transmon/cavity block.

    Diagonalizes the 2x2 block of ``h`` spanned by one transmon quantum
    and one cavity quantum (mechanics in the ground state) and returns
    unit vectors over the joint transmon/cavity product space, keyed
    "polariton+" (higher eigenvalue) and "polariton-". The phase is
    fixed by making the largest component real and positive, so pulse
    unitaries are reproducible run to run.
    """
    layout = h.layout
    if layout.labels[:2] != ("transmon", "cavity"):
        raise LayoutError("polariton extraction needs transmon and cavity modes first")
    i0 = layout.state_index((0, 0) + (0,) * (layout.nmodes - 2))
    it = layout.state_index((1, 0) + (0,) * (layout.nmodes - 2))
    ic = layout.state_index((0, 1) + (0,) * (layout.nmodes - 2))
    hm = h.data.tocsr()
    e0 = hm[i0, i0]
    block = np.array([[hm[it, it] - e0, hm[it, ic]],
                      [hm[ic, it], hm[ic, ic] - e0]])
    evals, evecs = np.linalg.eigh(block)
    out = {}
    for name, col in (("polariton-", 0), ("polariton+", 1)):
        v = evecs[:, col]
        k = int(np.argmax(np.abs(v)))
        v = v * (abs(v[k]) / v[k])
        full = np.zeros(layout.dims[0] * layout.dims[1], dtype=complex)
        full[layout.dims[1]] = v[0]      # one transmon quantum
        full[1] = v[1]                   # one cavity quantum
        out[name] = full
    return out


def rotation_unitary(layout: ModeLayout, h: QOperator | None,
                     target: str, angle: float, axis: str = "x") -> QOperator:
    """Unitary for one Rotation event under the current Hamiltonian ``h``.

    Transmon rotations are local and ignore ``h``. Polariton rotations
    rotate between the joint transmon/cavity ground state and one
    single-excitation eigenvector of ``h``, so they stay correct when
    the hybridization is detuned or dressed.
    """
    r = _su2(angle, axis)
    labels = layout.labels
    if target in ("transmon01", "transmon12"):
        dim_t = layout.dims[labels.index("transmon")]
        lo = 0 if target == "transmon01" else 1
        if dim_t < lo + 2:
            raise ProtocolError(f"{target} rotation needs transmon dim >= {lo + 2}")
        return hilbert.embed(layout, "transmon", _embedded_rotation(dim_t, lo, r))
    if target not in ("polariton+", "polariton-"):
        raise ValueError(f"unknown rotation target {target!r}")
    if h is None:
        raise ProtocolError("polariton rotations need the current Hamiltonian")
    vecs = single_excitation_modes(h)
    dim_tc = layout.dims[0] * layout.dims[1]
    ground = np.zeros(dim_tc, dtype=complex)
    ground[0] = 1.0
    excited = vecs[target]
    u_tc = np.eye(dim_tc, dtype=complex)
    basis = (ground, excited)
    for i in range(2):
        for j in range(2):
            delta = 1.0 if i == j else 0.0
            u_tc += (r[i, j] - delta) * np.outer(basis[i], basis[j].conj())
    dim_rest = 1
    for d in layout.dims[2:]:
        dim_rest *= d
    full = sp.kron(sp.csr_matrix(u_tc), sp.eye(dim_rest, format="csr"), format="csr")
    return QOperator(layout, full)


# ---------------------------------------------------------------------------
# resonance tuning
# ---------------------------------------------------------------------------

def zeta_at_crossing(params: SystemParams) -> float:
    """Energy ratio at which the bare transmon meets the cavity frequency."""
    return (params.omega_c / params.E_C + 1.0) ** 2 / 8.0


def _splitting(params: SystemParams) -> float:
    d = derive(params)
    return math.hypot(d.Delta, 2.0 * d.chi)


def tune_to_resonance(params: SystemParams, *,
                      rel_tol: float = 1e-12) -> SystemParams:
    """Adjust the operating point until the polariton splitting equals Omega_m.

    The splitting sqrt(Delta^2 + 4 chi^2) grows monotonically with zeta
    above the crossing point, so when the crossing value already sits
    below Omega_m a root in zeta exists and is bisected. When even the
    minimum splitting exceeds Omega_m (the case for both built-in
    parameter sets) no zeta solves the condition; the modulation
    amplitude n_ac is then rescaled to shrink the beamsplitter coupling
    until the crossing point itself is resonant. Raises ProtocolError if
    no solution is reachable.
    """
    target = params.Omega_m
    if target <= 0.0:
        raise ProtocolError("resonance tuning needs Omega_m > 0")
    zstar = zeta_at_crossing(params)
    if zstar <= 1.0:
        raise ProtocolError("cavity frequency too low: no crossing with zeta > 1")
    floor = _splitting(replace(params, zeta=zstar))
    if floor >= target:
        scale = target / floor
        tuned = replace(params, zeta=zstar, n_ac=params.n_ac * scale)
    else:
        hi = zstar
        for _ in range(60):
            hi *= 2.0
            if _splitting(replace(params, zeta=hi)) > target:
                break
        else:
            raise ProtocolError("resonance bracket expansion failed")
        z = brentq(lambda zz: _splitting(replace(params, zeta=zz)) - target,
                   zstar, hi, rtol=1e-15)
        tuned = replace(params, zeta=float(z))
    err = abs(_splitting(tuned) - target)
    if err > rel_tol * target:
        raise ProtocolError(f"resonance solver residual {err:.3e} rad/s "
                            f"exceeds {rel_tol:g} relative")
    return tuned


# ---------------------------------------------------------------------------
# reduced driven-polariton cooling model
# ---------------------------------------------------------------------------

def default_drive_amplitude(params: SystemParams, branch: str,
                            occupation: float = 0.1) -> float:
    """Drive amplitude that parks the driven branch near ``occupation``.

    Weak-drive estimate at the red sideband: a drive detuned by Omega_m
    below the branch holds a mean polariton population close to
    (E_L alpha_other / Omega_m)^2, with alpha_other the cavity weight of
    the driven branch. The returned E_L inverts that estimate. Reported
    in sweep outputs so runs are reproducible.
    """
    if branch not in BRANCHES:
        raise ValueError(f"branch must be '+' or '-', got {branch!r}")
    if not 0.0 < occupation < 1.0:
        raise ValueError("target occupation must sit in (0, 1)")
    pp = polariton(params)
    weight = pp.alpha_minus if branch == "+" else pp.alpha_plus
    if weight < 1e-9:
        raise ProtocolError("selected branch has no cavity weight; it cannot "
                            "be driven through the cavity")
    return math.sqrt(occupation) * params.Omega_m / weight


def reduced_cooling_system(params: SystemParams, branch: str, delta: float,
                           E_L: float, dims: tuple[int, int]
                           ) -> tuple[QOperator, CollapseSet]:
    """Driven-branch model: one polariton mode coupled to the mechanics.

    Keeps the driven polariton and drops the idler branch entirely. In
    the frame rotating at the drive the Hamiltonian reads

        -delta p'p - lambda_br p'p'pp + Omega_m b'b
        + g_br p'p (b + b') + i E_eff (p - p')

    with branch-projected Kerr, coupling and drive weights. Decay
    channels carry the transmon and cavity rates folded with the branch
    amplitudes; the mechanical bath keeps its physical occupation.
    """
    if branch not in BRANCHES:
        raise ValueError(f"branch must be '+' or '-', got {branch!r}")
    d = derive(params)
    pp = polariton(params)
    if branch == "+":
        alpha, other = pp.alpha_plus, pp.alpha_minus
        g_br, lam_br = pp.g_plus, pp.lambda_plus
        drive = E_L * pp.alpha_minus
    else:
        alpha, other = pp.alpha_minus, pp.alpha_plus
        g_br, lam_br = pp.g_minus, pp.lambda_minus
        drive = -E_L * pp.alpha_plus
    layout = ModeLayout(tuple(int(x) for x in dims), ("polariton", "mech"))
    p = hilbert.mode_lowering(layout, 0)
    b = hilbert.mode_lowering(layout, 1)
    n_p = hilbert.number_operator(layout, 0)
    n_b = hilbert.number_operator(layout, 1)
    x_b = b + b.dag()
    h = (-delta) * n_p \
        - lam_br * (p.dag() @ p.dag() @ p @ p) \
        + params.Omega_m * n_b \
        + g_br * (n_p @ x_b) \
        + (1j * drive) * (p - p.dag())
    channels = []
    kappa_p = params.gamma_t * alpha**2 + params.kappa_c * other**2
    if kappa_p > 0.0:
        channels.append((p, kappa_p))
    if params.gamma_phi > 0.0:
        channels.append((n_p, params.gamma_phi * alpha**4))
    if d.Gamma_m > 0.0:
        channels.append((b, (d.n_bar + 1.0) * d.Gamma_m))
        if d.n_bar > 0.0:
            channels.append((b.dag(), d.n_bar * d.Gamma_m))
    return h, CollapseSet(tuple(channels))


@dataclass(frozen=True)
class CoolingPoint:
    """Stationary answer at one drive detuning."""

    delta: float
    n_final: float
    converged: bool
    state: QState


def cooling_point(params: SystemParams, branch: str, delta: float,
                  dims, settings: IntegratorSettings | None = None, *,
                  method: str = "steady", model: str = "reduced",
                  E_L: float | None = None, n_init: float | None = None,
                  window: float | None = None, eps: float = 5e-3,
                  t_max: float | None = None) -> CoolingPoint:
    """Stationary phonon number for one branch and one drive detuning.

    ``method`` is "steady" (direct null-space solve, initial state
    irrelevant) or "evolve" (window-averaged integration from a thermal
    start with ``n_init`` phonons, physical bath occupation either
    way). ``model`` is "reduced" (driven branch only) or "full3" (all
    three modes, drive frame); the latter is the cross-check path and
    costs far more.
    """
    if method not in ("steady", "evolve"):
        raise ValueError(f"method must be 'steady' or 'evolve', got {method!r}")
    if model not in ("reduced", "full3"):
        raise ValueError(f"model must be 'reduced' or 'full3', got {model!r}")
    d = derive(params)
    pp = polariton(params)
    if E_L is None:
        E_L = default_drive_amplitude(params, branch)
    n_bath = d.n_bar
    if n_init is None:
        n_init = n_bath
    if model == "reduced":
        dims = tuple(int(x) for x in dims)
        if len(dims) != 2:
            raise LayoutError("reduced cooling model takes 2 mode dimensions")
        h, collapses = reduced_cooling_system(params, branch, delta, E_L, dims)
        layout = h.layout
    else:
        dims = tuple(int(x) for x in dims)
        if len(dims) != 3:
            raise LayoutError("full3 cooling model takes 3 mode dimensions")
        omega_br = pp.omega_plus if branch == "+" else pp.omega_minus
        driven = replace(params, drive=DriveParams(E_L=E_L, omega_L=omega_br + delta))
        layout = standard_layout(dims)
        h = hamiltonian_rotating(driven, layout)
        collapses = standard_collapses(driven, layout)
    n_op = hilbert.number_operator(layout, layout.index("mech"))
    if method == "steady":
        rho = steady_state(h, collapses)
        n_final = float(hilbert.expectation(n_op, rho).real)
        return CoolingPoint(delta, max(n_final, 0.0), True, rho)
    if model == "reduced":
        rho0 = tensor_states(
            vacuum_state(ModeLayout((dims[0],), ("polariton",))),
            thermal_state(dims[1], n_init, label="mech"))
    else:
        rho0 = tensor_states(
            fock_state(ModeLayout(dims[:2], ("transmon", "cavity")), (0, 0)),
            thermal_state(dims[2], n_init, label="mech"))
    settings = settings or IntegratorSettings()
    if window is None:
        alpha = pp.alpha_plus if branch == "+" else pp.alpha_minus
        other = pp.alpha_minus if branch == "+" else pp.alpha_plus
        kappa_p = params.gamma_t * alpha**2 + params.kappa_c * other**2
        if kappa_p <= 0.0:
            raise ProtocolError("no polariton decay: pass an explicit window "
                                "for the evolve method")
        window = 25.0 / kappa_p
    if t_max is None:
        t_max = 40.0 * window
    value, traj = evolve_to_stationarity(rho0.to_density(), h, collapses,
                                         ("n_mech", n_op), settings,
                                         window=window, eps=eps, t_max=t_max)
    return CoolingPoint(delta, max(float(value), 0.0),
                        bool(traj.converged), traj.final_state)


@dataclass(frozen=True)
class CoolingSweepResult:
    """Stationary phonon numbers across a detuning grid for one branch."""

    detunings: tuple[float, ...]
    n_final: tuple[float, ...]
    converged: tuple[bool, ...]
    polariton_branch: str
    omega_m: float
    E_L: float
    method: str

    def __post_init__(self) -> None:
        if self.polariton_branch not in BRANCHES:
            raise ValueError(f"branch must be '+' or '-', got {self.polariton_branch!r}")
        n = len(self.detunings)
        if len(self.n_final) != n or len(self.converged) != n:
            raise ValueError("detunings, n_final and converged lengths differ")
        if any(x < 0.0 for x in self.n_final):
            raise ValueError("phonon numbers cannot be negative")


def _cooling_job(args) -> tuple[float, bool]:
    params, branch, delta, dims, settings, kwargs = args
    pt = cooling_point(params, branch, delta, dims, settings, **kwargs)
    return pt.n_final, pt.converged


def cooling_sweep(params: SystemParams, branch: str, detuning_grid,
                  dims, settings: IntegratorSettings | None = None, *,
                  method: str = "steady", model: str = "reduced",
                  E_L: float | None = None, n_init: float | None = None,
                  window: float | None = None, eps: float = 5e-3,
                  t_max: float | None = None, jobs: int = 1) -> CoolingSweepResult:
    """Run cooling_point over a grid of drive detunings.

    ``detuning_grid`` holds drive offsets from the driven branch in
    rad/s; the red sideband sits at -Omega_m and every point must fall
    within 2 Omega_m of it. Points are independent and run in ``jobs``
    worker processes when jobs > 1.
    """
    grid = [float(x) for x in detuning_grid]
    if not grid:
        raise ValueError("detuning grid is empty")
    om = params.Omega_m
    for x in grid:
        if abs(x + om) > 2.0 * om * (1.0 + 1e-12):
            raise ValueError(f"detuning {x:g} rad/s leaves the sideband window "
                             f"[-3, +1] Omega_m")
    if E_L is None:
        E_L = default_drive_amplitude(params, branch)
    kwargs = dict(method=method, model=model, E_L=E_L, n_init=n_init,
                  window=window, eps=eps, t_max=t_max)
    if jobs > 1:
        work = [(params, branch, x, tuple(dims), settings, kwargs) for x in grid]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cooling_job, work))
    else:
        results = [_cooling_job((params, branch, x, tuple(dims), settings, kwargs))
                   for x in grid]
    return CoolingSweepResult(
        detunings=tuple(grid),
        n_final=tuple(r[0] for r in results),
        converged=tuple(r[1] for r in results),
        polariton_branch=branch,
        omega_m=om,
        E_L=float(E_L),
        method=method)


# ---------------------------------------------------------------------------
# conditional displacement
# ---------------------------------------------------------------------------

def displacement_hamiltonian(params: SystemParams,
                             layout: ModeLayout) -> QOperator:
    """Transmon-frame Hamiltonian of the displacement stage (two modes).

    In the frame rotating at the 0-1 transition the transmon
    contributes only its anharmonicity, and the excitation-number
    coupling displaces the mechanics conditioned on the transmon state.
    """
    if layout.labels != ("transmon", "mech"):
        raise LayoutError("displacement stage expects a (transmon, mech) layout")
    d = derive(params)
    a = hilbert.mode_lowering(layout, 0)
    b = hilbert.mode_lowering(layout, 1)
    n_t = hilbert.number_operator(layout, 0)
    return -d.lam * (a.dag() @ a.dag() @ a @ a) \
        + params.Omega_m * hilbert.number_operator(layout, 1) \
        + d.g_t * (n_t @ (b + b.dag()))


def transmon_mech_collapses(params: SystemParams,
                            layout: ModeLayout) -> CollapseSet:
    """Decay channels for stages where the cavity stays in vacuum."""
    d = derive(params)
    a = hilbert.mode_lowering(layout, layout.index("transmon"))
    b = hilbert.mode_lowering(layout, layout.index("mech"))
    channels = [
        (a, params.gamma_t),
        (hilbert.number_operator(layout, layout.index("transmon")), params.gamma_phi),
        (b, (d.n_bar + 1.0) * d.Gamma_m),
        (b.dag(), d.n_bar * d.Gamma_m),
    ]
    return CollapseSet(tuple((op, r) for op, r in channels if r > 0.0))


def _require_mech_dim(dim_m: int, beta: float) -> None:
    need = beta * beta + 6.0 * beta + 10.0
    if dim_m < need:
        raise ValueError(f"mechanical dimension {dim_m} cannot hold a "
                         f"displacement of {beta:.3g}; need at least {math.ceil(need)}")


def conditional_displacement(params: SystemParams, N_p: int, dims,
                             settings: IntegratorSettings | None = None, *,
                             include_cavity: bool = False,
                             initial_transmon: str = "superposition") -> QState:
    """Displacement train: N_p equally spaced pi pulses over N_p + 1 periods.

    Starting from (|0> + |1>)/sqrt(2) times the mechanical ground state,
    half-period free flights under the number-conditioned displacement
    alternate with transmon pi pulses, building opposite coherent
    branches of amplitude (N_p + 1) g_t / Omega_m. ``initial_transmon``
    may be "excited" to freeze the transmon in |1> instead (the single
    flight then reaches at most 2 g_t / Omega_m). With ``include_cavity``
    the cavity mode is kept at its physical detuning instead of being
    dropped; this is slow and exists to measure what dropping it costs.
    """
    if not isinstance(N_p, int) or N_p < 0:
        raise ValueError(f"pulse count must be a non-negative integer, got {N_p!r}")
    if initial_transmon not in ("superposition", "excited"):
        raise ValueError(f"initial_transmon must be 'superposition' or 'excited', "
                         f"got {initial_transmon!r}")
    dims = tuple(int(x) for x in dims)
    d = derive(params)
    beta = (N_p + 1) * d.g_t / params.Omega_m
    _require_mech_dim(dims[-1], beta)
    settings = settings or IntegratorSettings()
    if include_cavity:
        if len(dims) != 3:
            raise LayoutError("include_cavity needs 3 mode dimensions")
        layout = standard_layout(dims)
        frame = replace(params, drive=DriveParams(E_L=0.0, omega_L=d.omega_t))
        h = hamiltonian_rotating(frame, layout)
        collapses = standard_collapses(params, layout)
    else:
        if len(dims) != 2:
            raise LayoutError("the cavity-free displacement stage needs 2 mode "
                              "dimensions")
        layout = ModeLayout(dims, ("transmon", "mech"))
        h = displacement_hamiltonian(params, layout)
        collapses = transmon_mech_collapses(params, layout)
    amps = np.zeros(layout.size, dtype=complex)
    ground = (0,) * (layout.nmodes - 1)
    if initial_transmon == "excited":
        amps[layout.state_index((1,) + ground)] = 1.0
    else:
        amps[layout.state_index((0,) + ground)] = 1.0 / math.sqrt(2.0)
        amps[layout.state_index((1,) + ground)] = 1.0 / math.sqrt(2.0)
    state = state_vector(layout, amps).to_density()
    half_period = math.pi / params.Omega_m
    flip = rotation_unitary(layout, h, "transmon01", math.pi, "x")
    schedule: list[Segment | Pulse] = []
    for k in range(N_p + 1):
        schedule.append(Segment(half_period, h))
        if k < N_p:
            schedule.append(Pulse(flip, label="transmon01 pi"))
    traj = evolve(state, schedule, collapses, settings)
    return traj.final_state


# ---------------------------------------------------------------------------
# Fock ladder protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FockStage:
    """One row of the swap-protocol record."""

    stage: str
    time_s: float
    fidelity: float
    n_mech: float


def _check_swap_regime(params: SystemParams) -> None:
    d = derive(params)
    slow = max(params.gamma_t, d.n_bar * d.Gamma_m)
    if slow > 0.1 * d.g_t:
        warnings.warn(
            f"decoherence rate {slow:.3g} rad/s is not small against the "
            f"coupling g_t = {d.g_t:.3g} rad/s; transfer fidelity will suffer",
            RegimeWarning, stacklevel=3)
    if d.g_t > 0.1 * params.Omega_m:
        warnings.warn(
            f"coupling g_t = {d.g_t:.3g} rad/s approaches Omega_m = "
            f"{params.Omega_m:.3g} rad/s; the rotating-wave timing "
            "tau_n = pi / (2 sqrt(n) G) degrades",
            RegimeWarning, stacklevel=3)


def fock_sequence(params_resonant: SystemParams, n_target: int) -> PulseSequence:
    """Schedule of the ladder-climbing protocol at the resonant point.

    Each rung excites the upper polariton, lets the three-mode coupling
    swap it into the lower polariton plus one phonon for
    tau_n = pi / (2 sqrt(n) G), then removes the lower polariton.
    """
    if not isinstance(n_target, int) or n_target < 1:
        raise ValueError(f"target phonon number must be a positive integer, "
                         f"got {n_target!r}")
    pp = polariton(params_resonant)
    big_g = abs(pp.G_threebody)
    if big_g <= 0.0:
        raise ProtocolError("three-mode coupling vanishes; no swap is possible")
    events: list = [Retune(0.0, params_resonant)]
    t = 0.0
    for n in range(1, n_target + 1):
        tau = math.pi / (2.0 * math.sqrt(n) * big_g)
        events.append(Rotation(t, "polariton+", math.pi, "x"))
        events.append(FreeSegment(t, tau))
        t += tau
        events.append(Rotation(t, "polariton-", math.pi, "x"))
    return PulseSequence(tuple(events))


def prepare_fock(params_resonant: SystemParams, n_target: int, dims,
                 settings: IntegratorSettings | None = None, *,
                 start: str = "ideal", resonance_tol: float = 1e-6,
                 cooled_delta: float | None = None,
                 cooled_E_L: float | None = None
                 ) -> tuple[QState, tuple[FockStage, ...]]:
    """Climb the mechanical Fock ladder to ``n_target``.

    ``params_resonant`` must already satisfy the splitting condition
    (see tune_to_resonance); the protocol runs in the frame rotating at
    the cavity frequency where that condition makes each swap stage
    resonant. ``start`` is "ideal" (everything in its ground state) or
    "cooled": the stationary state of the driven three-mode model at
    these same parameters, drive switched off at handoff, so the
    residual dressed populations carry into the pulse sequence. The
    default ``cooled_delta`` of -1.95 Omega_m sits on the narrow
    two-step sideband of the dressed stationary model at the standard
    drive amplitude; sweep ``model="full3"`` cooling before trusting it
    at a nonstandard drive. Returns the reduced mechanical state and
    the per-stage record; the last record's fidelity is the |n_target>
    population.
    """
    dims = tuple(int(x) for x in dims)
    if len(dims) != 3:
        raise LayoutError("the swap protocol needs 3 mode dimensions")
    if not isinstance(n_target, int) or n_target < 1:
        raise ValueError(f"target phonon number must be a positive integer, "
                         f"got {n_target!r}")
    if dims[2] < n_target + 2:
        raise ValueError(f"mechanical dimension {dims[2]} cannot resolve "
                         f"|{n_target}>; need at least {n_target + 2}")
    if start not in ("ideal", "cooled"):
        raise ValueError(f"start must be 'ideal' or 'cooled', got {start!r}")
    split = _splitting(params_resonant)
    if abs(split - params_resonant.Omega_m) > resonance_tol * params_resonant.Omega_m:
        raise ProtocolError(
            f"polariton splitting {split:.6e} rad/s misses Omega_m = "
            f"{params_resonant.Omega_m:.6e} rad/s; run tune_to_resonance first")
    _check_swap_regime(params_resonant)
    settings = settings or IntegratorSettings()
    layout = standard_layout(dims)
    frame = replace(params_resonant,
                    drive=DriveParams(E_L=0.0, omega_L=params_resonant.omega_c))
    h = hamiltonian_rotating(frame, layout)
    collapses = standard_collapses(params_resonant, layout)
    seq = fock_sequence(params_resonant, n_target)
    seq.validate_for(layout)

    if start == "cooled":
        delta = (-1.95 * params_resonant.Omega_m if cooled_delta is None
                 else cooled_delta)
        point = cooling_point(params_resonant, "+", delta, dims,
                              settings, method="steady", model="full3",
                              E_L=cooled_E_L)
        state = point.state
    else:
        state = vacuum_state(layout).to_density()

    n_op = hilbert.number_operator(layout, "mech")

    def record(name: str, t: float, level: int) -> FockStage:
        rho_m = partial_trace(state, "mech")
        return FockStage(name, t, float(rho_m.data[level, level].real),
                         float(hilbert.expectation(n_op, state).real))

    stages = [record("start", 0.0, 0)]
    t = 0.0
    rung = 0
    for ev in seq.events:
        if isinstance(ev, Retune):
            continue
        if isinstance(ev, FreeSegment):
            traj = evolve(state, [Segment(ev.duration, h)], collapses, settings)
            state = traj.final_state
            t += ev.duration
        else:
            u = rotation_unitary(layout, h, ev.target, ev.angle, ev.axis)
            state = apply_unitary(state, u)
            if ev.target == "polariton-":
                rung += 1
                stages.append(record(f"swap{rung}", t, rung))
    return partial_trace(state, "mech"), tuple(stages)


# ---------------------------------------------------------------------------
# entangled cat protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GhzResult:
    """Outputs of the displacement-train protocol for one pulse count."""

    N_p: int
    beta: float
    P1_sim: float
    P1_theory: float
    fidelity_cat_odd: float
    fidelity_ghz: float
    theta: float

    def __post_init__(self) -> None:
        if not isinstance(self.N_p, int) or self.N_p < 1 or self.N_p % 2 == 0:
            raise ValueError(f"pulse count must be odd and positive, got {self.N_p!r}")
        if not (math.isfinite(self.beta) and self.beta > 0.0):
            raise ValueError(f"branch amplitude must be positive, got {self.beta!r}")
        for name in ("P1_sim", "P1_theory", "fidelity_cat_odd", "fidelity_ghz"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v!r} leaves [0, 1]")


def theory_p1(N_p: int, g_t: float, Omega_m: float) -> float:
    """Closed-form probability of finding the transmon in |1> after the train.

    Equals (1 - exp(-2 beta^2)) / 2 with beta = (N_p + 1) g_t / Omega_m,
    which is half the squared norm of the odd cat branch.
    """
    if not isinstance(N_p, int) or N_p < 0:
        raise ValueError(f"pulse count must be a non-negative integer, got {N_p!r}")
    if g_t < 0.0 or Omega_m <= 0.0:
        raise ValueError("coupling must be >= 0 and Omega_m > 0")
    beta = (N_p + 1) * g_t / Omega_m
    return -0.5 * math.expm1(-2.0 * beta * beta)


def photon_swap_params(params: SystemParams, excursion: float = 60.0) -> SystemParams:
    """Operating point whose 1-2 transition lands on the cavity.

    Raising zeta by ``excursion`` and pinning the cavity at the shifted
    1-2 frequency realizes the final swap stage; the cavity is taken as
    fabricated to match that frequency, so the stored omega_c is
    replaced rather than respected.
    """
    if excursion <= 0.0:
        raise ValueError("excursion must be positive")
    z = params.zeta + excursion
    ec = params.E_C
    omega12 = ec * (math.sqrt(8.0 * z) - 1.0) - ec
    return replace(params, zeta=z, omega_c=omega12)


def ghz_sequence(params: SystemParams, N_p: int, *,
                 excursion: float = 60.0) -> tuple[PulseSequence, SystemParams]:
    """Schedule of the tripartite protocol and the final operating point."""
    if not isinstance(N_p, int) or N_p < 1 or N_p % 2 == 0:
        raise ValueError(f"pulse count must be odd and positive, got {N_p!r}")
    half_period = math.pi / params.Omega_m
    params_swap = photon_swap_params(params, excursion)
    chi_swap = derive(params_swap).chi
    tau_swap = math.pi / (2.0 * math.sqrt(2.0) * chi_swap)
    events: list = [Rotation(0.0, "transmon01", 0.5 * math.pi, "y")]
    t = 0.0
    for k in range(N_p + 1):
        events.append(FreeSegment(t, half_period))
        t += half_period
        if k < N_p:
            events.append(Rotation(t, "transmon01", math.pi, "x"))
    events.append(Rotation(t, "transmon01", -0.5 * math.pi, "y"))
    events.append(Rotation(t, "transmon12", math.pi, "x"))
    events.append(Retune(t, params_swap))
    events.append(FreeSegment(t, tau_swap))
    return PulseSequence(tuple(events)), params_swap


def _attach_vacuum_cavity(state: QState, dim_c: int) -> QState:
    """Insert a vacuum cavity mode between transmon and mechanics."""
    dt, dm = state.layout.dims
    rho = state.to_density().data.reshape(dt, dm, dt, dm)
    out = np.zeros((dt, dim_c, dm, dt, dim_c, dm), dtype=complex)
    out[:, 0, :, :, 0, :] = rho
    layout = standard_layout((dt, dim_c, dm))
    return QState(layout, "density", out.reshape(layout.size, layout.size))


def _check_ghz_regime(params: SystemParams, N_p: int, chi_swap: float) -> None:
    d = derive(params)
    slow = math.pi * max(params.gamma_t, d.n_bar * d.Gamma_m)
    mid = params.Omega_m / N_p
    if not slow < mid:
        warnings.warn(
            f"decoherence {slow:.3g} rad/s outruns the pulse spacing scale "
            f"Omega_m / N_p = {mid:.3g} rad/s", RegimeWarning, stacklevel=3)
    if not mid < d.g_t:
        warnings.warn(
            f"pulse spacing scale {mid:.3g} rad/s exceeds g_t = {d.g_t:.3g} "
            "rad/s; branches will not separate cleanly",
            RegimeWarning, stacklevel=3)
    if chi_swap < 10.0 * params.Omega_m:
        warnings.warn(
            f"photon swap coupling chi = {chi_swap:.3g} rad/s is not large "
            f"against Omega_m = {params.Omega_m:.3g} rad/s; the mechanics "
            "rotates visibly during the swap", RegimeWarning, stacklevel=3)


def prepare_ghz(params: SystemParams, N_p: int, dims,
                settings: IntegratorSettings | None = None, *,
                excursion: float = 60.0) -> GhzResult:
    """Entangle transmon, cavity photon and mechanical cat.

    Runs the displacement train between two pi/2 pulses, promotes the
    odd-cat branch to the second transmon level, retunes so the 1-2
    transition meets the cavity and swaps that quantum into a photon.
    The cavity is attached only for the final stage (it is far detuned
    and empty before). A deterministic virtual-Z correction, reported as
    ``theta``, removes the known branch phase collected by the pulses,
    the anharmonicity and the frame change. P1_sim is the |1>
    population after the second pi/2 pulse and fidelity_cat_odd the
    odd-cat fidelity of the mechanics post-selected on it.
    """
    dims = tuple(int(x) for x in dims)
    if len(dims) != 3:
        raise LayoutError("the tripartite protocol needs 3 mode dimensions")
    if dims[0] < 3:
        raise ValueError(f"transmon dimension {dims[0]} cannot host the 1-2 "
                         "transition; need at least 3")
    if not isinstance(N_p, int) or N_p < 1 or N_p % 2 == 0:
        raise ValueError(f"pulse count must be odd and positive, got {N_p!r}")
    d = derive(params)
    beta = (N_p + 1) * d.g_t / params.Omega_m
    if beta <= 0.0:
        raise ProtocolError("displacement vanishes; the protocol needs g_t > 0")
    _require_mech_dim(dims[2], beta)
    settings = settings or IntegratorSettings()
    seq, params_swap = ghz_sequence(params, N_p, excursion=excursion)
    d_swap = derive(params_swap)
    _check_ghz_regime(params, N_p, d_swap.chi)

    layout2 = ModeLayout((dims[0], dims[2]), ("transmon", "mech"))
    h2 = displacement_hamiltonian(params, layout2)
    collapses2 = transmon_mech_collapses(params, layout2)
    layout3 = standard_layout(dims)
    frame3 = replace(params_swap,
                     drive=DriveParams(E_L=0.0, omega_L=params_swap.omega_c))
    h3 = hamiltonian_rotating(frame3, layout3)
    collapses3 = standard_collapses(params_swap, layout3)
    seq.validate_for(layout3)

    state = vacuum_state(layout2).to_density()
    attached = False
    p1_sim = None
    fid_cat = None
    tau_swap = None
    for ev in seq.events:
        if isinstance(ev, Retune):
            state = _attach_vacuum_cavity(state, dims[1])
            attached = True
            continue
        if isinstance(ev, FreeSegment):
            if attached:
                tau_swap = ev.duration
                traj = evolve(state, [Segment(ev.duration, h3)], collapses3, settings)
            else:
                traj = evolve(state, [Segment(ev.duration, h2)], collapses2, settings)
            state = traj.final_state
            continue
        layout = layout3 if attached else layout2
        h = h3 if attached else h2
        u = rotation_unitary(layout, h, ev.target, ev.angle, ev.axis)
        state = apply_unitary(state, u)
        if ev.target == "transmon01" and ev.axis == "y" and ev.angle < 0.0:
            proj = hilbert.embed(layout2, "transmon",
                                 np.diag(np.eye(dims[0])[1]).astype(complex))
            p1_sim = float(hilbert.expectation(proj, state).real)
            sel = state.data.reshape(dims[0], dims[2], dims[0], dims[2])[1, :, 1, :]
            rho_m = QState(ModeLayout((dims[2],), ("mech",)), "density",
                           sel / max(p1_sim, 1e-300))
            fid_cat = fidelity(rho_m, cat_state(dims[2], beta, "odd"))

    # The branch carrying the odd cat collected a deterministic phase:
    # pi from the closing pi/2 pulse, pi/2 from the 1-2 pulse, and the
    # anharmonicity phase 2 lambda tau of the degenerate swap pair.
    # Undo it on transmon level 1, where that branch now lives.
    theta = math.pi + 0.5 * math.pi + 2.0 * d_swap.lam * tau_swap
    theta = math.remainder(theta, 2.0 * math.pi)
    corr = np.eye(dims[0], dtype=complex)
    corr[1, 1] = np.exp(1j * theta)
    state = apply_unitary(state, hilbert.embed(layout3, "transmon", corr))

    fid_ghz = fidelity(state, ghz_target(beta, layout3))
    p1_th = theory_p1(N_p, d.g_t, params.Omega_m)
    return GhzResult(
        N_p=N_p,
        beta=beta,
        P1_sim=min(max(p1_sim, 0.0), 1.0),
        P1_theory=p1_th,
        fidelity_cat_odd=float(fid_cat),
        fidelity_ghz=float(fid_ghz),
        theta=theta)


# ---------------------------------------------------------------------------
# tabular output
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_table(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_sidecar(csv_path, sidecar_path, payload: dict) -> None:
    target = str(csv_path) + ".json" if sidecar_path is None else sidecar_path
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_cooling_csv(result: CoolingSweepResult, path, *,
                      metadata: dict | None = None, sidecar_path=None) -> None:
    """Sweep table plus a JSON sidecar with the run configuration."""
    header = ["delta_rad_s", "delta_over_omega_m", "n_final", "converged"]
    rows = [(d, d / result.omega_m, n, c)
            for d, n, c in zip(result.detunings, result.n_final, result.converged)]
    _write_table(path, header, rows)
    payload = {
        "kind": "cooling",
        "columns": header,
        "polariton_branch": result.polariton_branch,
        "omega_m_rad_s": result.omega_m,
        "E_L_rad_s": result.E_L,
        "method": result.method,
        "points": len(result.detunings),
    }
    payload.update(metadata or {})
    _write_sidecar(path, sidecar_path, payload)


def write_fock_csv(stages, path, *, metadata: dict | None = None,
                   sidecar_path=None) -> None:
    """Per-stage table of the ladder protocol plus a JSON sidecar."""
    header = ["stage", "time_s", "fidelity", "n_mech"]
    rows = [(s.stage, s.time_s, s.fidelity, s.n_mech) for s in stages]
    _write_table(path, header, rows)
    payload = {"kind": "fock", "columns": header, "stages": len(rows)}
    payload.update(metadata or {})
    _write_sidecar(path, sidecar_path, payload)


def write_ghz_csv(results, path, *, metadata: dict | None = None,
                  sidecar_path=None) -> None:
    """One row per pulse count plus a JSON sidecar (thetas included there)."""
    results = list(results)
    header = ["N_p", "beta", "P1_sim", "P1_theory", "fid_cat_odd", "fid_ghz"]
    rows = [(r.N_p, r.beta, r.P1_sim, r.P1_theory,
             r.fidelity_cat_odd, r.fidelity_ghz) for r in results]
    _write_table(path, header, rows)
    payload = {
        "kind": "ghz",
        "columns": header,
        "theta_rad": [r.theta for r in results],
    }
    payload.update(metadata or {})
    _write_sidecar(path, sidecar_path, payload)
