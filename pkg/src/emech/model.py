"""Parameters, derived couplings, and Hamiltonian assembly.

Everything inside the package is angular (rad/s); temperatures are kelvin.
Config files may speak ordinary frequency through ``*_hz`` fields, which are
multiplied by 2*pi on ingest, or pass angular values directly as ``*_rad``.
The composite Hilbert space always orders modes (transmon, cavity, mech).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .hilbert import (
    LayoutError,
    ModeLayout,
    QOperator,
    mode_lowering,
    number_operator,
)

HBAR = 1.054571817e-34  # J s
KB = 1.380649e-23  # J / K

_TWO_PI = 2.0 * math.pi

MODE_LABELS = ("transmon", "cavity", "mech")

PRESET_NAMES = ("set1", "set2")


class ConfigError(ValueError):
    """A parameter config is missing fields, double-specified, or invalid."""


class RegimeWarning(UserWarning):
    """Parameters fall outside the regime the model expansion assumes."""


@dataclass(frozen=True)
class DriveParams:
    """Coherent cavity drive: amplitude ``E_L`` and carrier ``omega_L`` (rad/s)."""

    E_L: float = 0.0
    omega_L: float = 0.0

    def __post_init__(self) -> None:
        for name in ("E_L", "omega_L"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ConfigError(f"drive.{name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True)
class SystemParams:
    """Bare device parameters.

    zeta is the Josephson-to-charging energy ratio; E_C, g0, Omega_m,
    omega_c are angular frequencies; kappa_c, gamma_t, gamma_phi are
    angular rates; Q_m is the mechanical quality factor; T is the bath
    temperature in kelvin. omega_c is the effective cavity frequency
    (already containing the ac-charge shift, see params_from_dict).
    """

    zeta: float
    E_C: float
    g0: float
    n_ac: float
    Omega_m: float
    omega_c: float
    kappa_c: float
    gamma_t: float
    gamma_phi: float
    Q_m: float
    T: float
    drive: DriveParams = field(default_factory=DriveParams)

    def __post_init__(self) -> None:
        problems = []
        if not (math.isfinite(self.zeta) and self.zeta > 1.0):
            problems.append(f"zeta must exceed 1, got {self.zeta!r}")
        for name in ("E_C", "g0", "n_ac", "Omega_m", "omega_c",
                     "kappa_c", "gamma_t", "gamma_phi", "T"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                problems.append(f"{name} must be finite and >= 0, got {v!r}")
        if not (math.isfinite(self.Q_m) and self.Q_m > 0.0):
            problems.append(f"Q_m must be positive, got {self.Q_m!r}")
        if problems:
            raise ConfigError("; ".join(problems))
        if self.zeta < 20.0:
            warnings.warn(
                f"zeta = {self.zeta:g} is small; the quartic oscillator "
                "expansion assumes zeta well above 1",
                RegimeWarning, stacklevel=2)


@dataclass(frozen=True)
class DerivedParams:
    """Coefficients of the working Hamiltonian, angular except ``n_bar``.

    ``lam`` is the transmon self-Kerr (Duffing) coefficient E_C/2.
    """

    omega_t: float
    lam: float
    chi: float
    g_t: float
    g_tc: float
    g_c: float
    Gamma_m: float
    n_bar: float
    Delta: float


@dataclass(frozen=True)
class PolaritonParams:
    """Coefficients after hybridizing the transmon and cavity modes.

    Conventions: p+ = alpha_plus a - i alpha_minus c and
    p- = alpha_minus a + i alpha_plus c with both amplitudes real and
    non-negative. ``G_threebody`` multiplies (p+^dag p- + h.c.)(b + b^dag)
    and carries the sign this mixing produces. delta_plus/minus are the
    drive detunings omega_L - omega_plus/minus.
    """

    alpha_plus: float
    alpha_minus: float
    omega_plus: float
    omega_minus: float
    g_plus: float
    g_minus: float
    G_threebody: float
    lambda_plus: float
    lambda_minus: float
    Lambda0: float
    delta_plus: float
    delta_minus: float

    def __post_init__(self) -> None:
        if self.alpha_plus < 0.0 or self.alpha_minus < 0.0:
            raise ValueError("mixing amplitudes are defined non-negative")
        if abs(self.alpha_plus**2 + self.alpha_minus**2 - 1.0) > 1e-12:
            raise ValueError("mixing amplitudes must satisfy a+^2 + a-^2 = 1")


def bose_occupation(omega: float, temperature: float) -> float:
    """Mean thermal occupation of a mode at angular frequency ``omega``."""
    if omega <= 0.0:
        raise ValueError(f"bose_occupation needs omega > 0, got {omega!r}")
    if temperature <= 0.0:
        return 0.0
    return 1.0 / math.expm1(HBAR * omega / (KB * temperature))


def derive(params: SystemParams) -> DerivedParams:
    """Evaluate the coupling formulas for the given bare parameters.

    Pure and deterministic: identical inputs give bitwise-identical
    outputs.
    """
    z = params.zeta
    ec = params.E_C
    quart = (0.5 * z) ** 0.25
    omega_t = ec * (math.sqrt(8.0 * z) - 1.0)
    return DerivedParams(
        omega_t=omega_t,
        lam=0.5 * ec,
        chi=4.0 * ec * params.n_ac * quart,
        g_t=params.g0 * math.sqrt(2.0 * z),
        g_tc=4.0 * params.g0 * params.n_ac * quart,
        g_c=8.0 * params.g0 * params.n_ac**2,
        Gamma_m=params.Omega_m / params.Q_m,
        n_bar=bose_occupation(params.Omega_m, params.T),
        Delta=omega_t - params.omega_c,
    )


def preset(name: str) -> SystemParams:
    """Built-in parameter sets "set1" and "set2".

    Both place the cavity exactly at the bare transmon frequency of the
    quoted zeta (so Delta = 0 there) and leave the drive off; protocols
    choose their own drive.
    """
    if name == "set1":
        zeta = 150.0
        return SystemParams(
            zeta=zeta,
            E_C=_TWO_PI * 0.5e9,
            g0=_TWO_PI * 18.2e3,
            n_ac=8.5e-4,
            Omega_m=_TWO_PI * 10e6,
            omega_c=_TWO_PI * 0.5e9 * (math.sqrt(8.0 * zeta) - 1.0),
            kappa_c=_TWO_PI * 10e3,
            gamma_t=_TWO_PI * 3e3,
            gamma_phi=_TWO_PI * 6e3,
            Q_m=1e6,
            T=0.010,
        )
    if name == "set2":
        zeta = 142.0
        return SystemParams(
            zeta=zeta,
            E_C=_TWO_PI * 0.5e9,
            g0=_TWO_PI * 20.6e3,
            n_ac=1.4e-2,
            Omega_m=_TWO_PI * 1e6,
            omega_c=_TWO_PI * 0.5e9 * (math.sqrt(8.0 * zeta) - 1.0),
            kappa_c=_TWO_PI * 50e3,
            gamma_t=_TWO_PI * 5e3,
            gamma_phi=_TWO_PI * 10e3,
            Q_m=1e6,
            T=0.005,
        )
    raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")


_ANGULAR_FIELDS = ("E_C", "g0", "Omega_m", "kappa_c", "gamma_t", "gamma_phi")
_KNOWN_TOP = {"zeta", "n_ac", "Q_m", "T_K", "drive"} | {
    f"{base}_{suffix}" for base in _ANGULAR_FIELDS + ("omega_c", "omega_c_bare")
    for suffix in ("hz", "rad")
}
_KNOWN_DRIVE = {f"{base}_{suffix}" for base in ("E_L", "omega_L")
                for suffix in ("hz", "rad")}


def _read_angular(cfg: Mapping[str, Any], base: str, problems: list[str],
                  required: bool = True) -> float:
    """One angular quantity from either its _hz or its _rad spelling."""
    hz, rad = f"{base}_hz", f"{base}_rad"
    if hz in cfg and rad in cfg:
        problems.append(f"give exactly one of {hz} and {rad}, not both")
        return 0.0
    if hz in cfg:
        return _TWO_PI * float(cfg[hz])
    if rad in cfg:
        return float(cfg[rad])
    if required:
        problems.append(f"missing field: {hz} (or {rad})")
    return 0.0


def _read_plain(cfg: Mapping[str, Any], name: str, problems: list[str]) -> float:
    if name not in cfg:
        problems.append(f"missing field: {name}")
        return 0.0
    return float(cfg[name])


def params_from_dict(cfg: Mapping[str, Any]) -> SystemParams:
    """Build SystemParams from a JSON-style mapping.

    The cavity may be given effective (``omega_c_hz``/``omega_c_rad``) or
    bare (``omega_c_bare_hz``/``omega_c_bare_rad``); in the bare case the
    ac-charge shift 8 E_C n_ac^2 is added to produce the effective
    frequency. All problems are collected and reported together in one
    ConfigError.
    """
    problems: list[str] = []
    unknown = sorted(set(cfg) - _KNOWN_TOP)
    if unknown:
        problems.append(f"unrecognized fields: {', '.join(unknown)}")

    zeta = _read_plain(cfg, "zeta", problems)
    n_ac = _read_plain(cfg, "n_ac", problems)
    q_m = _read_plain(cfg, "Q_m", problems)
    t_k = _read_plain(cfg, "T_K", problems)
    e_c = _read_angular(cfg, "E_C", problems)
    g0 = _read_angular(cfg, "g0", problems)
    omega_m = _read_angular(cfg, "Omega_m", problems)
    kappa_c = _read_angular(cfg, "kappa_c", problems)
    gamma_t = _read_angular(cfg, "gamma_t", problems)
    gamma_phi = _read_angular(cfg, "gamma_phi", problems)

    has_eff = "omega_c_hz" in cfg or "omega_c_rad" in cfg
    has_bare = "omega_c_bare_hz" in cfg or "omega_c_bare_rad" in cfg
    if has_eff and has_bare:
        problems.append("give omega_c either effective or bare, not both")
        omega_c = 0.0
    elif has_bare:
        omega_c = _read_angular(cfg, "omega_c_bare", problems) + 8.0 * e_c * n_ac**2
    else:
        omega_c = _read_angular(cfg, "omega_c", problems)

    drive_cfg = cfg.get("drive", {})
    if not isinstance(drive_cfg, Mapping):
        problems.append("drive must be an object with E_L_*/omega_L_* fields")
        drive_cfg = {}
    unknown_drive = sorted(set(drive_cfg) - _KNOWN_DRIVE)
    if unknown_drive:
        problems.append(f"unrecognized drive fields: {', '.join(unknown_drive)}")
    e_l = _read_angular(drive_cfg, "E_L", problems, required=False)
    omega_l = _read_angular(drive_cfg, "omega_L", problems, required=False)

    if problems:
        raise ConfigError("; ".join(problems))
    return SystemParams(
        zeta=zeta, E_C=e_c, g0=g0, n_ac=n_ac, Omega_m=omega_m,
        omega_c=omega_c, kappa_c=kappa_c, gamma_t=gamma_t,
        gamma_phi=gamma_phi, Q_m=q_m, T=t_k,
        drive=DriveParams(E_L=e_l, omega_L=omega_l),
    )


def params_to_dict(params: SystemParams) -> dict[str, Any]:
    """Canonical JSON form (angular values, ``_rad`` fields); round-trips
    through params_from_dict."""
    return {
        "zeta": params.zeta,
        "E_C_rad": params.E_C,
        "g0_rad": params.g0,
        "n_ac": params.n_ac,
        "Omega_m_rad": params.Omega_m,
        "omega_c_rad": params.omega_c,
        "kappa_c_rad": params.kappa_c,
        "gamma_t_rad": params.gamma_t,
        "gamma_phi_rad": params.gamma_phi,
        "Q_m": params.Q_m,
        "T_K": params.T,
        "drive": {"E_L_rad": params.drive.E_L,
                  "omega_L_rad": params.drive.omega_L},
    }


def standard_layout(dims: Sequence[int]) -> ModeLayout:
    """Three-mode layout in the fixed (transmon, cavity, mech) order."""
    if len(dims) != 3:
        raise LayoutError(f"expected 3 mode dimensions, got {len(dims)}")
    return ModeLayout(tuple(int(d) for d in dims), MODE_LABELS)


def _assemble(params: SystemParams, layout: ModeLayout, carrier_shift: float,
              static_drive: float, include_gc: bool) -> QOperator:
    """Shared body of the lab- and drive-frame builders."""
    if layout.nmodes != 3:
        raise LayoutError("Hamiltonian builders need a 3-mode layout")
    d = derive(params)
    a = mode_lowering(layout, 0)
    c = mode_lowering(layout, 1)
    b = mode_lowering(layout, 2)
    ad, cd, bd = a.dag(), c.dag(), b.dag()
    n_t = number_operator(layout, 0)
    n_c = number_operator(layout, 1)
    n_b = number_operator(layout, 2)
    swap = a @ cd - ad @ c  # anti-Hermitian; enters with an i in front
    x_b = b + bd
    h = (
        (d.omega_t - carrier_shift) * n_t
        - d.lam * ((ad @ ad) @ (a @ a))
        + params.Omega_m * n_b
        + (params.omega_c - carrier_shift) * n_c
        + 1j * d.chi * swap
        + d.g_t * (n_t @ x_b)
        + 1j * d.g_tc * (swap @ x_b)
    )
    if include_gc:
        h = h + d.g_c * (n_c @ x_b)
    if static_drive != 0.0:
        h = h + static_drive * (c + cd)
    return h


def hamiltonian_lab(params: SystemParams, layout: ModeLayout, *,
                    include_gc: bool = False) -> QOperator:
    """Time-independent lab-frame Hamiltonian (drive excluded).

    The drive oscillates at omega_L in this frame; integrate it either in
    the drive frame (hamiltonian_rotating) or by piecewise-constant
    scheduling. The cavity-mechanics coupling g_c is negligible for the
    built-in parameter sets and is off unless ``include_gc`` is set.
    """
    return _assemble(params, layout, 0.0, 0.0, include_gc)


def hamiltonian_rotating(params: SystemParams, layout: ModeLayout, *,
                         include_gc: bool = False) -> QOperator:
    """Drive-frame Hamiltonian: carriers shifted down by omega_L, drive static.

    Transmon and cavity frequencies are replaced by their detunings from
    the drive and the drive becomes the static term E_L (c + c^dag). The
    transformation is exact for the rotating-wave drive, so spectra agree
    with the lab builder shifted by omega_L per transmon+cavity excitation.
    """
    return _assemble(params, layout, params.drive.omega_L,
                     params.drive.E_L, include_gc)


def polariton(params: SystemParams, omega_L: float | None = None) -> PolaritonParams:
    """Coefficients in the hybridized transmon/cavity basis.

    The mixing amplitudes diagonalize the beamsplitter coupling. The sign
    of ``G_threebody`` follows from the operator algebra of the mixing
    convention stated on PolaritonParams; only its magnitude is
    convention-free. ``omega_L`` defaults to the configured drive carrier.
    """
    d = derive(params)
    if d.chi == 0.0 and d.Delta == 0.0:
        raise ValueError("mixing undefined at chi = 0 and Delta = 0 "
                         "(degenerate modes with no coupling)")
    s = math.hypot(d.Delta, 2.0 * d.chi)
    ap = math.sqrt(0.5 * (1.0 + d.Delta / s))
    am = math.sqrt(0.5 * (1.0 - d.Delta / s))
    lam = d.lam
    wl = params.drive.omega_L if omega_L is None else omega_L
    omega_plus = ap**2 * d.omega_t + am**2 * params.omega_c + 2.0 * ap * am * d.chi
    omega_minus = am**2 * d.omega_t + ap**2 * params.omega_c - 2.0 * ap * am * d.chi
    return PolaritonParams(
        alpha_plus=ap,
        alpha_minus=am,
        omega_plus=omega_plus,
        omega_minus=omega_minus,
        g_plus=ap**2 * d.g_t + am**2 * d.g_c + 2.0 * ap * am * d.g_tc,
        g_minus=am**2 * d.g_t + ap**2 * d.g_c - 2.0 * ap * am * d.g_tc,
        G_threebody=ap * am * (d.g_t - d.g_c) - (ap**2 - am**2) * d.g_tc,
        lambda_plus=ap**4 * lam,
        lambda_minus=am**4 * lam,
        Lambda0=4.0 * lam * ap**2 * am**2,
        delta_plus=wl - omega_plus,
        delta_minus=wl - omega_minus,
    )


def interpolariton_hamiltonian(pp: PolaritonParams, layout2: ModeLayout) -> QOperator:
    """Quartic (Kerr) term of the hybridized pair, all families included.

    This is the complete transmon self-Kerr rewritten in the mixed basis:
    the two self terms, the cross-intensity term, the pair-exchange term,
    and the two single-exchange pairs. Because the self terms are already
    here, combining with the quadratic part must not add separate
    polariton Kerr terms; on blocks untouched by truncation the result is
    unitarily equivalent to the original quartic.
    """
    if layout2.nmodes != 2:
        raise LayoutError("interpolariton term needs a 2-mode layout")
    # E_C is recoverable from the advertised coefficients:
    # lambda_plus + lambda_minus + Lambda0/2 = E_C/2 exactly.
    ec = 2.0 * (pp.lambda_plus + pp.lambda_minus + 0.5 * pp.Lambda0)
    u, v = pp.alpha_plus, pp.alpha_minus
    p = mode_lowering(layout2, 0)
    q = mode_lowering(layout2, 1)
    pd, qd = p.dag(), q.dag()
    self_p = pd @ pd @ p @ p
    self_q = qd @ qd @ q @ q
    cross = pd @ p @ qd @ q
    pair = pd @ pd @ q @ q
    single_p = pd @ pd @ p @ q  # plus h.c. below
    single_q = pd @ qd @ q @ q  # plus h.c. below
    h = (
        u**4 * self_p
        + v**4 * self_q
        + 4.0 * u**2 * v**2 * cross
        + u**2 * v**2 * (pair + pair.dag())
        + 2.0 * u**3 * v * (single_p + single_p.dag())
        + 2.0 * u * v**3 * (single_q + single_q.dag())
    )
    return (-0.5 * ec) * h
