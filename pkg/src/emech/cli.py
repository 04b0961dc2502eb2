"""Command line front end: runs the protocols and exports deterministic data.

Subcommands mirror the library surface (params, cool, fock, ghz, wigner).
Every run writes the CSV plus JSON sidecar of the owning module and a
manifest listing each output with its sha256, so figures can be traced
back to the exact configuration that produced them. Exit codes: 0 ok,
2 usage or configuration error, 3 finished with warnings or
unconverged points, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys
import time
import warnings
from dataclasses import asdict

import numpy as np

from . import __version__
from .analysis import wigner, write_wigner_csv
from .dynamics import IntegrationError, IntegratorSettings
from .hilbert import LayoutError, TruncationWarning, load_state, save_state
from .model import (ConfigError, RegimeWarning, params_from_dict,
                    params_to_dict, derive, polariton, preset)
from . import protocols as pro

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_WARN = 3
EXIT_NUMERICAL = 4

_TP = 2.0 * math.pi


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def _span(text: str) -> tuple[float, float, int]:
    """Parse 'lo:hi:n' into bounds and a point count."""
    parts = text.split(":")
    try:
        if len(parts) != 3:
            raise ValueError
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected lo:hi:n with n >= 1, got {text!r}") from None
    return lo, hi, n


def _dims(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(x) for x in text.split(","))
        if not out or any(d < 1 for d in out):
            raise ValueError
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated positive integers, got {text!r}") from None
    return out


def _pulses(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(x) for x in text.split(","))
        if not out:
            raise ValueError
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}") from None
    return out


def _load_params(args):
    """Resolve --preset/--config into params plus naming for the manifest."""
    if args.preset is not None:
        return preset(args.preset), args.preset
    with open(args.config) as fh:
        return params_from_dict(json.load(fh)), None


def _settings(args, **overrides) -> IntegratorSettings:
    kw = dict(overrides)
    if getattr(args, "rel_tol", None) is not None:
        kw["rel_tol"] = args.rel_tol
    if getattr(args, "abs_tol", None) is not None:
        kw["abs_tol"] = args.abs_tol
    return IntegratorSettings(**kw)


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _sha256(path) -> dict:
    with open(path, "rb") as fh:
        data = fh.read()
    return {"path": os.path.basename(str(path)),
            "sha256": hashlib.sha256(data).hexdigest(),
            "bytes": len(data)}


def _manifest(args, command, params, preset_name, dims, settings,
              convergence, extras, t0, outputs) -> int:
    """Write <out>.manifest.json; with --verify compare against the last one."""
    cfg = {"command": command, "extras": extras,
           "params": params_to_dict(params) if params is not None else None}
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    mpath = str(args.out) + ".manifest.json"
    previous = None
    if getattr(args, "verify", False):
        if not os.path.exists(mpath):
            raise ValueError(f"--verify needs an existing manifest at {mpath}")
        with open(mpath) as fh:
            previous = json.load(fh)
    doc = {
        "tool": "emech",
        "version": __version__,
        "command": command,
        "preset": preset_name,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "dims": list(dims) if dims is not None else None,
        "integrator": {k: (v if not isinstance(v, float) or math.isfinite(v)
                           else None)
                       for k, v in asdict(settings).items()}
                      if settings is not None else None,
        "convergence": convergence,
        "wall_s": round(time.monotonic() - t0, 3),
        "outputs": [_sha256(p) for p in outputs],
    }
    with open(mpath, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if previous is not None:
        old = {o["path"]: o["sha256"] for o in previous.get("outputs", [])}
        new = {o["path"]: o["sha256"] for o in doc["outputs"]}
        bad = sorted(k for k in set(old) | set(new) if old.get(k) != new.get(k))
        if bad:
            print("verify: checksum mismatch: " + ", ".join(bad), file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"verify: {len(new)} outputs reproduced byte-identically")
    return EXIT_OK


# ---------------------------------------------------------------------------
# params
# ---------------------------------------------------------------------------

_ANGULAR_SYS = ("E_C", "g0", "Omega_m", "omega_c", "kappa_c",
                "gamma_t", "gamma_phi")
_PLAIN_SYS = ("zeta", "n_ac", "Q_m", "T")
_ANGULAR_DERIVED = ("omega_t", "lam", "chi", "g_t", "g_tc", "g_c",
                    "Gamma_m", "Delta")
_ANGULAR_POL = ("omega_plus", "omega_minus", "g_plus", "g_minus",
                "G_threebody", "lambda_plus", "lambda_minus", "Lambda0",
                "delta_plus", "delta_minus")


def _print_block(title: str, obj, angular, plain=()) -> None:
    print(title)
    for name in plain:
        print(f"  {name:<12} {getattr(obj, name):.6g}")
    for name in angular:
        v = getattr(obj, name)
        print(f"  {name:<12} {v: .6e} rad/s   ({v / _TP: .6e} Hz)")


def cmd_params(args) -> int:
    t0 = time.monotonic()
    params, preset_name = _load_params(args)
    d = derive(params)
    src = preset_name or os.path.basename(args.config)
    _print_block(f"system parameters ({src})", params, _ANGULAR_SYS, _PLAIN_SYS)
    print(f"  {'drive E_L':<12} {params.drive.E_L: .6e} rad/s   "
          f"({params.drive.E_L / _TP: .6e} Hz)")
    print(f"  {'drive omega_L':<12} {params.drive.omega_L: .6e} rad/s")
    _print_block("derived coefficients", d, _ANGULAR_DERIVED)
    print(f"  {'n_bar':<12} {d.n_bar:.6g}")
    pp = polariton(params)
    _print_block("polariton modes (configured drive carrier)", pp,
                 _ANGULAR_POL, ("alpha_plus", "alpha_minus"))
    tuned = pro.tune_to_resonance(params)
    ppr = polariton(tuned)
    _print_block("polariton modes at the tuned resonance "
                 "(splitting = Omega_m)", ppr, _ANGULAR_POL,
                 ("alpha_plus", "alpha_minus"))
    print(f"  via zeta = {tuned.zeta:.6g}, n_ac = {tuned.n_ac:.6g}")

    if args.out:
        doc = {
            "system": params_to_dict(params),
            "derived": asdict(d),
            "polariton": asdict(pp),
            "resonance": {"zeta": tuned.zeta, "n_ac": tuned.n_ac,
                          "polariton": asdict(ppr)},
        }
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return _manifest(args, "params", params, preset_name, None, None,
                         "closed-form evaluation", {}, t0, [args.out])
    return EXIT_OK


# ---------------------------------------------------------------------------
# cool
# ---------------------------------------------------------------------------

def _resolve_drive(args, params) -> float:
    if args.drive_rad is not None:
        return args.drive_rad
    if args.occupation == 0.0:
        return 0.0
    return pro.default_drive_amplitude(params, args.branch,
                                       occupation=args.occupation)


def cmd_cool(args) -> int:
    t0 = time.monotonic()
    params, preset_name = _load_params(args)
    lo, hi, n = args.sweep
    grid = np.linspace(lo, hi, n) * params.Omega_m
    e_l = _resolve_drive(args, params)
    settings = _settings(args)
    rule = (f"window-mean relative change < {args.eps:g} over {args.window!r} s"
            if args.method == "evolve" else "stationary solve (sparse LU)")
    result = pro.cooling_sweep(
        params, args.branch, grid, args.dims, settings,
        method=args.method, model=args.model, E_L=e_l,
        n_init=args.n_init, window=args.window, eps=args.eps,
        t_max=args.t_max, jobs=args.jobs)
    meta = {"preset": preset_name, "dims": list(args.dims),
            "model": args.model, "occupation": args.occupation,
            "convergence": rule}
    pro.write_cooling_csv(result, args.out, metadata=meta)
    code = _manifest(args, "cool", params, preset_name, args.dims, settings,
                     rule, {"branch": args.branch, "sweep": list(args.sweep),
                            "model": args.model, "E_L_rad_s": e_l}, t0,
                     [args.out, str(args.out) + ".json"])
    if not all(result.converged):
        bad = sum(1 for c in result.converged if not c)
        print(f"{bad} of {len(result.converged)} points did not converge; "
              "partial results written", file=sys.stderr)
        return EXIT_WARN
    return code


# ---------------------------------------------------------------------------
# fock
# ---------------------------------------------------------------------------

def cmd_fock(args) -> int:
    t0 = time.monotonic()
    params, preset_name = _load_params(args)
    tuned = pro.tune_to_resonance(params)
    dims = args.dims or (3, 3, args.n + 6)
    settings = _settings(args)
    cooled_delta = None
    if args.start == "cooled":
        frac = -1.95 if args.cooled_delta is None else args.cooled_delta
        cooled_delta = frac * tuned.Omega_m
    rho_m, stages = pro.prepare_fock(
        tuned, args.n, dims, settings, start=args.start,
        cooled_delta=cooled_delta)
    meta = {"preset": preset_name, "dims": list(dims), "start": args.start,
            "n_target": args.n,
            "cooled_delta_rad_s": cooled_delta,
            "tuned": {"zeta": tuned.zeta, "n_ac": tuned.n_ac}}
    pro.write_fock_csv(stages, args.out, metadata=meta)
    outputs = [args.out, str(args.out) + ".json"]
    if args.save_state:
        save_state(rho_m, args.save_state)
        outputs.append(args.save_state)
    print(f"final fidelity {stages[-1].fidelity:.4f} "
          f"(n_mech = {stages[-1].n_mech:.4f})")
    return _manifest(args, "fock", params, preset_name, dims, settings,
                     "fixed segment durations, adaptive stepping",
                     {"n": args.n, "start": args.start}, t0, outputs)


# ---------------------------------------------------------------------------
# ghz
# ---------------------------------------------------------------------------

def cmd_ghz(args) -> int:
    t0 = time.monotonic()
    params, preset_name = _load_params(args)
    even = [n for n in args.pulses if n % 2 == 0 or n < 1]
    if even:
        print(f"error: pulse counts must be odd and positive, got {even}; "
              "even trains leave a branch phase this table does not carry "
              "(library API only)", file=sys.stderr)
        return EXIT_USAGE
    g_t = derive(params).g_t
    settings = _settings(args)
    results = []
    dims_used = []
    for n_p in args.pulses:
        if args.dims is not None:
            dims = args.dims
        else:
            beta = (n_p + 1) * g_t / params.Omega_m
            dims = (3, 2, int(math.ceil(beta * beta + 6.0 * beta + 10.0)) + 1)
        dims_used.append(list(dims))
        results.append(pro.prepare_ghz(params, n_p, dims, settings))
    meta = {"preset": preset_name, "dims": dims_used,
            "pulses": list(args.pulses)}
    pro.write_ghz_csv(results, args.out, metadata=meta)
    for r in results:
        print(f"N_p = {r.N_p}: P1_sim = {r.P1_sim:.4f} "
              f"(theory {r.P1_theory:.4f}), cat fidelity "
              f"{r.fidelity_cat_odd:.4f}")
    return _manifest(args, "ghz", params, preset_name, dims_used[-1],
                     settings, "fixed segment durations, adaptive stepping",
                     {"pulses": list(args.pulses)}, t0,
                     [args.out, str(args.out) + ".json"])


# ---------------------------------------------------------------------------
# wigner
# ---------------------------------------------------------------------------

def cmd_wigner(args) -> int:
    t0 = time.monotonic()
    state = load_state(args.load_state)
    if state.layout.nmodes > 1:
        if args.mode is None:
            print("error: the stored state has several modes; pick one "
                  "with --mode", file=sys.stderr)
            return EXIT_USAGE
        from .hilbert import partial_trace
        state = partial_trace(state.to_density(), args.mode)
    elif args.mode is not None and args.mode not in state.layout.labels:
        print(f"error: stored state has no mode {args.mode!r}; it holds "
              f"{state.layout.labels}", file=sys.stderr)
        return EXIT_USAGE
    lo, hi, n = args.grid
    axis = np.linspace(lo, hi, n)
    wmap = wigner(state, axis, axis)
    write_wigner_csv(wmap, args.out)
    print(f"W spans [{wmap.values.min():.6f}, {wmap.values.max():.6f}], "
          f"normalization {wmap.normalization():.6f}")
    return _manifest(args, "wigner", None, None, state.layout.dims, None,
                     "grid evaluation (no integration)",
                     {"grid": list(args.grid), "mode": args.mode,
                      "state": os.path.basename(str(args.load_state))},
                     t0, [args.out, str(args.out) + ".json"])


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emech",
        description="Electromechanical protocol runner: parameter tables, "
                    "sideband cooling sweeps, phonon Fock preparation, "
                    "tripartite entanglement and Wigner maps.")
    parser.add_argument("--version", action="version",
                        version=f"emech {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    src = argparse.ArgumentParser(add_help=False)
    grp = src.add_mutually_exclusive_group(required=True)
    grp.add_argument("--preset", choices=("set1", "set2"),
                     help="tabulated operating point")
    grp.add_argument("--config", help="JSON file of system parameters")

    tol = argparse.ArgumentParser(add_help=False)
    tol.add_argument("--rel-tol", type=float, default=None)
    tol.add_argument("--abs-tol", type=float, default=None)

    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", required=True, help="output CSV path")
    out.add_argument("--verify", action="store_true",
                     help="compare fresh checksums against the existing "
                          "manifest; mismatch exits 4")

    p = sub.add_parser("params", parents=[src],
                       help="print system, derived and polariton parameters")
    p.add_argument("--out", default=None, help="also write them as JSON")
    p.add_argument("--verify", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_params)

    c = sub.add_parser("cool", parents=[src, out, tol],
                       help="final phonon number over a drive-detuning sweep")
    c.add_argument("--branch", choices=("+", "-"), default="+")
    c.add_argument("--sweep", type=_span, default=(-1.5, -0.5, 21),
                   metavar="LO:HI:N",
                   help="detuning grid in units of Omega_m (default "
                        "-1.5:-0.5:21)")
    c.add_argument("--dims", type=_dims, default=(2, 30),
                   help="mode dimensions, e.g. 2,30 (reduced) or 3,3,10 "
                        "(full3)")
    c.add_argument("--method", choices=("steady", "evolve"), default="steady")
    c.add_argument("--model", choices=("reduced", "full3"), default="reduced")
    c.add_argument("--occupation", type=float, default=0.1,
                   help="target steady branch population setting the drive "
                        "(0 disables the drive)")
    c.add_argument("--drive-rad", type=float, default=None,
                   help="drive amplitude in rad/s, overriding --occupation")
    c.add_argument("--n-init", type=float, default=None,
                   help="initial mechanical occupation (evolve method)")
    c.add_argument("--window", type=float, default=None,
                   help="stationarity window in seconds (evolve method)")
    c.add_argument("--eps", type=float, default=5e-3)
    c.add_argument("--t-max", type=float, default=None)
    c.add_argument("--jobs", type=int,
                   default=int(os.environ.get("EMECH_JOBS", "1")))
    c.set_defaults(func=cmd_cool)
    # let bare negative spans like -1.5:-0.5:21 pass as values, not flags
    c._negative_number_matcher = re.compile(r"^-\d[\d.:eE+-]*$")

    f = sub.add_parser("fock", parents=[src, out, tol],
                       help="climb the mechanical Fock ladder")
    f.add_argument("--n", type=int, required=True, help="target phonon number")
    f.add_argument("--start", choices=("ideal", "cooled"), default="ideal")
    f.add_argument("--dims", type=_dims, default=None,
                   help="three mode dimensions (default 3,3,n+6)")
    f.add_argument("--cooled-delta", type=float, default=None,
                   help="cooling detuning in units of Omega_m; default "
                        "-1.95, the deep stationary-model sideband at "
                        "the standard drive")
    f.add_argument("--save-state", default=None,
                   help="write the final mechanical state as JSON")
    f.set_defaults(func=cmd_fock)

    g = sub.add_parser("ghz", parents=[src, out, tol],
                       help="tripartite entanglement over pulse counts")
    g.add_argument("--pulses", type=_pulses, default=(1, 3, 5, 7),
                   help="comma-separated odd pulse counts")
    g.add_argument("--dims", type=_dims, default=None,
                   help="three mode dimensions (default sized per pulse "
                        "count)")
    g.set_defaults(func=cmd_ghz)

    w = sub.add_parser("wigner", parents=[out],
                       help="Wigner map of a stored state")
    w.add_argument("--load-state", required=True,
                   help="state JSON written by fock --save-state")
    w.add_argument("--mode", default=None,
                   help="mode label to trace down to (multi-mode states)")
    w.add_argument("--grid", type=_span, default=(-4.0, 4.0, 81),
                   metavar="LO:HI:N", help="phase-space axis (both x and p)")
    w.set_defaults(func=cmd_wigner)
    w._negative_number_matcher = re.compile(r"^-\d[\d.:eE+-]*$")
    f._negative_number_matcher = re.compile(r"^-\d[\d.:eE+-]*$")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = args.func(args)
        except (ConfigError, pro.ProtocolError, LayoutError, ValueError,
                OSError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except (IntegrationError, FloatingPointError,
                np.linalg.LinAlgError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
    noted = [w for w in caught
             if issubclass(w.category, (RegimeWarning, TruncationWarning))]
    for w in noted:
        print(f"warning: {w.message}", file=sys.stderr)
    if code == EXIT_OK and noted:
        return EXIT_WARN
    return code


if __name__ == "__main__":
    sys.exit(main())
