"""Command-line front end.

Subcommands: simulate, forces, expect, census, window, hn. Settings resolve
as built-in defaults, then a JSON ``--config`` file, then explicit flags.
Exit codes: 0 success, 2 configuration error, 3 numerical failure (JSON
detail on stderr).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import secrets
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import first_variation_variance, mc_acceleration, other_force_variance
from .errors import (
    ConfigError,
    DimensionMismatch,
    EigmotionError,
    InvalidDimension,
    InvalidMatrix,
    InvalidParams,
    InvalidWindow,
    MatrixClassMismatch,
    NonMonotoneGrid,
    NotCirculant,
    OutOfDomain,
)
from .forces import force_decomposition
from .paths import (
    IdentityDrift,
    InterpolationPencil,
    PerturbationPencil,
    diagonal_gaussian_impulse,
    evaluate_path,
    hatano_nelson,
    hatano_nelson_eigenpairs,
    make_matrix,
    normalize_2norm,
)
from .plotting import trajectory_svg
from .spectral import decompose
from .stochastic import (
    ImpulseDistribution,
    StochasticProcess,
    WindowSpec,
    expected_acceleration,
    window,
    window_derivative,
)
from .tracking import EventKind, census_ensemble, collision_events, track

COMMANDS = ("simulate", "forces", "expect", "census", "window", "hn")
PATH_KINDS = ("interp", "pencil", "drift", "hn-demo1", "hn-demo2", "smooth")
DEMO2_SPACING = 0.25

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CONFIG_ERRORS = (
    ConfigError,
    InvalidParams,
    InvalidDimension,
    InvalidMatrix,
    DimensionMismatch,
    InvalidWindow,
    NonMonotoneGrid,
    NotCirculant,
    MatrixClassMismatch,
    OutOfDomain,
)

DEFAULTS = {
    "path": "interp",
    "n": 16,
    "g": 0.2,
    "tmax": None,
    "steps": 200,
    "seed": None,
    "samples": 0,
    "epsilon": 0.01,
    "out": None,
    "svg": None,
    "threads": 1,
    "m1": None,
    "m2": None,
    "matching": "velocity",
    "t": 0.0,
    "impulse": None,
    "end_markers": None,
    "refine": True,
}

COMMAND_DEFAULTS = {
    "simulate": {"out": "eigmotion-out"},
    "census": {"n": 64, "samples": 200},
    "window": {"epsilon": 0.1, "tmax": 1.0},
    "hn": {"n": 64, "g": 1.0, "steps": 50},
}

# per path kind: (first matrix, second matrix, t_max, impulse)
PATH_DEFAULTS = {
    "interp": ("antisym", "hn:g=-0.4", 1.0, None),
    "pencil": ("orthogonal", "ginibre", 1.0, None),
    "drift": ("ginibre", None, 1.0, None),
    "hn-demo1": (None, None, 2.0, None),
    "hn-demo2": (None, None, 12.5, "unit-diag"),
    "smooth": ("hn", None, 12.5, "unit-diag"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    path: str
    n: int
    g: float
    tmax: float
    steps: int
    seed: int
    samples: int
    epsilon: float
    out: str | None
    svg: str | None
    threads: int
    m1: str | None
    m2: str | None
    matching: str
    t: float
    impulse: str | None
    end_markers: bool
    refine: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# -- configuration -----------------------------------------------------------

def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    return data


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults, the optional config file and explicit flags."""
    merged = dict(DEFAULTS)
    merged.update(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config is not None:
        merged.update(_load_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value

    kind = merged["path"]
    if kind not in PATH_KINDS:
        raise ConfigError(f"unknown path kind {kind!r}; expected one of {PATH_KINDS}")
    m1, m2, tmax, impulse = PATH_DEFAULTS[kind]
    if args.command == "expect":
        m1 = "ginibre"
        impulse = "dense"
    for key, fallback in (("m1", m1), ("m2", m2), ("tmax", tmax), ("impulse", impulse)):
        if merged[key] is None:
            merged[key] = fallback
    if merged["end_markers"] is None:
        merged["end_markers"] = kind == "interp"
    if merged["seed"] is None:
        merged["seed"] = secrets.randbelow(2**31)
        print(f"seed: {merged['seed']}", file=sys.stderr)

    try:
        cfg = ExperimentConfig(
            command=args.command,
            path=kind,
            n=int(merged["n"]),
            g=float(merged["g"]),
            tmax=float(merged["tmax"]) if merged["tmax"] is not None else 1.0,
            steps=int(merged["steps"]),
            seed=int(merged["seed"]),
            samples=int(merged["samples"]),
            epsilon=float(merged["epsilon"]),
            out=None if merged["out"] is None else str(merged["out"]),
            svg=None if merged["svg"] is None else str(merged["svg"]),
            threads=int(merged["threads"]),
            m1=merged["m1"],
            m2=merged["m2"],
            matching=str(merged["matching"]),
            t=float(merged["t"]),
            impulse=merged["impulse"],
            end_markers=bool(merged["end_markers"]),
            refine=bool(merged["refine"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad configuration value: {exc}") from exc
    if cfg.n < 2:
        raise ConfigError("n must be at least 2")
    if cfg.steps < 1:
        raise ConfigError("steps must be at least 1")
    if cfg.samples < 0:
        raise ConfigError("samples must be non-negative")
    if cfg.threads < 1:
        raise ConfigError("threads must be at least 1")
    if not cfg.tmax > 0:
        raise ConfigError("tmax must be positive")
    if cfg.matching not in ("velocity", "modulus"):
        raise ConfigError(f"unknown matching rule {cfg.matching!r}")
    return cfg


def _prepare_outputs(cfg: ExperimentConfig) -> None:
    """Create the output directory and confirm it is writable before any work."""
    targets = [Path(cfg.out)] if cfg.out is not None else []
    if cfg.svg is not None:
        targets.append(Path(cfg.svg).resolve().parent)
    for d in targets:
        try:
            d.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {d}: {exc}") from exc
        if not os.access(d, os.W_OK):
            raise ConfigError(f"output directory {d} is not writable")


# -- paths -------------------------------------------------------------------

def build_path(cfg: ExperimentConfig):
    """Matrix path and its time range for the configured path kind."""
    n, seed = cfg.n, cfg.seed
    kind = cfg.path
    if kind == "interp":
        M1 = normalize_2norm(make_matrix(cfg.m1, n, seed=[seed, 1], g=cfg.g))
        M2 = normalize_2norm(make_matrix(cfg.m2, n, seed=[seed, 2], g=cfg.g))
        return InterpolationPencil(M1, M2), 0.0, 1.0
    if kind == "pencil":
        M = make_matrix(cfg.m1, n, seed=[seed, 1], g=cfg.g)
        P = normalize_2norm(make_matrix(cfg.m2, n, seed=[seed, 2], g=cfg.g))
        return PerturbationPencil(M, P), 0.0, cfg.tmax
    if kind == "drift":
        return IdentityDrift(make_matrix(cfg.m1, n, seed=[seed, 1], g=cfg.g)), 0.0, cfg.tmax
    if kind == "hn-demo1":
        return PerturbationPencil(hatano_nelson(n, cfg.g), diagonal_gaussian_impulse(n, seed)), 0.0, cfg.tmax
    base = hatano_nelson(n, cfg.g) if kind == "hn-demo2" else make_matrix(cfg.m1, n, seed=[seed, 1], g=cfg.g)
    intervals = max(1, int(round(cfg.tmax / DEMO2_SPACING)))
    spec = WindowSpec.uniform(0.0, cfg.tmax, intervals + 1, cfg.epsilon)
    proc = StochasticProcess(base, spec, ImpulseDistribution(cfg.impulse), seed)
    if kind == "hn-demo2":
        return proc.discrete_path(), 0.0, cfg.tmax
    return proc, 0.0, cfg.tmax


# -- output helpers ----------------------------------------------------------

def _num(x: float) -> str:
    """Shortest round-trip text for a float; identical inputs give identical bytes."""
    x = float(x)
    if x == 0:
        return "0"
    return repr(x)


def _cplx(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(cfg: ExperimentConfig, name: str, text: str) -> None:
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        with open(Path(cfg.out) / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def trajectory_csv(traj, events) -> str:
    """One row per (sample, track): ``step,t,track,re,im,is_real,event``.

    ``event`` names the realization/departure events whose bracket closes at
    this sample and involve this track, joined by ``+``.
    """
    marks: dict = {}
    for ev in events:
        if ev.kind is EventKind.NEAR_DEGENERACY:
            continue
        s = int(np.searchsorted(traj.times, ev.t_hi, side="left"))
        s = min(s, traj.samples - 1)
        for a in ev.tracks:
            marks.setdefault((s, a), []).append(ev.kind.value)
    real = traj.is_real()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "t", "track", "re", "im", "is_real", "event"])
    for s in range(traj.samples):
        for a in range(traj.n):
            z = traj.positions[s, a]
            w.writerow([s, _num(traj.times[s]), a, _num(z.real), _num(z.imag),
                        int(real[s, a]), "+".join(marks.get((s, a), []))])
    return buf.getvalue()


# -- subcommands -------------------------------------------------------------

def run_simulate(cfg: ExperimentConfig) -> dict:
    path, t0, t1 = build_path(cfg)
    traj = track(path, t0, t1, cfg.steps + 1, matching=cfg.matching)
    coarse = list(traj.events)
    events = collision_events(traj, path) if cfg.refine else coarse
    counts = traj.real_counts()
    report = {
        "config": cfg.to_dict(),
        "version": __version__,
        "samples": int(traj.samples),
        "n": int(traj.n),
        "events": [e.to_dict() for e in events],
        "coarse_events": [e.to_dict() for e in coarse],
        "realizations": sum(e.kind is EventKind.REALIZATION for e in events),
        "departures": sum(e.kind is EventKind.DEPARTURE for e in events),
        "real_count_start": int(counts[0]),
        "real_count_end": int(counts[-1]),
        "low_confidence_samples": [int(s) for s in traj.low_confidence],
    }
    out = Path(cfg.out)
    with open(out / "trajectory.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(trajectory_csv(traj, events))
    with open(out / "events.json", "w", encoding="utf-8") as fh:
        fh.write(_dump_json(report))
    if cfg.svg is not None:
        title = f"{cfg.path} n={cfg.n} t=[{_num(t0)}, {_num(t1)}] seed={cfg.seed}"
        with open(cfg.svg, "w", encoding="utf-8") as fh:
            fh.write(trajectory_svg(traj.times, traj.positions, end_markers=cfg.end_markers, title=title))
    return report


def run_forces(cfg: ExperimentConfig) -> dict:
    path, _, _ = build_path(cfg)
    M, Mdot, Mddot = evaluate_path(path, cfg.t)
    sys_ = decompose(M)
    rep = force_decomposition(sys_, Mdot, Mddot)
    report = {"config": cfg.to_dict(), "t": cfg.t, "eigenvalues": rep.to_records()}
    _emit(cfg, "forces.json", _dump_json(report))
    return report


def run_expect(cfg: ExperimentConfig) -> dict:
    M = make_matrix(cfg.m1, cfg.n, seed=cfg.seed, g=cfg.g)
    sys_ = decompose(M)
    impulse = ImpulseDistribution(cfg.impulse)
    E_p2, E_p4 = impulse.moments(cfg.n)
    expected = expected_acceleration(sys_, impulse.second_moment_matrix(cfg.n))
    if impulse.diagonal:
        sigma1 = first_variation_variance(sys_, "diagonal", E_p2)
        breakdown = None
    else:
        sigma1 = first_variation_variance(sys_, "dense", E_p2)
        breakdown = other_force_variance(sys_, E_p2, E_p4)
    mc = None
    if cfg.samples > 0:
        mc, _, _ = mc_acceleration(sys_, impulse, samples=cfg.samples, seed=cfg.seed, threads=cfg.threads)
    rows = []
    for i, lam in enumerate(sys_.eigenvalues):
        row = {
            "index": i,
            "lambda": _cplx(lam),
            "cc_expected": _cplx(expected.cc[i]),
            "other_expected": _cplx(expected.other[i]),
            "sigma1_sq": float(sigma1[i]),
            "variance_breakdown": None,
            "mc_estimate": None,
            "mc_stderr": None,
            "n_samples": cfg.samples,
        }
        if breakdown is not None:
            row["variance_breakdown"] = {
                "type1": float(breakdown.type1[i]),
                "type2": float(breakdown.type2[i]),
                "type3": float(breakdown.type3[i]),
                "type4": float(breakdown.type4[i]),
                "total": float(breakdown.total[i]),
            }
        if mc is not None:
            row["mc_estimate"] = _cplx(mc.mean[i])
            row["mc_stderr"] = float(mc.stderr[i])
        rows.append(row)
    report = {"config": cfg.to_dict(), "E_p2": E_p2, "E_p4": E_p4, "eigenvalues": rows}
    _emit(cfg, "expect.json", _dump_json(report))
    return report


def run_census(cfg: ExperimentConfig) -> dict:
    if cfg.samples < 2:
        raise ConfigError("census needs at least 2 samples")
    c = census_ensemble(cfg.n, cfg.samples, cfg.seed, threads=cfg.threads)
    report = {
        "config": cfg.to_dict(),
        "n": cfg.n,
        "samples": cfg.samples,
        "mean": c.mean,
        "stderr": c.stderr,
        "reference": c.reference,
        "counts": [int(k) for k in c.counts],
    }
    _emit(cfg, "census.json", _dump_json(report))
    return report


def run_window(cfg: ExperimentConfig) -> str:
    spec = WindowSpec(np.array([0.0, cfg.tmax]), cfg.epsilon)
    ts = np.linspace(0.0, cfg.tmax, cfg.steps + 1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "w", "dw"])
    for t in ts:
        w.writerow([_num(t), _num(window(t, 0, spec)), _num(window_derivative(t, 0, spec))])
    text = buf.getvalue()
    _emit(cfg, "window.csv", text)
    return text


def run_hn(cfg: ExperimentConfig) -> str:
    """Closed-form spectrum at ``steps + 1`` values of g from 0 to ``--g``."""
    gs = np.linspace(0.0, cfg.g, cfg.steps + 1)
    spectra = np.array([hatano_nelson_eigenpairs(cfg.n, g)[0] for g in gs])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["g", "k", "re", "im"])
    for g, lam in zip(gs, spectra):
        for k, z in enumerate(lam):
            w.writerow([_num(g), k, _num(z.real), _num(z.imag)])
    text = buf.getvalue()
    _emit(cfg, "hn_spectrum.csv", text)
    if cfg.svg is not None:
        with open(cfg.svg, "w", encoding="utf-8") as fh:
            fh.write(trajectory_svg(gs, spectra, title=f"spectrum for g in [0, {_num(cfg.g)}], n={cfg.n}"))
    return text


RUNNERS = {
    "simulate": run_simulate,
    "forces": run_forces,
    "expect": run_expect,
    "census": run_census,
    "window": run_window,
    "hn": run_hn,
}


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with the same keys as the flags")
    common.add_argument("--path", choices=PATH_KINDS, help="matrix path kind")
    common.add_argument("--n", type=int, help="matrix dimension")
    common.add_argument("--g", type=float, help="hopping asymmetry of the Hatano-Nelson matrix")
    common.add_argument("--tmax", type=float, help="final time")
    common.add_argument("--steps", type=int, help="number of time steps (samples = steps + 1)")
    common.add_argument("--seed", type=int, help="root seed; generated and echoed when omitted")
    common.add_argument("--samples", type=int, help="Monte-Carlo draws or ensemble size")
    common.add_argument("--epsilon", type=float, help="boundary-layer width of the window")
    common.add_argument("--out", help="output directory (stdout when omitted, except simulate)")
    common.add_argument("--svg", help="write an SVG plot to this file")
    common.add_argument("--threads", type=int, help="worker thread cap")
    common.add_argument("--m1", help="first matrix: generator spec (e.g. hn:g=-0.4) or JSON file")
    common.add_argument("--m2", help="second matrix: generator spec or JSON file")
    common.add_argument("--matching", choices=("velocity", "modulus"), help="track matching rule")
    common.add_argument("--t", type=float, help="time for the forces report")
    common.add_argument("--impulse", choices=ImpulseDistribution.KINDS, help="random impulse law")
    common.add_argument("--end-markers", dest="end_markers", action="store_true", default=None,
                        help="mark final eigenvalues with diamonds")
    common.add_argument("--no-refine", dest="refine", action="store_false", default=None,
                        help="skip bisection of event brackets")

    p = argparse.ArgumentParser(prog="eigmotion", description="Eigenvalue motion of real matrix paths.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "track eigenvalues along a path; write CSV, events JSON and optional SVG",
        "forces": "force decomposition at one time",
        "expect": "expected forces and variances under random impulses, optional Monte-Carlo check",
        "census": "real-eigenvalue counts over a Ginibre ensemble",
        "window": "tabulate the smooth window and its derivative",
        "hn": "Hatano-Nelson spectrum as g varies",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def _error_detail(exc: Exception) -> dict:
    detail = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("gap", "condition", "t_lo", "t_hi"):
        v = getattr(exc, attr, None)
        if v is not None:
            detail[attr] = float(v) if math.isfinite(float(v)) else str(v)
    return detail


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        _prepare_outputs(cfg)
        RUNNERS[cfg.command](cfg)
    except CONFIG_ERRORS as exc:
        print(json.dumps(_error_detail(exc), sort_keys=True), file=sys.stderr)
        return EXIT_CONFIG
    except (EigmotionError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(json.dumps(_error_detail(exc), sort_keys=True), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
