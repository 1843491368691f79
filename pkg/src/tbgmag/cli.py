"""Command-line driver: ``tbgmag <subcommand> --config run.json``.

A run is configured by one JSON document with the sections ``model``,
``field``, ``numeric``, ``task`` and ``output``.  Missing keys take the
defaults below, unknown keys are rejected, and the fully resolved document
is embedded in every output file.  Exit codes: 0 ok, 2 configuration error,
3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from functools import partial
from typing import Any, Callable

import numpy as np

from . import __version__
from .dos import DOSModel, GapClosedError, SupportError, dtrace_dB, gaussian, fermi_dirac, plateau, trace
from .landau_special import MagneticTorus, annihilation_residual, periodic_zero_mode, psi_bloch, translation_residual
from .lattice import MoireLattice, cell_grid
from .potentials import TunnelingModel
from .response import (
    ThermoParams,
    hall_antichiral,
    hall_chiral_explicit,
    hall_staircase,
    hall_streda,
    magnetization,
    sigma_xx,
    susceptibility,
    sweep,
)
from .spectra import (
    SingularResolventError,
    birman_schwinger_spectrum,
    flat_band_scan,
    squeezing_study,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("magic", "bands", "squeeze", "zeromode", "dos", "sdh", "dhva", "qhe")
FIGURE_MODELS = ["free", "chiral", "antichiral"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


BASE_DEFAULTS: dict[str, dict[str, Any]] = {
    "model": {
        "kind": "chiral",
        "alpha0": 1.0,
        "alpha1": 1.0,
        "theta": 0.0,
        "beta": {"1": 1.0},
        "gamma": {"1": 1.0},
        "antichiral_sign": 1,
    },
    "field": {"B": 30.0, "A": [], "k": [0.123, 0.05]},
    "numeric": {"grid_m": 64, "delta": 0.125, "band_cutoff": 10, "strict": False},
    "output": {"format": "csv", "path": None},
}

TASK_DEFAULTS: dict[str, dict[str, Any]] = {
    "magic": {"N": 24, "radius": 2.5, "convergence_check": True},
    "bands": {"N": 16, "grid_n": 6},
    "squeeze": {"thetas": [0.20, 0.16, 0.12, 0.10, 0.08], "N": None},
    "zeromode": {"kind": "landau", "n": 0, "lambda_scale": 1, "samples": 16, "variant": "dzbar"},
    "dos": {
        "test_function": {"type": "gaussian", "mu": 10.0, "sigma": 1.0},
        "B_values": [30.0, 50.0, 100.0],
        "derivative": False,
    },
    "sdh": {"beta": 1.5, "mu_min": 0.0, "mu_max": 16.0, "points": 400, "models": FIGURE_MODELS, "smoothing_sigma": 1.0},
    "dhva": {"beta": 4.0, "mu": 5.0, "invB_min": 0.02, "invB_max": 0.3, "points": 120, "models": FIGURE_MODELS, "susceptibility": True},
    "qhe": {
        "beta": 2.0,
        "mu_min": -16.0,
        "mu_max": 16.0,
        "points": 321,
        "models": FIGURE_MODELS,
        "staircase_beta": 200.0,
        "staircase_B": 50.0,
    },
}

def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_value(section: str, key: str, value, default) -> None:
    where = f"{section}.{key}"
    if default is None:
        if value is not None and not _is_num(value):
            raise ConfigError(f"{where} must be a number or null")
    elif isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
    elif _is_num(default):
        if not _is_num(value):
            raise ConfigError(f"{where} must be a number")
        if isinstance(default, int) and not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        if not math.isfinite(value):
            raise ConfigError(f"{where} must be finite")
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
    elif isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be an object")


def resolve_config(command: str, raw: dict | None) -> dict:
    """Merge ``raw`` over the defaults of ``command``, rejecting unknown keys."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    defaults = copy.deepcopy(BASE_DEFAULTS)
    defaults["task"] = copy.deepcopy(TASK_DEFAULTS[command])
    for section, body in raw.items():
        if section not in defaults:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, value in body.items():
            if key not in defaults[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            _check_value(section, key, value, defaults[section][key])
            defaults[section][key] = value
    _validate(command, defaults)
    return defaults


def _complex(v, where: str) -> complex:
    if _is_num(v):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(_is_num(x) for x in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{where} must be a number or a [re, im] pair")


def _coeffs(table: dict, where: str) -> dict[int, complex]:
    out = {}
    for k, v in table.items():
        try:
            n = int(k)
        except ValueError as exc:
            raise ConfigError(f"{where} key {k!r} is not an integer") from exc
        out[n] = _complex(v, f"{where}[{k}]")
    return out


def _field_A(cfg: dict) -> dict[tuple[int, int], complex] | None:
    out = {}
    for i, row in enumerate(cfg["field"]["A"]):
        if not (isinstance(row, list) and len(row) in (3, 4) and all(_is_num(x) for x in row)):
            raise ConfigError(f"field.A[{i}] must be [m1, m2, re] or [m1, m2, re, im]")
        m1, m2 = row[0], row[1]
        if int(m1) != m1 or int(m2) != m2:
            raise ConfigError(f"field.A[{i}] mode indices must be integers")
        out[(int(m1), int(m2))] = complex(row[2], row[3] if len(row) == 4 else 0.0)
    return out or None


def tunneling_model(cfg: dict) -> TunnelingModel:
    m = cfg["model"]
    try:
        return TunnelingModel(_coeffs(m["beta"], "model.beta"), _coeffs(m["gamma"], "model.gamma"), m["alpha0"], m["alpha1"])
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def dos_model(cfg: dict, kind: str) -> DOSModel:
    t = tunneling_model(cfg)
    m, n = cfg["model"], cfg["numeric"]
    common = {"delta": n["delta"], "grid_m": n["grid_m"], "antichiral_sign": m["antichiral_sign"]}
    if kind == "free":
        return DOSModel.free(**common)
    if kind == "chiral":
        return DOSModel.chiral(m["alpha1"], t, **common)
    return DOSModel.antichiral(m["alpha0"], m["theta"], t, **common)


def _validate(command: str, cfg: dict) -> None:
    m, f, n, t, o = (cfg[s] for s in ("model", "field", "numeric", "task", "output"))
    if m["kind"] not in ("free", "chiral", "antichiral"):
        raise ConfigError("model.kind must be free, chiral or antichiral")
    if m["antichiral_sign"] not in (1, -1):
        raise ConfigError("model.antichiral_sign must be 1 or -1")
    if m["alpha0"] < 0 or m["alpha1"] < 0:
        raise ConfigError("coupling strengths must be nonnegative")
    tunneling_model(cfg)
    _field_A(cfg)
    _complex(f["k"], "field.k")
    if f["B"] <= 0:
        raise ConfigError("field.B must be positive")
    if n["grid_m"] < 32:
        raise ConfigError("numeric.grid_m must be at least 32")
    if n["band_cutoff"] < 1:
        raise ConfigError("numeric.band_cutoff must be at least 1")
    if o["format"] not in ("csv", "json"):
        raise ConfigError("output.format must be csv or json")
    if o["path"] is not None and not isinstance(o["path"], str):
        raise ConfigError("output.path must be a string or null")
    if "models" in t:
        if not t["models"] or any(k not in FIGURE_MODELS for k in t["models"]):
            raise ConfigError("task.models must list free, chiral or antichiral")
    for key in ("points", "N", "grid_n", "samples", "lambda_scale"):
        if key in t and t[key] is not None and t[key] < 1:
            raise ConfigError(f"task.{key} must be positive")
    if "beta" in t and t["beta"] <= 0:
        raise ConfigError("task.beta must be positive")
    if command == "squeeze" and (len(t["thetas"]) < 5 or not all(_is_num(x) and x > 0 for x in t["thetas"])):
        raise ConfigError("task.thetas needs at least five positive angles")
    if command == "dos":
        if not t["B_values"] or not all(_is_num(b) and b > 0 for b in t["B_values"]):
            raise ConfigError("task.B_values must be positive numbers")
        build_test_function(t["test_function"])
    if command == "zeromode":
        if t["kind"] not in ("landau", "periodic"):
            raise ConfigError("task.kind must be landau or periodic")
        if t["kind"] == "landau" and not 0 <= t["n"] <= 8:
            raise ConfigError("task.n must lie in [0, 8]")
        if t["variant"] not in ("dz", "dzbar"):
            raise ConfigError("task.variant must be dz or dzbar")
    if command == "dhva" and not 0 < t["invB_min"] < t["invB_max"]:
        raise ConfigError("task needs 0 < invB_min < invB_max")
    if command in ("sdh", "qhe") and not t["mu_min"] < t["mu_max"]:
        raise ConfigError("task needs mu_min < mu_max")


def build_test_function(spec: dict):
    """Build a test function from ``{"type": ..., parameters}``."""
    kinds = {
        "gaussian": (("mu", "sigma"), lambda p: gaussian(p["mu"], p["sigma"])),
        "fermi": (("beta", "mu"), lambda p: fermi_dirac(p["beta"], p["mu"])),
        "plateau": (("lo", "inner_lo", "inner_hi", "hi"), lambda p: plateau(p["lo"], p["inner_lo"], p["inner_hi"], p["hi"])),
    }
    kind = spec.get("type")
    if kind not in kinds:
        raise ConfigError(f"test_function.type must be one of {sorted(kinds)}")
    names, build = kinds[kind]
    extra = set(spec) - set(names) - {"type"}
    if extra:
        raise ConfigError(f"unknown test_function keys {sorted(extra)}")
    if any(not _is_num(spec.get(k)) for k in names):
        raise ConfigError(f"test_function of type {kind} needs numeric {list(names)}")
    try:
        return build(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# tables


@dataclass
class Table:
    columns: list[str]
    rows: list[list[float]]
    meta: dict


def _fmt(x: float) -> str:
    x = float(x)
    if x == 0.0:
        return "0"  # normalise the sign of zero
    return format(x, ".17g")


def render_csv(command: str, cfg: dict, table: Table) -> str:
    lines = [f"# tbgmag {__version__}", f"# command: {command}"]
    lines.append("# config: " + json.dumps(cfg, sort_keys=True, separators=(",", ":")))
    for key in sorted(table.meta):
        lines.append(f"# {key}: " + json.dumps(table.meta[key], sort_keys=True, separators=(",", ":")))
    lines.append(",".join(table.columns))
    lines.extend(",".join(_fmt(v) for v in row) for row in table.rows)
    return "\n".join(lines) + "\n"


def render_json(command: str, cfg: dict, table: Table) -> str:
    doc = {
        "meta": {"version": __version__, "command": command, "config": cfg, **table.meta},
        "sweep": [float(r[0]) for r in table.rows],
        "values": [{c: float(v) for c, v in zip(table.columns[1:], r[1:])} for r in table.rows],
        "columns": table.columns,
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory and rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tbgmag-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# commands


def cmd_magic(cfg: dict, threads: int = 1) -> Table:
    t = cfg["task"]
    A = _field_A(cfg)
    k = _complex(cfg["field"]["k"], "field.k")
    res = birman_schwinger_spectrum(tunneling_model(cfg), k, A, t["N"], t["convergence_check"], t["radius"])
    ev = res.eigenvalues
    ev = ev[np.abs(ev) >= 1.0 / t["radius"]]
    alpha = 1.0 / ev
    order = np.lexsort((alpha.imag, alpha.real, np.round(np.abs(alpha), 12)))
    gap = res.convergence_gap
    rows = [[ev[i].real, ev[i].imag, alpha[i].real, gap] for i in order]
    return Table(["re_eig", "im_eig", "alpha", "convergence_gap"], rows, {"truncation_N": res.truncation_N})


def cmd_bands(cfg: dict, threads: int = 1) -> Table:
    t, m = cfg["task"], cfg["model"]
    variant = "antichiral" if m["kind"] == "antichiral" else "chiral"
    rep = flat_band_scan(tunneling_model(cfg), variant, m["theta"], _field_A(cfg), t["grid_n"], t["N"])
    rows = [[k.real, k.imag, a, b] for k, a, b in zip(rep.k_points, rep.e0, rep.e_second)]
    return Table(["k_re", "k_im", "e0", "e_second"], rows, {"fold": rep.fold, "flatness_ratio": rep.flatness_ratio})


def cmd_squeeze(cfg: dict, threads: int = 1) -> Table:
    t = cfg["task"]
    k = _complex(cfg["field"]["k"], "field.k")
    rep = squeezing_study(tunneling_model(cfg), _field_A(cfg), t["thetas"], k, t["N"])
    rows = [[th, 1.0 / th, e, n] for th, e, n in zip(rep.thetas, rep.e0, rep.cutoffs)]
    meta = {
        "slope": rep.slope,
        "intercept": rep.intercept,
        "r_squared": rep.r_squared,
        "condition_satisfied": rep.condition_satisfied,
    }
    return Table(["theta", "inv_theta", "e0", "cutoff_N"], rows, meta)


def cmd_zeromode(cfg: dict, threads: int = 1) -> Table:
    t = cfg["task"]
    s = t["samples"]
    if t["kind"] == "landau":
        k = _complex(cfg["field"]["k"], "field.k")
        torus = MagneticTorus(t["lambda_scale"], k)
        g = np.arange(s) / s
        s1, s2 = np.meshgrid(g, g, indexing="ij")
        z = (s1 * torus.gamma1 + s2 * torus.gamma2).reshape(-1)
        psi = psi_bloch(torus, z, t["n"])
        zt = z[: min(8, z.size)] + 0.1 + 0.05j
        meta = {
            "B": torus.B,
            "translation_residual": translation_residual(torus, zt, t["n"]),
            "annihilation_residual": annihilation_residual(torus, zt, t["n"]),
        }
    else:
        A = _field_A(cfg)
        if A is None:
            raise ConfigError("periodic zero mode needs field.A")
        lat = MoireLattice()
        z = cell_grid(lat, s).z.reshape(-1)
        psi = periodic_zero_mode(A, z, t["variant"])
        meta = {"variant": t["variant"]}
    rows = [[zz.real, zz.imag, p.real, p.imag, abs(p)] for zz, p in zip(z, psi)]
    return Table(["x", "y", "re_psi", "im_psi", "abs_psi"], rows, meta)


def cmd_dos(cfg: dict, threads: int = 1) -> Table:
    t, n = cfg["task"], cfg["numeric"]
    f = build_test_function(t["test_function"])
    model = dos_model(cfg, cfg["model"]["kind"])
    N = n["band_cutoff"]
    op = dtrace_dB if t["derivative"] else trace
    rows = []
    for B in t["B_values"]:
        e = op(f, range(-N, N + 1), B, model, n["strict"])
        es = max(b.error_scale for b in e.bands)
        rows.append([B, e.leading, e.correction, e.total, es])
    return Table(["B", "leading", "correction", "total", "error_scale"], rows, {"model": model.kind})


def _columns(
    cfg: dict,
    base: ThermoParams,
    variable: str,
    points: np.ndarray,
    observables: list[tuple[str, Callable[[ThermoParams], float]]],
    threads: int,
) -> Table:
    cols = [variable]
    data = [np.asarray(points, dtype=float)]
    for name, obs in observables:
        curve = sweep(obs, base, variable, points, threads=threads)
        cols.append(name)
        data.append(curve.values)
    rows = np.column_stack(data).tolist()
    return Table(cols, rows, {"band_cutoff": base.N})


def cmd_sdh(cfg: dict, threads: int = 1) -> Table:
    t, n = cfg["task"], cfg["numeric"]
    B, strict, N = cfg["field"]["B"], n["strict"], n["band_cutoff"]
    mus = np.linspace(t["mu_min"], t["mu_max"], t["points"])
    obs = []
    for kind in t["models"]:
        model = dos_model(cfg, kind)
        if t["smoothing_sigma"] is not None:
            sig = t["smoothing_sigma"]
            obs.append((f"dos_{kind}", partial(_smoothed_dos, model=model, sigma=sig, strict=strict)))
        obs.append((f"sigma_xx_{kind}", partial(sigma_xx, model=model, strict=strict)))
    return _columns(cfg, ThermoParams(t["beta"], 0.0, B, N), "mu", mus, obs, threads)


def _smoothed_dos(tp: ThermoParams, model: DOSModel, sigma: float, strict: bool) -> float:
    return trace(gaussian(tp.mu, sigma), range(-tp.N, tp.N + 1), tp.B, model, strict).total


def cmd_dhva(cfg: dict, threads: int = 1) -> Table:
    t, n = cfg["task"], cfg["numeric"]
    strict, N = n["strict"], n["band_cutoff"]
    inv = np.linspace(t["invB_min"], t["invB_max"], t["points"])
    obs = []
    for kind in t["models"]:
        model = dos_model(cfg, kind)
        obs.append((f"M_{kind}", partial(magnetization, model=model, strict=strict)))
        if t["susceptibility"]:
            obs.append((f"chi_{kind}", partial(susceptibility, model=model, strict=strict)))
    return _columns(cfg, ThermoParams(t["beta"], t["mu"], 1.0 / inv[0], N), "invB", inv, obs, threads)


def cmd_qhe(cfg: dict, threads: int = 1) -> Table:
    t, n = cfg["task"], cfg["numeric"]
    B, strict, N = cfg["field"]["B"], n["strict"], n["band_cutoff"]
    mus = np.linspace(t["mu_min"], t["mu_max"], t["points"])
    obs = []
    for kind in t["models"]:
        model = dos_model(cfg, kind)
        obs.append((f"streda_{kind}", partial(hall_streda, model=model, strict=strict, cutoff="symmetric")))
        if kind == "chiral":
            obs.append(("explicit_chiral", partial(hall_chiral_explicit, model=model)))
        if kind == "antichiral":
            obs.append(("hat_antichiral", partial(hall_antichiral, model=model)))
    sb, sB = t["staircase_beta"], t["staircase_B"]
    obs.append(("staircase_raw_pi", lambda tp: hall_staircase(ThermoParams(sb, tp.mu, sB, tp.N)).raw_pi))
    obs.append(("staircase_subtracted_pi", lambda tp: hall_staircase(ThermoParams(sb, tp.mu, sB, tp.N)).subtracted_pi))
    return _columns(cfg, ThermoParams(t["beta"], 0.0, B, N), "mu", mus, obs, threads)


HANDLERS: dict[str, Callable[[dict, int], Table]] = {
    "magic": cmd_magic,
    "bands": cmd_bands,
    "squeeze": cmd_squeeze,
    "zeromode": cmd_zeromode,
    "dos": cmd_dos,
    "sdh": cmd_sdh,
    "dhva": cmd_dhva,
    "qhe": cmd_qhe,
}


def run(command: str, cfg: dict, fmt: str, threads: int = 1) -> str:
    """Run a resolved configuration and return the rendered document."""
    table = HANDLERS[command](cfg, threads)
    return render_csv(command, cfg, table) if fmt == "csv" else render_json(command, cfg, table)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tbgmag", description="Magnetic continuum model of twisted bilayer graphene.")
    p.add_argument("--version", action="version", version=f"tbgmag {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output file (default: output.path or stdout)")
        sp.add_argument("--format", choices=("csv", "json"), help="overrides output.format")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        raw = None
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        if args.format:
            raw = raw or {}
            raw.setdefault("output", {})["format"] = args.format
        cfg = resolve_config(args.command, raw)
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        text = run(args.command, cfg, cfg["output"]["format"], args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularResolventError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GapClosedError, SupportError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    path = args.out or cfg["output"]["path"]
    try:
        if path:
            write_atomic(path, text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
