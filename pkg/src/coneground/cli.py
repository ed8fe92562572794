"""Command-line front end.

Every subcommand resolves its configuration as defaults < config file < flags,
prints a JSON document to stdout and, with --out, writes JSON/CSV artifacts.
Exit codes: 0 success, 1 numerical non-convergence, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .cones import ConeError
from .discretize import GridError, write_field_csv
from .elliptic import LinearSolveConfig
from .elliptic import NotConverged as LinearNotConverged
from .geometry import GeometryError, RevolutionSplit, exponent_report, parse_domain
from .groundstate import (DegenerateRay, GroundStateConfig, InsufficientWindow, Potential,
                          Problem, ProblemError, Weight, decay_check, find_ground_state,
                          moser_sequence, solve_radial)
from .spectra import NotConverged as SpectralNotConverged
from .spectra import angular_eigs, hardy_constant, hardy_richardson
from .symmetry import nonradiality_index, second_variation_radial, verdict

CONFIG_ERRORS = (GeometryError, GridError, ProblemError, ConeError, ValueError, KeyError,
                 TypeError, yaml.YAMLError)
NUMERIC_ERRORS = (LinearNotConverged, SpectralNotConverged, DegenerateRay, InsufficientWindow)

DEFAULTS = {
    "split": "2,2",
    "domain": "annulus(1,2)",
    "symmetry_class": None,
    "alpha": 0.0,
    "beta": 1.0,
    "lam": 0.0,
    "p": 3.0,
    "cone": "K+",
    "weight": "constant",
    "potential_alpha": None,
    "nr": 64,
    "ntheta": 32,
    "nphi": None,
    "tol": 1e-6,
    "max_outer": 500,
    "seed": 0,
    "log_depth": 24.0,
}

COMMAND_DEFAULTS = {
    "hardy": {"domain": "ball", "nr": 128, "ntheta": 64},
    "eigen": {"weight_id": "omega", "n": 2, "N": None, "l": None, "m": None, "box": "pi4",
              "k": 1, "ncells": 512},
    "moser": {"p": 4.0, "q": 6.0, "t0": 1.0, "kmax": 4},
    "decay": {"domain": "ball", "potential_alpha": 4.0, "p": 3.0, "target": 2.0,
              "window": None},
    "sweep": {"axis": "R", "values": [], "width": 1.0, "p": 4.5},
}


def code_version() -> str:
    try:
        return metadata.version("coneground")
    except metadata.PackageNotFoundError:
        return __version__


# --------------------------------------------------------------------------
# config resolution


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(args) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(args.command, {}))
    cfg.update(load_config(args.config))
    for key, val in vars(args).items():
        if key in ("config", "func") or val is None:
            continue
        cfg[key] = val
    cfg["command"] = args.command
    return cfg


def _clean(obj):
    """JSON-safe copy: inf -> "inf", numpy scalars -> python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return "inf" if math.isinf(v) else ("nan" if math.isnan(v) else v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def document(cfg: dict, result: dict) -> dict:
    resolved = {k: v for k, v in cfg.items() if k not in ("out", "jobs", "trace")}
    return _clean({"code_version": code_version(), "config": resolved, "result": result})


def emit(doc: dict, cfg: dict, name: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    out = cfg.get("out")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / f"{name}.json").write_text(text + "\n")


def _outdir(cfg):
    out = cfg.get("out")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        return Path(out)
    return None


# --------------------------------------------------------------------------
# builders


def build_domain(cfg):
    return parse_domain(cfg["domain"], cfg["split"], cfg.get("symmetry_class"))


def build_problem(cfg) -> Problem:
    dom = build_domain(cfg)
    if cfg["weight"] == "constant":
        weight = Weight.constant()
    elif cfg["weight"] == "power":
        weight = Weight.power(float(cfg["alpha"]))
    else:
        raise ValueError(f"unknown weight {cfg['weight']!r}; use constant or power")
    pa = cfg.get("potential_alpha")
    pot = Potential() if pa is None else Potential.inverse_power(float(pa))
    return Problem(dom, float(cfg["p"]), weight, pot, float(cfg["lam"]), cfg["cone"])


def gs_config(cfg, scale: int = 1) -> GroundStateConfig:
    nphi = cfg.get("nphi")
    return GroundStateConfig(
        nr=int(cfg["nr"]) * scale, ntheta=int(cfg["ntheta"]) * scale,
        nphi=None if nphi is None else int(nphi) * scale,
        tol=float(cfg["tol"]), max_outer=int(cfg["max_outer"]), seed=int(cfg["seed"]),
        linear=LinearSolveConfig(backend="direct"))


# --------------------------------------------------------------------------
# commands


def cmd_exponents(cfg) -> int:
    rep = exponent_report(RevolutionSplit.parse(str(cfg["split"])), float(cfg["alpha"]),
                          float(cfg["beta"]))
    emit(document(cfg, rep.to_dict()), cfg, "exponents")
    return 0


def cmd_hardy(cfg) -> int:
    dom = build_domain(cfg)
    nphi = cfg.get("nphi")
    res = hardy_constant(dom, float(cfg["lam"]), int(cfg["nr"]), int(cfg["ntheta"]),
                         None if nphi is None else int(nphi), float(cfg["log_depth"]))
    out = res.to_dict()
    if cfg.get("richardson") and dom.bounded_at_origin:
        coarse, fine, extra = hardy_richardson(dom, float(cfg["lam"]), int(cfg["nr"]),
                                               int(cfg["ntheta"]), float(cfg["log_depth"]))
        out["richardson"] = {"coarse": coarse, "fine": fine, "extrapolated": extra}
    d = _outdir(cfg)
    if d:
        write_field_csv(res.vector, d / "hardy_field.csv", d / "hardy_field.header.json",
                        value=res.value)
    emit(document(cfg, out), cfg, "hardy")
    return 0


def cmd_eigen(cfg) -> int:
    box = {"pi4": math.pi / 4, "pi2": math.pi / 2}[cfg["box"]]
    wid = cfg["weight_id"]
    params = {"omega": ("n",), "w_l": ("N", "l"), "w_mn": ("m", "n")}[wid]
    kw = {}
    for key in params:
        if cfg.get(key) is None:
            raise ValueError(f"weight {wid} needs --{key}")
        kw[key] = int(cfg[key])
    pairs = angular_eigs(wid, box, int(cfg["k"]), int(cfg["ncells"]), **kw)
    d = _outdir(cfg)
    if d:
        for res in pairs:
            res.vector.write_csv(d / f"eigen_{res.meta['index']}.csv")
    emit(document(cfg, {"pairs": [r.to_dict() for r in pairs]}), cfg, "eigen")
    return 0


def _solve_once(problem, cfg, scale=1):
    if cfg.get("radial"):
        return solve_radial(problem, gs_config(cfg, scale))
    return find_ground_state(problem, gs_config(cfg, scale))


def cmd_solve(cfg) -> int:
    problem = build_problem(cfg)
    res = _solve_once(problem, cfg)
    out = res.scalars()
    if not cfg.get("radial"):
        out["nonradiality_index"] = nonradiality_index(res.u)
    out["notes"] = res.notes
    if cfg.get("grid_doubling"):
        fine = _solve_once(problem, cfg, scale=2)
        out["grid_doubling"] = {
            "energy_coarse": res.energy, "energy_fine": fine.energy,
            "richardson_difference": (fine.energy - res.energy) / 3.0,
            "energy_extrapolated": fine.energy + (fine.energy - res.energy) / 3.0,
            "converged_fine": fine.converged,
        }
    d = _outdir(cfg)
    if d:
        if not cfg.get("radial"):
            write_field_csv(res.u, d / "field.csv", d / "field.header.json",
                            converged=res.converged, energy=res.energy)
        else:
            np.savetxt(d / "field.csv", np.column_stack([res.u.r, res.u.values]), delimiter=",",
                       header="r,value", comments="", fmt="%.17g")
        if cfg.get("trace"):
            res.write_trace(d / "trace.csv")
    emit(document(cfg, out), cfg, "solve")
    converged = res.converged and out.get("grid_doubling", {}).get("converged_fine", True)
    return 0 if converged else 1


def symmetry_row(cfg) -> dict:
    """Hardy constant, threshold, second variation and (optionally) the 2-D index."""
    problem = build_problem(cfg)
    dom = problem.domain
    N = dom.N
    beta = hardy_constant(dom, float(cfg["lam"]), int(cfg["nr"]), int(cfg["ntheta"]),
                          log_depth=float(cfg["log_depth"])).value
    row = {"beta": beta}
    rad = solve_radial(problem, gs_config(cfg))
    n = dom.split.n
    box = math.pi / 4 if dom.split.m == dom.split.n else math.pi / 2
    pair = angular_eigs("omega", box, 1, 512, n=n)[1]
    sv = second_variation_radial(rad.u, pair.vector, problem, beta, mu=pair.value)
    index = None
    converged = rad.converged
    if cfg.get("solve_2d", True):
        gs = find_ground_state(problem, gs_config(cfg))
        index = nonradiality_index(gs.u)
        converged = converged and gs.converged
    v = verdict(N, beta, problem.p, M_value=sv.value, M_bound=sv.bound, index=index)
    row.update(v.to_dict())
    row["mu1"] = pair.value
    row["converged"] = converged
    return row


def cmd_symmetry(cfg) -> int:
    row = symmetry_row(cfg)
    emit(document(cfg, row), cfg, "symmetry")
    return 0 if row["converged"] else 1


SWEEP_COLUMNS = ["value", "R", "beta", "threshold", "p", "M_value", "M_bound", "index",
                 "criterion_met", "converged"]


def _sweep_cfg(cfg, value):
    row_cfg = dict(cfg)
    axis = cfg["axis"]
    if axis == "R":
        row_cfg["domain"] = f"annulus({value:g},{value + float(cfg['width']):g})"
    elif axis == "p":
        row_cfg["p"] = float(value)
    elif axis == "alpha":
        row_cfg["alpha"] = float(value)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}; use R, p or alpha")
    return row_cfg


def _sweep_worker(args):
    cfg, value, path = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        row = symmetry_row(_sweep_cfg(cfg, value))
    row["value"] = value
    row["R"] = float(value) if cfg["axis"] == "R" else None
    row = _clean(row)
    if path is not None:
        Path(path).write_text(json.dumps(row, sort_keys=True) + "\n")
    return row


def cmd_sweep(cfg) -> int:
    values = cfg.get("values") or []
    if isinstance(values, str):
        values = [float(v) for v in values.split(",") if v.strip()]
    values = [float(v) for v in values]
    if not values:
        raise ValueError("sweep axis is empty")
    cfg["values"] = values
    for v in values:
        _sweep_cfg(cfg, v)  # validate before any work
    d = _outdir(cfg)
    rows_dir = None
    if d:
        rows_dir = d / "rows"
        rows_dir.mkdir(exist_ok=True)
    rows = {}
    todo = []
    for i, v in enumerate(values):
        path = None if rows_dir is None else rows_dir / f"row_{i:03d}.json"
        if path is not None and path.exists():
            rows[i] = json.loads(path.read_text())
        else:
            todo.append((i, (cfg, v, path)))
    jobs = max(1, int(cfg.get("jobs") or 1))
    if jobs == 1 or len(todo) <= 1:
        for i, job in todo:
            rows[i] = _sweep_worker(job)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for (i, _), row in zip(todo, pool.map(_sweep_worker, [j for _, j in todo])):
                rows[i] = row
    ordered = [rows[i] for i in range(len(values))]
    if d:
        with open(d / "sweep.csv", "w") as fh:
            fh.write(",".join(SWEEP_COLUMNS) + "\n")
            for row in ordered:
                fh.write(",".join("" if row.get(c) is None else str(row.get(c))
                                  for c in SWEEP_COLUMNS) + "\n")
    emit(document(cfg, {"rows": ordered}), cfg, "sweep")
    return 0 if all(r.get("converged") for r in ordered) else 1


def cmd_moser(cfg) -> int:
    seq = moser_sequence(float(cfg["p"]), float(cfg["q"]), float(cfg["t0"]), int(cfg["kmax"]))
    emit(document(cfg, seq.to_dict()), cfg, "moser")
    return 0


def cmd_decay(cfg) -> int:
    problem = build_problem(cfg)
    res = find_ground_state(problem, gs_config(cfg))
    window = cfg.get("window")
    if isinstance(window, str):
        window = tuple(float(v) for v in window.split(","))
    rep = decay_check(res.u, float(cfg["target"]), window)
    out = {"decay": rep.to_dict(), "solve": res.scalars()}
    emit(document(cfg, out), cfg, "decay")
    return 0 if (res.converged and rep.passes) else 1


COMMANDS = {
    "exponents": cmd_exponents, "hardy": cmd_hardy, "eigen": cmd_eigen, "solve": cmd_solve,
    "symmetry": cmd_symmetry, "sweep": cmd_sweep, "moser": cmd_moser, "decay": cmd_decay,
}


# --------------------------------------------------------------------------
# argument parsing


def _common(p):
    p.add_argument("--config", help="YAML or JSON file with option values")
    p.add_argument("--out", help="output directory for JSON/CSV artifacts")
    p.add_argument("--seed", type=int)


def _problem_flags(p):
    p.add_argument("--domain")
    p.add_argument("--split")
    p.add_argument("--symmetry-class", dest="symmetry_class")
    p.add_argument("--p", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--alpha", type=float, help="weight exponent for --weight power")
    p.add_argument("--weight", choices=["constant", "power"])
    p.add_argument("--potential-alpha", dest="potential_alpha", type=float)
    p.add_argument("--cone")
    p.add_argument("--nr", type=int)
    p.add_argument("--ntheta", type=int)
    p.add_argument("--nphi", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-outer", dest="max_outer", type=int)
    p.add_argument("--log-depth", dest="log_depth", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coneground", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=code_version())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exponents", help="closed-form exponent windows")
    _common(p)
    p.add_argument("--split")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)

    p = sub.add_parser("hardy", help="Hardy constant of a domain")
    _common(p)
    _problem_flags(p)
    p.add_argument("--richardson", action="store_true", default=None)

    p = sub.add_parser("eigen", help="angular Sturm-Liouville eigenpairs")
    _common(p)
    p.add_argument("--weight", dest="weight_id", choices=["omega", "w_l", "w_mn"])
    p.add_argument("--n", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--box", choices=["pi4", "pi2"])
    p.add_argument("--k", type=int)
    p.add_argument("--ncells", type=int)

    p = sub.add_parser("solve", help="cone-constrained ground state")
    _common(p)
    _problem_flags(p)
    p.add_argument("--trace", action="store_true", default=None)
    p.add_argument("--grid-doubling", dest="grid_doubling", action="store_true", default=None)
    p.add_argument("--radial", action="store_true", default=None)

    p = sub.add_parser("symmetry", help="symmetry-breaking verdict")
    _common(p)
    _problem_flags(p)
    p.add_argument("--no-2d", dest="solve_2d", action="store_false", default=None)

    p = sub.add_parser("sweep", help="symmetry verdicts over R, p or alpha")
    _common(p)
    _problem_flags(p)
    p.add_argument("--axis", choices=["R", "p", "alpha"])
    p.add_argument("--values", help="comma-separated axis values")
    p.add_argument("--width", type=float, help="annulus width for the R axis")
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-2d", dest="solve_2d", action="store_false", default=None)

    p = sub.add_parser("moser", help="Moser exponent recurrence")
    _common(p)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--t0", type=float)
    p.add_argument("--kmax", type=int)

    p = sub.add_parser("decay", help="decay rate at the origin for the singular problem")
    _common(p)
    _problem_flags(p)
    p.add_argument("--target", type=float)
    p.add_argument("--window", help="r_lo,r_hi")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else 2
    try:
        cfg = resolve(args)
        if cfg.get("out"):
            out = Path(cfg["out"])
            out.mkdir(parents=True, exist_ok=True)
            if not os.access(out, os.W_OK):
                raise ValueError(f"output directory {out} is not writable")
        return COMMANDS[args.command](cfg)
    except NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
