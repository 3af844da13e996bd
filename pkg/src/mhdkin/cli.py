"""Command-line driver for mesh reports, convergence tables, and solves.

Subcommands: ``mesh-info`` (entity/DOF counts as JSON), ``convergence``
(error-table ladder for the manufactured problems), ``precond`` (outer
iteration counts over a mesh/Rm sweep), and ``solve`` (one run with VTK and
JSON reports).  Every option can also come from a TOML file via --config;
explicit flags win over the file.  Exit codes: 0 all requested solves
converged, 1 a solve stopped at its iteration cap, 2 invalid
configuration or output location (nothing is computed or written).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python 3.10
    import tomli as tomllib

from .drivers import (
    ERROR_COLUMNS,
    convergence_study,
    mesh_summary,
    preconditioner_study,
    solve_example,
)
from .io import (
    canonical_json,
    write_convergence_csv,
    write_iteration_csv,
    write_json,
    write_vtk,
)
from .postproc import recover_B
from .problems import EXAMPLES
from .spaces import eval_field_on_cells

_DEFAULTS = {
    "sigma": 1.0,
    "rm": 1.0,
    "eps": 1e-10,
    "eps0": 1e-3,
    "max_iter": 500,
    "levels": (2, 4, 8, 16),
    "rm_list": (1.0, 20.0, 50.0),
    "example": "1",
    "n": 2,
}

_REPORT_KEYS = (
    "example", "n", "h", "sigma", "rm", "iterations", "converged",
    "residuals", "inner", "warnings", "div_J", "b_jump",
    "multiplier_norm", "energy",
)


class ConfigError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mhdkin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, levels=False, example=False, n=False, rm=False,
                   solver=False, csv=False, json_out=True, vtk=False):
        p.add_argument("--config", help="TOML file with option defaults (flags win)")
        if example:
            p.add_argument("--example", help="problem id (1, 2, or 3)")
        if n:
            p.add_argument("--n", type=int, help="mesh refinement level (cells per cube edge)")
        if levels:
            p.add_argument("--levels", help="comma-separated ascending powers of two, e.g. 2,4,8,16")
        if rm:
            p.add_argument("--rm", help="magnetic Reynolds number (precond: comma-separated list)")
        if solver:
            p.add_argument("--sigma", type=float, help="conductivity (default 1)")
            p.add_argument("--eps", type=float, help="outer relative tolerance (default 1e-10)")
            p.add_argument("--eps0", type=float, help="inner relative tolerance (default 1e-3)")
            p.add_argument("--max-iter", type=int, dest="max_iter", help="outer iteration cap (default 500)")
        if csv:
            p.add_argument("--csv", help="write the table to this CSV path")
        if json_out:
            p.add_argument("--json", help="write the JSON report to this path")
        if vtk:
            p.add_argument("--vtk", help="write the fields to this legacy VTK path")

    p = sub.add_parser("mesh-info", help="entity and DOF counts of one mesh level")
    add_common(p, n=True)

    p = sub.add_parser("convergence", help="error table over a mesh ladder")
    add_common(p, levels=True, example=True, rm=True, solver=True, csv=True)

    p = sub.add_parser("precond", help="outer iteration counts over a mesh/Rm sweep")
    add_common(p, levels=True, rm=True, solver=True, csv=True)

    p = sub.add_parser("solve", help="solve one configuration, export fields and report")
    add_common(p, example=True, n=True, rm=True, solver=True, vtk=True)
    return parser


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from None


def _pick(args: argparse.Namespace, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key, default)
    return value


def _as_int_list(value) -> list[int]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v != ""]
    try:
        return [int(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"expected a list of integers, got {value!r}") from None


def _as_float_list(value) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, str):
        value = [v for v in value.split(",") if v != ""]
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"expected a list of numbers, got {value!r}") from None


def _validate_levels(levels: list[int]) -> list[int]:
    if not levels:
        raise ConfigError("levels must not be empty")
    for lv in levels:
        if lv < 1 or (lv & (lv - 1)) != 0:
            raise ConfigError(f"levels must be powers of two >= 1, got {lv}")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError(f"levels must be strictly ascending, got {levels}")
    return levels


def _validate_solver(cfg: dict) -> None:
    for key in ("eps", "eps0"):
        if not 0.0 < cfg[key] < 1.0:
            raise ConfigError(f"{key} must lie in (0, 1), got {cfg[key]}")
    if cfg["max_iter"] < 1:
        raise ConfigError(f"max-iter must be >= 1, got {cfg['max_iter']}")
    if cfg["sigma"] <= 0.0:
        raise ConfigError(f"sigma must be positive, got {cfg['sigma']}")


def _validate_example(example, allowed=None) -> str:
    example = str(example)
    if example not in EXAMPLES or (allowed is not None and example not in allowed):
        pool = sorted(allowed) if allowed is not None else sorted(EXAMPLES)
        raise ConfigError(f"example must be one of {pool}, got {example!r}")
    return example


def _validate_outputs(cfg: dict, keys=("csv", "json", "vtk")) -> None:
    # all output locations are checked before any computation starts
    for key in keys:
        path = cfg.get(key)
        if path is None:
            continue
        parent = os.path.dirname(path) or "."
        if not os.path.isdir(parent):
            raise ConfigError(f"output directory does not exist: {parent} (for --{key} {path})")
        if os.path.isdir(path):
            raise ConfigError(f"output path is a directory: {path}")


def _solver_config(args: argparse.Namespace, config: dict) -> dict:
    cfg = {key: _pick(args, config, key, _DEFAULTS[key]) for key in ("sigma", "eps", "eps0", "max_iter")}
    cfg["sigma"] = float(cfg["sigma"])
    cfg["eps"] = float(cfg["eps"])
    cfg["eps0"] = float(cfg["eps0"])
    cfg["max_iter"] = int(cfg["max_iter"])
    _validate_solver(cfg)
    for key in ("csv", "json", "vtk"):
        cfg[key] = _pick(args, config, key, None)
    return cfg


def _cmd_mesh_info(args: argparse.Namespace, config: dict) -> int:
    n = int(_pick(args, config, "n", _DEFAULTS["n"]))
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    cfg = {"json": _pick(args, config, "json", None)}
    _validate_outputs(cfg, keys=("json",))
    summary = mesh_summary(n)
    sys.stdout.write(canonical_json(summary))
    if cfg["json"]:
        write_json(summary, cfg["json"])
    return 0


def _cmd_convergence(args: argparse.Namespace, config: dict) -> int:
    cfg = _solver_config(args, config)
    example = _validate_example(_pick(args, config, "example", _DEFAULTS["example"]), allowed=("1", "2"))
    levels = _validate_levels(_as_int_list(_pick(args, config, "levels", _DEFAULTS["levels"])))
    rm = float(_pick(args, config, "rm", _DEFAULTS["rm"]))
    _validate_outputs(cfg)
    rows = convergence_study(
        example, levels, sigma=cfg["sigma"], rm=rm,
        eps=cfg["eps"], eps0=cfg["eps0"], max_outer=cfg["max_iter"],
    )
    if cfg["csv"]:
        write_convergence_csv(rows, cfg["csv"])
    if cfg["json"]:
        write_json({
            "example": example, "sigma": cfg["sigma"], "rm": rm,
            "eps": cfg["eps"], "eps0": cfg["eps0"], "max_iter": cfg["max_iter"],
            "rows": rows,
        }, cfg["json"])
    for row in rows:
        cells = [f"h={row['h']:.4e}"]
        cells += [f"{c}={row[c]:.4e}" for c in ERROR_COLUMNS]
        cells.append(f"divJ={row['divJ']:.1e}")
        if not row["converged"]:
            cells.append("NOT CONVERGED")
        print("  ".join(cells))
    return 0 if all(row["converged"] for row in rows) else 1


def _cmd_precond(args: argparse.Namespace, config: dict) -> int:
    cfg = _solver_config(args, config)
    levels = _validate_levels(_as_int_list(_pick(args, config, "levels", _DEFAULTS["levels"])))
    rms = _as_float_list(_pick(args, config, "rm", _DEFAULTS["rm_list"]))
    if any(rm <= 0 for rm in rms):
        raise ConfigError(f"rm values must be positive, got {rms}")
    _validate_outputs(cfg)
    runs = preconditioner_study(
        levels, rms, sigma=cfg["sigma"],
        eps=cfg["eps"], eps0=cfg["eps0"], max_outer=cfg["max_iter"],
    )
    if cfg["csv"]:
        write_iteration_csv(runs, cfg["csv"])
    if cfg["json"]:
        write_json({
            "sigma": cfg["sigma"], "eps": cfg["eps"], "eps0": cfg["eps0"],
            "max_iter": cfg["max_iter"], "runs": runs,
        }, cfg["json"])
    for run in runs:
        flag = "" if run["converged"] else "  NOT CONVERGED"
        print(f"n={run['n']:<3d} rm={run['rm']:<6g} iterations={run['iterations']}{flag}")
    return 0 if all(run["converged"] for run in runs) else 1


def _cmd_solve(args: argparse.Namespace, config: dict) -> int:
    cfg = _solver_config(args, config)
    example = _validate_example(_pick(args, config, "example", _DEFAULTS["example"]))
    n = int(_pick(args, config, "n", _DEFAULTS["n"]))
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    rm = float(_pick(args, config, "rm", _DEFAULTS["rm"]))
    _validate_outputs(cfg)
    res = solve_example(
        example, n, sigma=cfg["sigma"], rm=rm,
        eps=cfg["eps"], eps0=cfg["eps0"], max_outer=cfg["max_iter"],
    )
    report = {k: res[k] for k in _REPORT_KEYS}
    report.update({c: res[c] for c in ERROR_COLUMNS if c in res})
    if cfg["json"]:
        write_json(report, cfg["json"])
    if cfg["vtk"]:
        J_h, phi_h, A_h, _ = res["fields"]
        # the centroid value of a per-cell linear field is its cell average
        centroid = np.array([[0.25, 0.25, 0.25]])
        cell_data = {
            "B": recover_B(A_h).values,
            "J": eval_field_on_cells(J_h, centroid)[:, 0, :],
            "phi": phi_h.coefficients,
        }
        write_vtk(res["system"].spaces.mesh, cell_data, cfg["vtk"],
                  title=f"example {example} n={n}")
    status = "converged" if res["converged"] else "NOT CONVERGED"
    print(
        f"example {example}  n={n}  rm={rm:g}  iterations={res['iterations']} ({status})  "
        f"divJ={res['div_J']:.2e}  B-jump={res['b_jump']:.2e}"
    )
    return 0 if res["converged"] else 1


_COMMANDS = {
    "mesh-info": _cmd_mesh_info,
    "convergence": _cmd_convergence,
    "precond": _cmd_precond,
    "solve": _cmd_solve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: I/O failure on {getattr(exc, 'filename', '?')}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
