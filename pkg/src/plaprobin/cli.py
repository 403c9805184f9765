"""Command line front end.

Configuration files hold ``key = value`` lines; ``#`` starts a comment.
Recognized keys:

    domain        square | l_shape | disk | two_balls | path to a polygon file
    mesh          path to a mesh file (overrides domain meshing)
    r             small-ball radius for two_balls
    p, beta       numbers, or comma separated lists for compare
    f             constant source value (default 1)
    k_grid        comma separated k values (default grid otherwise)
    h             mesh size
    eps_floor, max_outer, max_cg, tol_residual   solver settings
    faber_krahn   true/false (eigen)
    experimental  true/false (pointwise check outside its regime)
    label         instance name used in reports

Exit codes: 0 success, 1 invalid input or I/O error, 2 solver did not
converge, 3 a guaranteed-sign check failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import comparison as cmp
from .eigen import faber_krahn_check, first_eigenpair, robin_disk_eigenvalue
from .fem import RobinProblem, ScalarField, SolverConfig, solve
from .geometry import (disk_polygon, l_shape, mesh_polygon, read_mesh, read_polygon, unit_square,
                       write_mesh)
from .radial import TwoBallConfig

log = logging.getLogger("plaprobin")

KEYS = {"domain", "mesh", "r", "n", "p", "beta", "f", "k_grid", "h", "eps_floor", "max_outer", "max_cg",
        "tol_residual", "faber_krahn", "experimental", "label"}
SUITES = ("theorem1", "theorem2", "lemma33", "minima", "eigen", "examples", "all")
SHAPES = {"square": unit_square, "l_shape": l_shape, "disk": disk_polygon}


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict:
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = value
    return cfg


def _floats(value: str) -> list:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"not a number list: {value!r}") from exc


def _float(cfg: dict, key: str, default: float) -> float:
    vals = _floats(cfg[key]) if key in cfg else [default]
    if len(vals) != 1:
        raise ConfigError(f"{key} must be a single number")
    return vals[0]


def _flag(cfg: dict, key: str) -> bool:
    v = cfg.get(key, "false").lower()
    if v not in ("true", "false", "1", "0", "yes", "no"):
        raise ConfigError(f"{key} must be true or false")
    return v in ("true", "1", "yes")


def solver_config(cfg: dict) -> SolverConfig:
    base = SolverConfig()
    return SolverConfig(eps_floor=_float(cfg, "eps_floor", base.eps_floor),
                        max_outer=int(_float(cfg, "max_outer", base.max_outer)),
                        max_cg=int(_float(cfg, "max_cg", base.max_cg)),
                        tol_residual=_float(cfg, "tol_residual", base.tol_residual))


def _domain(cfg: dict):
    name = cfg.get("domain", "square")
    if name == "two_balls":
        return None
    if name in SHAPES:
        return SHAPES[name]()
    return read_polygon(name)


def _check_params(p: float, beta: float):
    if not p > 1:
        raise ConfigError(f"p must be > 1, got {p!r}")
    if not beta > 0:
        raise ConfigError(f"beta must be > 0, got {beta!r}")


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _header(cfg: dict, command: str, suite: str | None, h: float) -> dict:
    canon = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return {"command": command, "suite": suite, "h": h,
            "config_hash": hashlib.sha256(canon.encode()).hexdigest(),
            "calibration": {"rule": "tol = runge_factor * |Q_h - Q_h/2| + floor * |Q|",
                            "runge_factor": cmp.RUNGE_FACTOR, "floor": cmp.FLOOR,
                            "meshes": "h and one uniform red refinement; lhs from the finer mesh"}}


def _dump(path: Path, header: dict, reports: list):
    doc = {"header": header, "reports": [r.as_dict() for r in reports]}
    _write(path, json.dumps(doc, indent=2) + "\n")


# -- commands ---------------------------------------------------------------------

def cmd_solve(cfg: dict, h: float, out: Path) -> int:
    p, beta = _float(cfg, "p", 2.0), _float(cfg, "beta", 1.0)
    _check_params(p, beta)
    mesh = read_mesh(cfg["mesh"]) if "mesh" in cfg else mesh_polygon(_require_domain(cfg), h)
    f = ScalarField.interpolate(mesh, _float(cfg, "f", 1.0))
    u, stats = solve(RobinProblem(p, beta, f), solver_config(cfg))
    out.mkdir(parents=True, exist_ok=True)
    write_mesh(mesh, out / "mesh.txt")
    u.save(out / "solution.txt")
    doc = {"header": _header(cfg, "solve", None, float(mesh.h)),
           "stats": {"iterations": stats.iterations, "final_energy": stats.final_energy,
                     "residual": stats.residual, "converged": stats.converged}}
    _write(out / "stats.json", json.dumps(doc, indent=2) + "\n")
    if not stats.converged:
        print(f"solver did not converge (residual {stats.residual:.3e}); best iterate written", file=sys.stderr)
        return 2
    return 0


def _require_domain(cfg):
    dom = _domain(cfg)
    if dom is None:
        raise ConfigError("this command needs a meshed domain, not two_balls")
    return dom


def _instances(cfg: dict, h: float):
    dom = _require_domain(cfg)
    label = cfg.get("label", cfg.get("domain", "square"))
    fval = _float(cfg, "f", 1.0)
    mesh = read_mesh(cfg["mesh"]) if "mesh" in cfg else None
    for p in _floats(cfg.get("p", "2")):
        for beta in _floats(cfg.get("beta", "1")):
            _check_params(p, beta)
            f = ScalarField.interpolate(mesh, fval) if mesh is not None else fval
            yield cmp.Instance(dom, f, p, beta, h, label, solver_config(cfg))


def _two_ball_reports(cfg: dict) -> list:
    r = _float(cfg, "r", 0.3)
    ks = _floats(cfg["k_grid"]) if "k_grid" in cfg else None
    reps = []
    for p in _floats(cfg.get("p", "2")):
        for beta in _floats(cfg.get("beta", "1")):
            _check_params(p, beta)
            reps.append(cmp.verify_theorem1(TwoBallConfig(int(_float(cfg, "n", 2)), p, beta, r), k_grid=ks,
                                            label=cfg.get("label", f"two_balls r={r:g}")))
    return reps


def cmd_compare(cfg: dict, suite: str, h: float, out: Path) -> int:
    want = set(SUITES[:-1]) if suite == "all" else {suite}
    reports = []
    ks = _floats(cfg["k_grid"]) if "k_grid" in cfg else None
    if cfg.get("domain") == "two_balls":
        if want & {"theorem1"}:
            reports += _two_ball_reports(cfg)
    else:
        for inst in _instances(cfg, h):
            stem = f"{inst.label}_p{inst.p:g}_beta{inst.beta:g}"
            if "theorem1" in want:
                reports.append(cmp.verify_theorem1(None, instance=inst, k_grid=ks))
            if "theorem2" in want and inst.sources[0].values.min() == inst.sources[0].values.max() == 1.0:
                reports.append(cmp.verify_theorem2(None, inst.p, inst.beta, instance=inst,
                                                   experimental=_flag(cfg, "experimental")))
            extra = inst.report(" minima and boundary identities")
            if "minima" in want:
                extra.checks.append(cmp.minima_record(inst))
            if "lemma33" in want:
                extra.checks += cmp.boundary_level_records(inst)
            if extra.checks:
                reports.append(extra)
            if "eigen" in want and inst.p >= 2:
                rep = cmp.ComparisonReport(inst.label + " eigen", 2, inst.p, inst.beta, inst.h)
                rep.checks.append(faber_krahn_check(inst.domain, inst.p, inst.beta, h))
                reports.append(rep)
            if inst.converged:
                cmp.export_plot_data(inst, out, stem)
    if "examples" in want:
        reports.append(cmp.counterexample_suite())
    _dump(out / "report.json", _header(cfg, "compare", suite, h), reports)
    failed = [c.name for r in reports for c in r.guaranteed_failures]
    if failed:
        print("guaranteed-sign checks failed: " + ", ".join(failed), file=sys.stderr)
        return 3
    if any(c.passed is None and c.note.startswith("solver") for r in reports for c in r.checks):
        return 2
    return 0


def cmd_eigen(cfg: dict, h: float, out: Path) -> int:
    p, beta = _float(cfg, "p", 2.0), _float(cfg, "beta", 1.0)
    _check_params(p, beta)
    fk = _flag(cfg, "faber_krahn")
    if fk and p < 2:
        raise ConfigError("the Faber-Krahn comparison is only established for p >= n = 2; refusing")
    dom = None if "mesh" in cfg else _require_domain(cfg)
    mesh = read_mesh(cfg["mesh"]) if "mesh" in cfg else mesh_polygon(dom, h)
    res = first_eigenpair(mesh, p, beta, config=solver_config(cfg))
    rep = cmp.ComparisonReport(cfg.get("label", cfg.get("domain", "mesh")) + " eigen", 2, p, beta, float(mesh.h))
    rep.checks.append(cmp.CheckRecord("first eigenvalue", res.eigenvalue, res.eigenvalue, 0.0, None, False,
                                      f"iterations {res.iterations}, relative change {res.residual:.3e}"))
    if cfg.get("domain") == "disk" and p == 2.0:
        oracle = robin_disk_eigenvalue(beta)
        rep.checks.append(cmp.CheckRecord("disk eigenvalue vs Bessel root", res.eigenvalue, oracle, 1e-2,
                                          bool(abs(res.eigenvalue - oracle) <= 1e-2), False))
    if fk:
        rep.checks.append(faber_krahn_check(dom, p, beta, h, solver_config(cfg)))
    out.mkdir(parents=True, exist_ok=True)
    res.eigenfunction.save(out / "eigenfunction.txt")
    _dump(out / "eigen.json", _header(cfg, "eigen", None, h), [rep])
    if rep.guaranteed_failures:
        return 3
    return 0 if res.converged else 2


def cmd_examples(cfg: dict, h: float, out: Path) -> int:
    rep = cmp.counterexample_suite()
    _dump(out / "examples.json", _header(cfg, "examples", None, h), [rep])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plaprobin", description="Robin p-Laplacian comparison laboratory")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "compare", "eigen", "examples"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--h", type=float, default=None, help="mesh size (default: config h or 0.05)")
        sp.add_argument("--out", type=Path, default=Path("out"))
        if name == "compare":
            sp.add_argument("--suite", choices=SUITES, default="all")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config.read_text()) if args.config else {}
        h = args.h if args.h is not None else _float(cfg, "h", 0.05)
        if not h > 0:
            raise ConfigError("h must be positive")
        if args.command == "solve":
            return cmd_solve(cfg, h, args.out)
        if args.command == "compare":
            return cmd_compare(cfg, args.suite, h, args.out)
        if args.command == "eigen":
            return cmd_eigen(cfg, h, args.out)
        return cmd_examples(cfg, h, args.out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
