"""Batch command line: ``frechet-mp {mpass,solve,check} PROBLEM``.

Every run writes plain files (JSON summary, CSV traces) into ``--out``.
Exit codes:

    mpass   0 critical point found, 2 PS condition violated, 1 otherwise
    solve   0 solved, 3 C1 verification failed, 1 otherwise
    check   0 all checks pass, 1 any check fails
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import mountain_pass as mp
from .diffeo_solver import (
    MeritFunctional,
    SolveConfig,
    chain_rule_error,
    injectivity_probe,
    linearization_error,
    merit_functional,
    solve,
    verify_c1,
)
from .errors import C1Violation, FrechetMPError, UnknownProblem
from .functional import derivative_check, gradient_check
from .graded_space import MetricWeights, metric_arrays, metric_axiom_defects
from .path_space import DiscretePath, path_metric
from .problems import BUILTINS, from_config

log = logging.getLogger("frechet_mp")

EXIT_OK, EXIT_FAIL, EXIT_PS, EXIT_C1 = 0, 1, 2, 3

GRAD_TOL = 1e-5
LIN_TOL = 1e-6
METRIC_TOL = 1e-12
C1_TOL = 1e-8


class UsageError(Exception):
    pass


def load_config(path) -> dict:
    """YAML (or JSON, which YAML accepts) mapping; empty file gives {}."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping")
    return data


def _floats(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    return np.asarray([float(v) for v in str(text).replace(";", ",").split(",") if v.strip()], dtype=float)


CONFIG_KEYS = {"problem", "seed", "out", "mountain_pass", "solve", "check", "iota_weights", "target"}


def resolve(args) -> dict:
    """Merge the config file with command-line overrides into one run config."""
    cfg = load_config(args.config) if args.config else {}
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    problem = dict(cfg.get("problem") or {}) if isinstance(cfg.get("problem"), dict) else {}
    if isinstance(cfg.get("problem"), str):
        problem["name"] = cfg["problem"]
    if args.problem:
        problem["name"] = args.problem
    if not problem.get("name"):
        raise UsageError("no problem given (positional PROBLEM or 'problem' in the config)")
    if args.grades is not None:
        problem["grades"] = args.grades
    run = {
        "subcommand": args.command,
        "problem": problem,
        "seed": args.seed if args.seed is not None else int(cfg.get("seed", 0)),
        "out": args.out or cfg.get("out") or "out",
        "mountain_pass": dict(cfg.get("mountain_pass") or {}),
        "solve": dict(cfg.get("solve") or {}),
        "check": dict(cfg.get("check") or {}),
        "iota_weights": cfg.get("iota_weights"),
        "target": cfg.get("target"),
    }
    if args.nodes is not None:
        if problem["name"].startswith("volterra"):
            problem["N"] = args.nodes
        else:
            run["mountain_pass"]["intervals"] = args.nodes
    if args.tol_grad is not None:
        run["mountain_pass"]["tol_grad"] = args.tol_grad
    if args.tol_res is not None:
        run["solve"]["tol_res"] = args.tol_res
    if getattr(args, "max_iter", None) is not None:
        run["solve"]["max_iter"] = args.max_iter
    if getattr(args, "iota_weights", None):
        run["iota_weights"] = args.iota_weights
    if getattr(args, "target", None):
        run["target"] = args.target
    if getattr(args, "samples", None) is not None:
        run["check"]["samples"] = args.samples
    return run


def _dataclass_from(cls, values: dict, **extra):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    return cls(**{**values, **extra})


def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- mpass

def cmd_mpass(run: dict) -> int:
    p = from_config(run["problem"])
    cfg = _dataclass_from(mp.MountainPassConfig, run["mountain_pass"], seed=run["seed"])
    out = Path(run["out"])
    if p.functional is not None and p.endpoint is not None:
        phi, f = p.functional, p.endpoint
        w = MetricWeights.default(p.family.count)
        rho = 0.5 * float(metric_arrays(p.family, f, np.zeros_like(f), w))
        geometry = mp.check_geometry(phi, f, rho, seed=run["seed"], weights=w)
        if not geometry.valid:
            raise FrechetMPError(f"mountain-pass geometry fails: margin {geometry.margin:.3e}")
        result = mp.run(phi, f, geometry, cfg, weights=w)
    elif p.preimages is not None:
        e1, e2, l = p.preimages
        result = injectivity_probe(p.handle, e1, e2, l, p.merit, cfg)
    else:
        raise UsageError(f"problem {p.name!r} has no functional for a mountain-pass run")

    summary = result.summary()
    summary["problem"] = p.name
    summary["seed"] = run["seed"]
    if result.ps_verdict is not None:
        summary["ps_reason"] = result.ps_verdict.reason
    _write(out, "summary.json", _json(summary))
    _write(out, "trace.csv", result.trace_csv())
    _write(out, "ps.csv", result.ps_csv())
    _write(out, "path.csv", result.path.to_csv())
    print(f"{p.name}: verdict={result.verdict} c={result.c_estimate:.10g}"
          + ("" if result.h is None else f" h={np.array2string(result.h.coords, precision=6)}"))
    if result.verdict == mp.CRITICAL_POINT_FOUND:
        return EXIT_OK
    if result.verdict == mp.PS_VIOLATED:
        return EXIT_PS
    return EXIT_FAIL


# ---------------------------------------------------------------- solve

def _merit_for(p, run) -> MeritFunctional:
    if run.get("iota_weights") is not None:
        return MeritFunctional(p.merit.family, tuple(_floats(run["iota_weights"])))
    return p.merit


def cmd_solve(run: dict) -> int:
    p = from_config(run["problem"])
    if p.handle is None:
        raise UsageError(f"problem {p.name!r} has no map to invert")
    out = Path(run["out"])
    try:
        c1 = verify_c1(p.handle, tol=C1_TOL, seed=run["seed"], raise_on_fail=True)
    except C1Violation as exc:
        _write(out, "c1.json", _json(exc.report.to_dict()))
        print(f"{p.name}: {exc}", file=sys.stderr)
        return EXIT_C1
    _write(out, "c1.json", _json(c1.to_dict()))
    target = p.target if run.get("target") is None else _floats(run["target"])
    if target.shape != (p.handle.codomain.dimension,):
        raise UsageError(f"target needs {p.handle.codomain.dimension} values, got {target.size}")
    cfg = _dataclass_from(SolveConfig, run["solve"], seed=run["seed"])
    report = solve(p.handle, target, _merit_for(p, run), cfg)
    doc = report.to_dict()
    doc["problem"] = p.name
    exact = p.references.get("exact")
    if exact is not None and run.get("target") is None:
        doc["sup_error"] = float(np.max(np.abs(report.solution.coords - exact.value)))
    _write(out, "report.json", _json(doc))
    _write(out, "trace.csv", report.trace_csv())
    _write(out, "residuals.csv", report.residual_table())
    _write(out, "solution.csv", "index,value\n" + "".join(
        f"{i},{float(v)!r}\n" for i, v in enumerate(report.solution.coords)))
    msg = f"{p.name}: solved={report.solved} ({report.reason}) iterations={report.iterations}"
    if "sup_error" in doc:
        msg += f" sup_error={doc['sup_error']:.3e}"
    print(msg)
    return EXIT_OK if report.solved else EXIT_FAIL


# ---------------------------------------------------------------- check

def _random_path(family, rng, m=8):
    nodes = rng.standard_normal((m + 1, family.dimension))
    nodes[0] = 0.0
    return DiscretePath(nodes, family)


def cmd_check(run: dict) -> int:
    p = from_config(run["problem"])
    rng = np.random.default_rng(run["seed"])
    samples = int(run["check"].get("samples", 100))
    cases = int(run["check"].get("metric_cases", 1000))
    rows = []  # (check, value, tol)

    fam = p.family
    w = MetricWeights.default(fam.count)
    draw = lambda r: r.standard_normal(fam.dimension) * 10.0 ** r.uniform(-3, 3)
    d = metric_axiom_defects(lambda x, y: float(metric_arrays(fam, x, y, w)), draw, cases, rng)
    rows += [(f"metric {k}", v, METRIC_TOL) for k, v in d.items()]
    pd = metric_axiom_defects(lambda g, h: path_metric(g, h, w), lambda r: _random_path(fam, r), max(cases // 10, 1),
                              rng, shift=lambda g, h: DiscretePath(g.nodes + h.nodes, fam))
    rows += [(f"path metric {k}", v, METRIC_TOL) for k, v in pd.items()]

    def points(n):
        if p.handle is not None:
            return [p.handle.draw(rng) for _ in range(n)]
        return [rng.uniform(-1.0, 3.0, fam.dimension) for _ in range(n)]

    if p.functional is not None:
        worst = max(gradient_check(p.functional, x, [rng.standard_normal(fam.dimension) for _ in range(3)])
                    for x in points(samples))
        rows.append(("gradient", worst, GRAD_TOL))
    if p.handle is not None:
        h = p.handle
        phi = merit_functional(h, p.target, p.merit)
        pts = points(samples)
        dirs = lambda: [h.draw(rng) for _ in range(2)]
        rows.append(("merit gradient", max(derivative_check(phi, x, dirs()) for x in pts), GRAD_TOL))
        rows.append(("chain rule", max(chain_rule_error(h, p.target, p.merit, x, dirs()) for x in pts), LIN_TOL))
        rows.append(("linearization", max(linearization_error(h, x, dirs()) for x in pts), LIN_TOL))
        c1 = verify_c1(h, samples, C1_TOL, seed=run["seed"])
        rows.append(("C1", c1.worst, C1_TOL))

    failed = 0
    lines = ["check,value,tol,status"]
    for name, val, tol in rows:
        ok = bool(val <= tol)
        failed += not ok
        lines.append(f"{name},{float(val)!r},{tol!r},{'pass' if ok else 'FAIL'}")
        print(f"{'pass' if ok else 'FAIL'}  {name:<24} {val:.3e}  (tol {tol:.0e})")
    _write(Path(run["out"]), "check.csv", "\n".join(lines) + "\n")
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------- parser

COMMANDS = {"mpass": cmd_mpass, "solve": cmd_solve, "check": cmd_check}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags, which would read as ps-violated
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAIL, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="frechet-mp",
        description="Mountain-pass search and Newton-type inversion on graded spaces.",
        epilog="built-in problems: " + ", ".join(sorted(BUILTINS)),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="{mpass,solve,check}")

    common = _Parser(add_help=False)
    common.add_argument("problem", nargs="?", help="built-in problem name")
    common.add_argument("--config", metavar="PATH", help="YAML/JSON run config")
    common.add_argument("--out", metavar="DIR", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="seed for randomised samplers")
    common.add_argument("--grades", type=int, help="number of seminorm grades")
    common.add_argument("--nodes", type=int, help="path intervals (mpass) or grid size N (Volterra)")
    common.add_argument("--tol-grad", type=float, help="dual-norm tolerance when polishing a critical point")
    common.add_argument("--tol-res", type=float, help="residual tolerance per grade for solve")

    sub.add_parser("mpass", parents=[common], help="geometry check plus mountain-pass search")
    s = sub.add_parser("solve", parents=[common], help="verify C1 then solve tau(e) = f")
    s.add_argument("--target", help="comma-separated right-hand side f")
    s.add_argument("--max-iter", type=int, help="iteration cap")
    s.add_argument("--iota-weights", help="comma-separated merit weights, one per grade")
    c = sub.add_parser("check", parents=[common], help="gradient, metric and C1 checks")
    c.add_argument("--samples", type=int, help="random base points per check (default 100)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_FAIL
    try:
        run = resolve(args)
        return COMMANDS[args.command](run)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
    except (UnknownProblem, FrechetMPError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
