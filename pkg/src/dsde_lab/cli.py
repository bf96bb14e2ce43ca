"""``dsde-lab``: JSON configs in, CSV tables and reports out.

Exit codes: 0 success, 2 invalid config, 3 solver failure, 64 unknown subcommand.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .bdsdep import RegressionConfig, solve_backward
from .coeffs import check_boundary_monotonicity, check_lipschitz, check_monotonicity
from .errors import ContinuationFailure, DSDEError
from .experiments import additive_drift_family, continuity_study, hamiltonian_demo
from .fbdsdep import HomotopyConfig, SolverConfig, solve_fbdsdep
from .randomness import make_grid, sample_ensemble
from .registry import (build_backward, build_field_problem, build_hamiltonian, build_system)
from .spdie import compare_feynman_kac, estimate_field

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_USAGE = 0, 2, 3, 64


# ---------------------------------------------------------------------------
# configuration models


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ProblemModel(_Strict):
    name: str
    params: dict = Field(default_factory=dict)


class GridModel(_Strict):
    T: float = Field(1.0, gt=0, allow_inf_nan=False)
    N: int = Field(32, ge=1)


class EnsembleModel(_Strict):
    paths: int = Field(1000, ge=1)
    b_replicates: int = Field(1, ge=1, alias="bReplicates")


class HomotopyModel(_Strict):
    delta_init: float = Field(0.25, gt=0, le=1, alias="deltaInit")
    theta: float = Field(0.5, gt=0, lt=1, alias="contractionThreshold")
    max_inner: int = Field(200, ge=1, alias="maxInner")
    inner_tol: float = Field(1e-6, gt=0, alias="innerTol")
    min_delta: float = Field(1.0 / 64, gt=0, alias="minDelta")
    relaxation: float = Field(1.0, gt=0, le=1)


class RegressionModel(_Strict):
    degree: int = Field(2, ge=0)
    ridge: float = Field(1e-8, ge=0)
    min_paths_per_coefficient: int = Field(2, ge=1)


class FieldModel(_Strict):
    points: list[tuple[float, float]] = Field(default_factory=lambda: [(0.0, 0.0)])
    steps: int = Field(32, ge=1)
    domain: tuple[float, float] = (-4.0, 4.0)
    nx: int = Field(401, ge=5)
    compare: bool = True


class RunConfig(_Strict):
    problem: ProblemModel
    grid: GridModel = Field(default_factory=GridModel)
    ensemble: EnsembleModel = Field(default_factory=EnsembleModel)
    seed: int = Field(0, ge=0, lt=2**64)
    homotopy: HomotopyModel = Field(default_factory=HomotopyModel)
    regression: RegressionModel = Field(default_factory=RegressionModel)
    output: str = "out"
    samples: int = Field(300, ge=1)
    field: FieldModel = Field(default_factory=FieldModel)
    alphas: list[float] = Field(default_factory=lambda: [0.1, 0.01, 0.001])


class ConfigError(Exception):
    def __init__(self, diagnostics):
        super().__init__("invalid configuration")
        self.diagnostics = diagnostics


def load_config(path) -> RunConfig:
    """Parse and validate; raise :class:`ConfigError` carrying line/field diagnostics."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([{"field": None, "message": f"cannot read {path}: {exc.strerror}"}]) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([{"line": exc.lineno, "column": exc.colno, "message": exc.msg}]) from exc
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError([{"field": ".".join(str(x) for x in e["loc"]), "message": e["msg"]}
                           for e in exc.errors()]) from exc
    h = cfg.homotopy
    if h.min_delta > h.delta_init:
        raise ConfigError([{"field": "homotopy.minDelta", "message": "must not exceed deltaInit"}])
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _names(prefix, *dims):
    if not dims or np.prod(dims) == 0:
        return []
    idx = np.stack(np.meshgrid(*[np.arange(k) for k in dims], indexing="ij"), -1).reshape(-1, len(dims))
    return [prefix + "_".join(str(i) for i in row) for row in idx]


def solution_rows(nodes, parts):
    """Rows ``path, node, t, *values`` with cells flattened as path = r * M + p."""
    R, M, N1 = parts[0].shape[:3]
    flat = np.concatenate([a.reshape(R * M, N1, -1) for a in parts], axis=-1)
    for c in range(R * M):
        for i in range(N1):
            yield (c, i, nodes[i], *flat[c, i])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


def _report_dict(rep):
    return dict(samplesTested=rep.samples_tested, minMargin=rep.min_margin,
                violationCount=rep.violation_count, ok=rep.ok)


# ---------------------------------------------------------------------------
# subcommands


def _solver_cfgs(cfg: RunConfig):
    h = cfg.homotopy
    homotopy = HomotopyConfig(h.delta_init, h.theta, h.max_inner, h.inner_tol, h.min_delta, h.relaxation)
    reg = RegressionConfig(cfg.regression.degree, cfg.regression.ridge,
                           cfg.regression.min_paths_per_coefficient)
    return homotopy, SolverConfig(regression=reg)


def _noise(cfg: RunConfig, sys_):
    grid = make_grid(cfg.grid.T, cfg.grid.N)
    return sample_ensemble(grid, sys_.d, sys_.l, sys_.marks, cfg.seed, cfg.ensemble.paths,
                           cfg.ensemble.b_replicates)


def cmd_check(cfg, out: Path):
    if cfg.problem.name == "hamiltonian":
        sys_, _ = build_hamiltonian(cfg.problem.params)
    else:
        sys_ = build_system(cfg.problem.name, cfg.problem.params)
    mono = check_monotonicity(sys_, cfg.samples)
    mono_p = check_monotonicity(sys_, cfg.samples, primed=True)
    psi, phi = check_boundary_monotonicity(sys_, cfg.samples)
    lip = check_lipschitz(sys_, cfg.samples)
    report = dict(problem=cfg.problem.name, monotonicity=_report_dict(mono),
                  monotonicityPrimed=_report_dict(mono_p), boundaryPsi=_report_dict(psi),
                  boundaryPhi=_report_dict(phi),
                  lipschitz={k: _report_dict(v) for k, v in lip.items()})
    report["violationCount"] = (mono.violation_count + psi.violation_count + phi.violation_count
                                + sum(v.violation_count for v in lip.values()))
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "check.json", report)
    print(f"{cfg.problem.name}: violationCount {report['violationCount']}")
    return EXIT_OK


def cmd_solve_bdsdep(cfg, out: Path):
    prob, d, l, marks = build_backward(cfg.problem.name, cfg.problem.params)
    grid = make_grid(cfg.grid.T, cfg.grid.N)
    noise = sample_ensemble(grid, d, l, marks, cfg.seed, cfg.ensemble.paths, cfg.ensemble.b_replicates)
    _, scfg = _solver_cfgs(cfg)
    sol = solve_backward(prob, noise, scfg.regression)
    out.mkdir(parents=True, exist_ok=True)
    header = ["path", "node", "t"] + _names("P", 1) + _names("Q", 1, d) + _names("K", 1, marks.J)
    write_csv(out / "solution.csv", header, solution_rows(grid.nodes, (sol.P, sol.Q, sol.K)))
    print(f"P_0 mean {sol.P[:, :, 0].mean():.6g}")
    return EXIT_OK


def _write_trace(out: Path, trace):
    write_csv(out / "trace.csv", ["step", "alpha", "delta", "inner_iters", "last_distance", "ratio"],
              trace.rows())


def _solution_header(sys_):
    return (["path", "node", "t"] + _names("X", sys_.n) + _names("P", sys_.m)
            + _names("Y", sys_.n, sys_.l) + _names("Q", sys_.m, sys_.d) + _names("K", sys_.m, sys_.J))


def cmd_solve_fbdsdep(cfg, out: Path):
    sys_ = build_system(cfg.problem.name, cfg.problem.params)
    noise = _noise(cfg, sys_)
    homotopy, scfg = _solver_cfgs(cfg)
    out.mkdir(parents=True, exist_ok=True)
    try:
        U, trace = solve_fbdsdep(sys_, noise, homotopy, scfg)
    except ContinuationFailure as exc:
        if exc.trace is not None:
            _write_trace(out, exc.trace)
        raise
    write_csv(out / "solution.csv", _solution_header(sys_), solution_rows(noise.grid.nodes, U.parts))
    _write_trace(out, trace)
    print(f"alpha reached {trace.final_alpha:g} in {len(trace.steps)} steps")
    return EXIT_OK


def cmd_feynman_kac(cfg, out: Path):
    sys_ = build_field_problem(cfg.problem.name, cfg.problem.params)
    fc = cfg.field
    pts = [(t, x) for t, x in fc.points]
    mc = dict(steps=fc.steps, paths=cfg.ensemble.paths, seed=cfg.seed,
              replicates=cfg.ensemble.b_replicates,
              regression=RegressionConfig(cfg.regression.degree, cfg.regression.ridge,
                                          cfg.regression.min_paths_per_coefficient))
    est = estimate_field(sys_, pts, cfg.grid.T, **mc)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "field.csv", ["t", "x", "u", "stderr"], est.rows())
    if fc.compare:
        mc.pop("replicates")
        table = compare_feynman_kac(sys_, pts, cfg.grid.T, mc, fc.domain, fc.nx)
        write_csv(out / "comparison.csv",
                  ["t", "x", "mc", "stderr", "fd", "fd_error", "diff", "tolerance", "ok"],
                  ((r.t, r.x, r.mc, r.stderr, r.fd, r.fd_error, r.diff, r.tolerance, int(r.ok))
                   for r in table.rows))
        print(f"{sum(r.ok for r in table.rows)}/{len(table.rows)} points within tolerance")
    return EXIT_OK


def cmd_continuity(cfg, out: Path):
    sys_ = build_system(cfg.problem.name, cfg.problem.params)
    noise = _noise(cfg, sys_)
    homotopy, scfg = _solver_cfgs(cfg)
    table = continuity_study(additive_drift_family(sys_, tuple(cfg.alphas)), noise, homotopy, scfg)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "continuity.csv", ["alpha", "distance"], ((r.alpha, r.distance) for r in table.rows))
    print(f"strictly decreasing: {table.strictly_decreasing()}, "
          f"spread of distance/alpha^2: {table.quadratic_spread():.3g}")
    return EXIT_OK


def cmd_hamiltonian(cfg, out: Path):
    sys_, ham = build_hamiltonian(cfg.problem.params)
    noise = _noise(cfg, sys_)
    homotopy, scfg = _solver_cfgs(cfg)
    out.mkdir(parents=True, exist_ok=True)
    try:
        U, rep, trace = hamiltonian_demo(ham, noise, homotopy, scfg, cfg.samples)
    except ContinuationFailure as exc:
        if exc.trace is not None:
            _write_trace(out, exc.trace)
        raise
    write_csv(out / "hamiltonian.csv", ["t", "meanX", "meanP", "bvpX", "bvpP"], rep.rows(noise.grid.nodes))
    _write_trace(out, trace)
    _write_json(out / "report.json", dict(
        monotonicityViolations=rep.monotonicity_violations, boundaryViolations=rep.boundary_violations,
        lipschitzViolations=rep.lipschitz_violations, boundaryResiduals=list(rep.boundary_residuals),
        finalAlpha=rep.final_alpha, maxRatio=rep.max_ratio, maxError=rep.max_error))
    print(f"max |mean - BVP| = {rep.max_error:.4g}")
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "solve-bdsdep": cmd_solve_bdsdep,
    "solve-fbdsdep": cmd_solve_fbdsdep,
    "feynman-kac": cmd_feynman_kac,
    "continuity": cmd_continuity,
    "hamiltonian": cmd_hamiltonian,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dsde-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="override the output directory")
    return p


def _error(kind: str, message: str, **extra) -> dict:
    return dict(error=kind, message=message, **extra)


def main(argv: Optional[list] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    first = next((a for a in argv if not a.startswith("-")), None)
    if first is None and not any(a in ("-h", "--help", "--version") for a in argv):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if first is not None and first not in COMMANDS:
        parser.print_usage(sys.stderr)
        print(f"dsde-lab: unknown subcommand {first!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not (0 <= args.seed < 2**64):
                raise ConfigError([{"field": "seed", "message": "must be an unsigned 64-bit integer"}])
            cfg.seed = args.seed
    except ConfigError as exc:
        print(json.dumps(_error("invalid-config", str(exc), diagnostics=exc.diagnostics)), file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out if args.out is not None else cfg.output)
    try:
        return COMMANDS[args.command](cfg, out)
    except ContinuationFailure as exc:
        _fail(out, _error("continuation-failure", str(exc)))
        return EXIT_SOLVER
    except (ValueError, TypeError) as exc:
        # problem parameters that the builders reject
        print(json.dumps(_error("invalid-config", str(exc))), file=sys.stderr)
        return EXIT_CONFIG
    except DSDEError as exc:
        _fail(out, _error(type(exc).__name__, str(exc)))
        return EXIT_SOLVER


def _fail(out: Path, err: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "error.json", err)
    print(json.dumps(err), file=sys.stderr)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
