"""
Command line front end.

    hypfio check     SCENARIO   hypothesis report
    hypfio solve     SCENARIO   parametrix solve plus oracle comparison
    hypfio reference SCENARIO   oracle solvers only
    hypfio trace-wf  SCENARIO   wavefront prediction and verification
    hypfio reduce    SCENARIO   companion system of a higher order equation

Exit codes: 0 success, 1 other errors, 2 schema errors, 3 hypothesis
failure under ``--strict``, 4 contraction failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .fio import apply_symbol
from .errors import CFLViolation, ContractionFailure, H1Violation, RepresentationUnavailable
from .grid import GridSpec, relative_l2
from .hypotheses import check_h1, check_h2
from .parametrix import solve_2x2, solve_mxm
from .reduction import check_theorem_hypotheses, reduce, solve_higher_order
from .reference import solve_constant_coeff, solve_mol
from .scenario import Scenario, ScenarioError, load
from .symbols import XI, evaluate, jb, power
from .wavefront import propagate_wavefront, seed_wavefront, verify_prediction

log = logging.getLogger("hypfio")

EXIT_OK, EXIT_ERROR, EXIT_SCHEMA, EXIT_HYPOTHESIS, EXIT_CONTRACTION = 0, 1, 2, 3, 4


class HypothesisFailure(RuntimeError):
    pass


# -- output helpers ---------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {(",".join(str(i + 1) for i in k) if isinstance(k, tuple) else str(k)): _jsonable(v)
                for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable({k: getattr(obj, k) for k in obj.__dataclass_fields__})
    return obj


def write_atomic(path: Path, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(out: Path, name: str, obj) -> Path:
    p = out / name
    write_atomic(p, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return p


def _write_fields(out: Path, prefix: str, fields) -> list[Path]:
    paths = []
    for c in fields:
        p = out / f"{prefix}_{c.name}.csv"
        write_atomic(p, c.to_csv())
        paths.append(p)
    return paths


# -- reports ---------------------------------------------------------------------------

def _h2_json(h2: dict) -> dict:
    out = {}
    for k, v in h2.items():
        if isinstance(k, tuple):
            out[f"{k[0] + 1},{k[1] + 1}"] = {"status": v.label(), "witnesses": [float(w) for w in v.witnesses]}
    out["passed"] = bool(h2["passed"])
    return out


def _h1_json(h1: dict) -> dict:
    out = {}
    for k, v in h1.items():
        if isinstance(k, tuple):
            out[f"{k[0] + 1},{k[1] + 1}"] = {"slope": v.slope, "allowed": v.allowed, "passed": v.passed}
    out["passed"] = bool(h1["passed"])
    return out


def system_report(sc: Scenario) -> dict:
    grid = sc.grid
    h1 = check_h1(sc.B, grid)
    h2 = check_h2(sc.A.diagonal(), grid)
    imag = sc.A.check_real_diagonal(grid)
    rep = {
        "kind": "system",
        "m": sc.m,
        "h1": _h1_json(h1),
        "h2": _h2_json(h2),
        "upper_triangular": sc.A.is_upper_triangular(),
        "real_diagonal": imag <= 1e-12,
        "max_imag_diagonal": imag,
    }
    rep["passed"] = bool(rep["h1"]["passed"] and rep["h2"]["passed"] and rep["upper_triangular"]
                         and rep["real_diagonal"])
    return rep


def equation_report(sc: Scenario) -> dict:
    rep = check_theorem_hypotheses(sc.problem, sc.grid)
    out = {k: v for k, v in rep.items() if k not in ("h2",)}
    out["kind"] = "equation"
    out["m"] = sc.m
    out["h2"] = _h2_json(rep["h2"]) if rep.get("h2") else None
    return out


def hypothesis_report(sc: Scenario) -> dict:
    return system_report(sc) if sc.kind == "system" else equation_report(sc)


def _gate(sc: Scenario, strict: bool) -> dict:
    rep = hypothesis_report(sc)
    if not rep["passed"]:
        if strict:
            raise HypothesisFailure("hypothesis check failed: " + json.dumps(_jsonable(
                {k: v for k, v in rep.items() if k in ("h1", "h2", "upper_triangular", "real_diagonal",
                                                     "well_posedness_path", "representation_path")})))
        log.warning("hypotheses not satisfied; results are flagged unreliable")
    return rep


# -- subcommands ----------------------------------------------------------------

def _oracle_system(sc: Scenario, u0):
    f = sc.forcing()
    if not (sc.A.depends_on("x") or sc.B.depends_on("x")):
        return solve_constant_coeff(sc.A, sc.B, u0, f, sc.grid), "constant_coeff"
    try:
        return solve_mol(sc.A, sc.B, u0, f, sc.grid), "mol"
    except CFLViolation as exc:
        log.warning("method of lines unavailable: %s", exc)
        return None, None


def cmd_check(sc: Scenario, args, out: Path) -> int:
    rep = hypothesis_report(sc)
    _write_json(out, "check.json", rep)
    print(json.dumps(_jsonable({"passed": rep["passed"], "h2": rep.get("h2")}), sort_keys=True))
    if args.strict and not rep["passed"]:
        return EXIT_HYPOTHESIS
    return EXIT_OK


def cmd_solve(sc: Scenario, args, out: Path) -> int:
    rep = _gate(sc, args.strict)
    M = sc.neumann_m if args.neumann_m is None else (None if args.neumann_m == "auto" else int(args.neumann_m))
    diag = {"hypotheses_passed": rep["passed"], "unreliable": not rep["passed"]}
    if sc.kind == "system":
        u0 = sc.data()
        solver = solve_2x2 if sc.m == 2 else solve_mxm
        bundle = solver(sc.A, sc.B, u0, sc.forcing(), sc.grid, M=M, check_hypotheses=False,
                        force_split=sc.split)
        diag.update(bundle.diagnostics)
        ref, method = _oracle_system(sc, u0)
        fields = bundle.components
        if ref is not None:
            diag["oracle"] = method
            diag["oracle_relative_error"] = relative_l2(bundle.final(), ref.final())
            diag["oracle_relative_error_by_component"] = [
                relative_l2(a.final, b.final) for a, b in zip(bundle.components, ref.components)]
    else:
        try:
            sol = solve_higher_order(sc.problem, sc.grid, M=M if M is not None else 8)
        except RepresentationUnavailable as exc:
            log.error("%s", exc)
            return EXIT_ERROR
        diag.update(sol.bundle.diagnostics)
        diag["path"] = sol.path
        diag["chain_orders"] = {f"{j},{l}": o for (j, l), o in sol.chain_orders.items()}
        fields = sol.derivatives
        ref_u = _equation_oracle(sc)
        if ref_u is not None:
            diag["oracle"] = "mol"
            diag["oracle_relative_error"] = relative_l2(sol.u.final, ref_u)
    _write_fields(out, "fields", fields)
    _write_json(out, "diagnostics.json", diag)
    print(json.dumps(_jsonable({k: diag.get(k) for k in ("oracle", "oracle_relative_error", "q_hat", "M")}),
                     sort_keys=True))
    return EXIT_OK


def _equation_oracle(sc: Scenario):
    comp = reduce(sc.problem, sc.grid)
    u0 = comp.transform_data(sc.problem.data, sc.grid)
    grid = sc.grid

    def forcing(t):
        out = np.zeros((comp.m, grid.n_x), dtype=complex)
        out[-1] = evaluate(sc.problem.f, t, grid.x, 0.0)
        return out

    fn = forcing if sc.problem.f is not None and not sc.problem.f.is_zero else None
    try:
        ref = solve_mol(comp.A, comp.B, u0, fn, sc.grid)
    except CFLViolation as exc:
        log.warning("method of lines unavailable: %s", exc)
        return None
    return apply_symbol(power(jb(XI), 1 - comp.m), ref.components[0].final, sc.grid, check=False)


def cmd_reference(sc: Scenario, args, out: Path) -> int:
    if sc.kind != "system":
        ref_u = _equation_oracle(sc)
        if ref_u is None:
            return EXIT_ERROR
        write_atomic(out / "reference_u_final.csv", _final_csv(sc.grid, ref_u))
        _write_json(out, "reference.json", {"method": "mol", "t": sc.grid.t0 + sc.grid.t_final})
        return EXIT_OK
    u0 = sc.data()
    diag = {}
    ref, method = _oracle_system(sc, u0)
    if ref is None:
        return EXIT_ERROR
    diag.update(ref.diagnostics)
    diag["oracle"] = method
    if method == "constant_coeff":
        try:
            mol = solve_mol(sc.A, sc.B, u0, sc.forcing(), sc.grid)
            diag["cross_check_relative_error"] = relative_l2(mol.final(), ref.final())
        except CFLViolation:
            pass
    _write_fields(out, "reference", ref.components)
    _write_json(out, "reference.json", diag)
    print(json.dumps(_jsonable(diag), sort_keys=True))
    return EXIT_OK


def _final_csv(grid: GridSpec, values: np.ndarray) -> str:
    lines = ["t,x,re,im"]
    t = grid.t0 + grid.t_final
    for x, v in zip(grid.x, values):
        lines.append(f"{t:.12g},{x:.12g},{v.real:.15e},{v.imag:.15e}")
    return "\n".join(lines) + "\n"


def cmd_trace_wf(sc: Scenario, args, out: Path) -> int:
    if sc.kind != "system":
        log.error("trace-wf needs a first order system")
        return EXIT_SCHEMA
    rep = _gate(sc, args.strict)
    wf = sc.wavefront
    depth = wf["depth"] if args.depth is None else args.depth
    u0 = sc.data()
    grid = sc.grid
    t = grid.t0 + grid.t_final
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        seed = seed_wavefront([v for v in u0], grid, wf["radius"], wf["singular_threshold"])
        pred = propagate_wavefront(seed, sc.A.diagonal(), grid.t_final, depth, wf["breaks"], grid)
    pred.t = t
    write_atomic(out / "wavefront.csv", pred.to_csv())
    report = {"depth": depth, "breaks": wf["breaks"], "n_seed": len(seed), "n_predicted": len(pred),
              "truncated": pred.truncated, "warnings": [str(w.message) for w in caught],
              "hypotheses_passed": rep["passed"]}
    if not args.no_verify:
        M = sc.neumann_m
        solver = solve_2x2 if sc.m == 2 else solve_mxm
        bundle = solver(sc.A, sc.B, u0, sc.forcing(), grid, M=M, check_hypotheses=False, force_split=sc.split)
        report["verification"] = verify_prediction(bundle, pred, grid=grid, radius=wf["radius"],
                                                   singular_threshold=wf["singular_threshold"],
                                                   smooth_threshold=wf["smooth_threshold"])
    _write_json(out, "wavefront_report.json", report)
    print(json.dumps(_jsonable({"n_predicted": len(pred),
                                "passed": report.get("verification", {}).get("passed")}), sort_keys=True))
    return EXIT_OK


def cmd_reduce(sc: Scenario, args, out: Path) -> int:
    if sc.kind != "equation":
        log.error("reduce needs an 'equation' scenario")
        return EXIT_SCHEMA
    comp = reduce(sc.problem, sc.grid)
    rep = {"m": comp.m, "A": comp.A.to_json(), "B": comp.B.to_json(),
           "upper_triangular": comp.A.is_upper_triangular()}
    _write_json(out, "companion.json", rep)
    print(json.dumps(rep, sort_keys=True))
    return EXIT_OK


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "reference": cmd_reference,
            "trace-wf": cmd_trace_wf, "reduce": cmd_reduce}


# -- argument handling -----------------------------------------------------------

def _n_xi_for(xi_max: float, n_x: int, x_min: float, x_max: float) -> int:
    """Smallest power-of-two band reaching ``xi_max``."""
    n = 8
    while n < n_x and GridSpec(n_x=n_x, x_min=x_min, x_max=x_max, n_xi=n).xi_max < xi_max:
        n *= 2
    if GridSpec(n_x=n_x, x_min=x_min, x_max=x_max, n_xi=n).xi_max < xi_max * (1 - 1e-12):
        raise ScenarioError(f"--xi-max {xi_max} exceeds what n_x={n_x} resolves")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypfio", description="FIO solver for upper triangular hyperbolic systems")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("scenario", help="YAML or JSON scenario file")
    p.add_argument("--grid-n", type=int, help="number of x points (also sets the band size)")
    p.add_argument("--xi-max", type=float, help="smallest band edge to resolve")
    p.add_argument("--t-final", type=float)
    p.add_argument("--neumann-m", help="Neumann terms or 'auto'")
    p.add_argument("--depth", type=int, help="broken-flow depth for trace-wf")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--strict", action="store_true", help="fail with exit 3 when hypotheses do not hold")
    p.add_argument("--no-verify", action="store_true", help="trace-wf: skip the numerical verification")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        log.error("--threads must be positive")
        return EXIT_SCHEMA
    if args.neumann_m is not None and args.neumann_m != "auto":
        try:
            if int(args.neumann_m) < 0:
                raise ValueError
        except ValueError:
            log.error("--neumann-m must be a non-negative integer or 'auto'")
            return EXIT_SCHEMA
    try:
        overrides = {}
        if args.grid_n is not None:
            overrides["n_x"] = args.grid_n
            overrides["n_xi"] = args.grid_n
        if args.t_final is not None:
            overrides["t_final"] = args.t_final
        sc = load(args.scenario, overrides)
        if args.xi_max is not None:
            overrides["n_xi"] = _n_xi_for(args.xi_max, sc.grid.n_x, sc.grid.x_min, sc.grid.x_max)
            sc = load(args.scenario, overrides)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    out = Path(args.out)
    try:
        with threadpool_limits(limits=args.threads):
            return COMMANDS[args.command](sc, args, out)
    except HypothesisFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except H1Violation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ContractionFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACTION


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
