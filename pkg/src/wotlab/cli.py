"""Command-line front end.

Every subcommand reads a JSON problem record (or a list of records) and
writes a JSON report.  Exit codes: 0 success or pass, 1 invalid input or
infeasible instance, 2 non-convergence or inconclusive result, 3 a check
that must pass failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .brenier_strassen import (
    InconsistencyError,
    check_rockafellar_strassen,
    lipschitz_monotone_probe,
    solve_v2,
)
from .costs import build_cost
from .engines.fw import FWOptions
from .measures import Coupling, DiscreteMeasure, SchemaError, fingerprint, load_problem
from .monopoly import MonopolyLPError, MonopolyProblem, compare_four, solve_form_i, solve_kr_dual
from .monotonicity import check_c_monotone
from .orders import OrderCertificate, OrderWitness, check_convex_order, check_icx_order
from .schrodinger import ReferenceJoint, check_product_form, pairwise_ratio_check, sinkhorn
from .wot import (
    ConvergenceError,
    PropertyAError,
    duality_gap,
    solve_dual,
    solve_primal,
    stability_probe,
    verify_transfer_representation,
)

log = logging.getLogger("wotlab")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NONCONVERGED = 2
EXIT_VERIFY = 3


class CLIError(Exception):
    def __init__(self, code: int, kind: str, message: str, field: str | None = None):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.field = field

    def to_dict(self) -> dict:
        out = {"error": self.kind, "message": str(self)}
        if self.field:
            out["field"] = self.field
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(report) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


# ----------------------------------------------------------------------------
# subcommands: each takes (problem doc, args) and returns (report, exit code)


def _problem(doc):
    try:
        return load_problem(doc)
    except SchemaError as e:
        raise CLIError(EXIT_INVALID, "schema", e.message, e.field) from None


def _model(prob):
    if not prob.cost.get("kind"):
        raise CLIError(EXIT_INVALID, "schema", "missing", "cost.kind")
    return build_cost(prob.cost, prob.mu, prob.nu)


def _opts(args) -> FWOptions:
    return FWOptions(rel_tol=args.tol) if args.tol else FWOptions()


def _solve(prob, args):
    model = _model(prob)
    try:
        sol = solve_primal(model, prob.mu, prob.nu, _opts(args), skip_property_check=args.skip_property_check)
    except PropertyAError as e:
        raise CLIError(EXIT_INVALID, "property", str(e)) from None
    return model, sol


def cmd_solve(prob, args):
    model, sol = _solve(prob, args)
    if args.csv:
        _write_csv(args.csv, sol.coupling.mass)
    rep = sol.to_dict(emit_coupling=args.emit_coupling)
    rep["rel_gap"] = sol.fw_gap / (1.0 + abs(sol.value))
    rep["g_start"] = sol.g_start
    return rep, EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_dual(prob, args):
    model, sol = _solve(prob, args)
    cert = solve_dual(model, prob.mu, prob.nu, solution=sol)
    rep = cert.to_dict(emit_g=True)
    rep["r_values"] = cert.r_values
    return rep, EXIT_OK


def cmd_gap(prob, args):
    if args.primal and args.dual:
        primal, dual = _read_json(args.primal), _read_json(args.dual)
        fp_p, fp_d = primal.get("fingerprint"), dual.get("fingerprint")
        if fp_p != fp_d:
            raise CLIError(EXIT_INVALID, "fingerprint", f"fingerprint mismatch: {fp_p} != {fp_d}")
        v, d = primal["result"]["value"], dual["result"]["dual_value"]
        gap = v - d
        rel = gap / (1.0 + abs(v))
        tol = args.tol or 1e-5
        passed = bool(rel <= tol and gap >= -1e-7)
        return {"primal": v, "dual": d, "gap": gap, "rel_gap": rel, "passed": passed}, \
            EXIT_OK if passed else EXIT_VERIFY
    if prob is None:
        raise CLIError(EXIT_INVALID, "usage", "gap needs --input, or both --primal and --dual")
    model, sol = _solve(prob, args)
    cert = solve_dual(model, prob.mu, prob.nu, solution=sol)
    rep = duality_gap(sol, cert, tol=args.tol or 1e-5)
    return rep.to_dict(), EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_monotone(prob, args):
    model, sol = _solve(prob, args)
    v = check_c_monotone(model, sol.coupling, k_max=args.k_max, n_trials=args.trials, seed=args.seed,
                         tol=args.tol or 1e-6, dual=sol.g_start)
    return v.to_dict(), EXIT_OK if v.passed else EXIT_VERIFY


def _reference(prob):
    if prob.cost.get("kind") != "entropic":
        raise CLIError(EXIT_INVALID, "schema", "expected an entropic cost with a gamma matrix", "cost.kind")
    return ReferenceJoint(np.array(prob.cost["gamma"]))


def cmd_sinkhorn(prob, args):
    gamma = _reference(prob)
    res = sinkhorn(gamma, prob.mu, prob.nu, tol=args.tol or 1e-10)
    rep = res.to_dict()
    if args.emit_coupling:
        rep["coupling"] = res.coupling.mass
    if args.csv:
        _write_csv(args.csv, res.coupling.mass)
    return rep, EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_product_form(prob, args):
    gamma = _reference(prob)
    if "coupling" in prob.extra:
        try:
            mass = np.array(prob.extra["coupling"], dtype=float)
            c = Coupling(prob.mu, prob.nu, mass)
        except (TypeError, ValueError) as e:
            raise CLIError(EXIT_INVALID, "schema", str(e), "coupling") from None
        from_solver = False
    else:
        c = sinkhorn(gamma, prob.mu, prob.nu).coupling
        from_solver = True
    tol = args.tol or 1e-8
    try:
        pf = check_product_form(c, gamma, tol)
    except ValueError as e:
        raise CLIError(EXIT_INVALID, "coupling", str(e)) from None
    pr = pairwise_ratio_check(c, gamma, tol)
    rep = {"product_form": pf.to_dict(), "pairwise_ratio": pr.to_dict(), "passed": bool(pf.passed and pr.passed),
           "coupling_source": "sinkhorn" if from_solver else "input"}
    code = EXIT_OK if rep["passed"] or not from_solver else EXIT_VERIFY
    return rep, code


def cmd_order(prob, args):
    check = check_convex_order if args.order == "cx" else check_icx_order
    try:
        res = check(prob.mu, prob.nu)
    except ValueError as e:
        raise CLIError(EXIT_INVALID, "schema", str(e), "nu.points") from None
    rep = res.to_dict(args.order)
    if not args.emit_coupling and isinstance(res, OrderWitness):
        rep["witness"].pop("coupling")
    if isinstance(res, (OrderWitness, OrderCertificate)):
        return rep, EXIT_OK
    return rep, EXIT_NONCONVERGED


def cmd_brenier_strassen(prob, args):
    try:
        bs = solve_v2(prob.mu, prob.nu)
    except InconsistencyError as e:
        raise CLIError(EXIT_VERIFY, "inconsistency", str(e)) from None
    except ValueError as e:
        raise CLIError(EXIT_INVALID, "schema", str(e)) from None
    rep = bs.to_dict()
    if args.emit_coupling:
        rep["coupling"] = bs.coupling.mass
    return rep, EXIT_OK


def cmd_rockafellar(prob, args, graph=None):
    L = args.L
    source = "input" if graph is not None else "solve_v2"
    if graph is None:
        graph = solve_v2(prob.mu, prob.nu).map_graph
    # solver maps are 1-Lipschitz gradients, so they must pass for any L >= 1
    must_pass = source == "solve_v2" and L >= 1.0
    v = check_rockafellar_strassen(graph, L=L, cycle_len=args.cycle_len, n_trials=args.trials, seed=args.seed,
                                   tol=args.tol or 1e-6)
    probe = lipschitz_monotone_probe(graph)
    rep = {"rockafellar_strassen": v.to_dict(), "lipschitz": probe.to_dict(), "L": L, "graph_source": source}
    return rep, EXIT_VERIFY if must_pass and not v.passed else EXIT_OK


def _monopoly_problem(prob, args):
    theta = args.theta or prob.cost.get("theta", "l1")
    grid = prob.extra.get("grid")
    try:
        return MonopolyProblem(theta, prob.mu, prob.nu, grid)
    except ValueError as e:
        raise CLIError(EXIT_INVALID, "schema", str(e), "grid") from None


def cmd_monopoly(prob, args):
    mp = _monopoly_problem(prob, args)
    if not mp.is_1d:
        v1 = solve_form_i(mp)
        return {"v1": v1, "note": "forms ii-iv are grid LPs implemented in one dimension only"}, EXIT_OK
    try:
        fv = compare_four(mp, tol=args.tol or 1e-4)
    except MonopolyLPError as e:
        raise CLIError(EXIT_INVALID, "lp", str(e)) from None
    rep = fv.to_dict()
    rep["grid_size"] = int(mp.grid.size)
    return rep, EXIT_OK if fv.passed else EXIT_VERIFY


def cmd_kr_dual(prob, args):
    mp = _monopoly_problem(prob, argparse.Namespace(theta="l1"))
    if not mp.is_1d:
        raise CLIError(EXIT_INVALID, "schema", "the KR dual is implemented in one dimension", "mu.points")
    value, phi = solve_kr_dual(prob.mu, prob.nu, mp.grid)
    v1 = solve_form_i(mp)
    tol = args.tol or 1e-5
    passed = bool(abs(value - v1) <= tol)
    return {"value": value, "phi": phi, "grid": mp.grid, "form_i": v1, "passed": passed}, \
        EXIT_OK if passed else EXIT_VERIFY


def cmd_transfer_check(prob, args):
    model, sol = _solve(prob, args)
    v = verify_transfer_representation(model, prob.mu, prob.nu, tol=args.tol or 1e-4, solution=sol)
    return v.to_dict(), EXIT_OK if v.passed else EXIT_VERIFY


def cmd_stability(prob, args):
    model = _model(prob)
    rep = stability_probe(model, prob.mu, prob.nu, n_perturb=args.n_perturb,
                          seed=args.seed, opts=_opts(args))
    return rep.to_dict(), EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "dual": cmd_dual,
    "gap": cmd_gap,
    "monotone": cmd_monotone,
    "sinkhorn": cmd_sinkhorn,
    "product-form": cmd_product_form,
    "order": cmd_order,
    "brenier-strassen": cmd_brenier_strassen,
    "rockafellar": cmd_rockafellar,
    "monopoly": cmd_monopoly,
    "kr-dual": cmd_kr_dual,
    "transfer-check": cmd_transfer_check,
    "stability": cmd_stability,
}


# ----------------------------------------------------------------------------


def _read_json(path):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise CLIError(EXIT_INVALID, "io", str(e)) from None
    except json.JSONDecodeError as e:
        raise CLIError(EXIT_INVALID, "json", f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from None


def _write_csv(path, mass):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in mass])


def _graph_from_doc(doc):
    try:
        return [(np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float)))
                for x, y in doc["graph"]]
    except (TypeError, ValueError, KeyError) as e:
        raise CLIError(EXIT_INVALID, "schema", f"expected a list of [x, y] pairs: {e}", "graph") from None


def run_one(command: str, doc, args) -> tuple[dict, int]:
    """Run one subcommand on one problem record; returns (report, exit code)."""
    base = {"tool": "wotlab", "version": __version__, "command": command}
    try:
        if command == "rockafellar" and isinstance(doc, dict) and "graph" in doc:
            graph = _graph_from_doc(doc)
            pts = np.array([x for x, _ in graph])
            base["fingerprint"] = fingerprint(DiscreteMeasure(pts, np.full(len(pts), 1.0 / len(pts))),
                                              DiscreteMeasure(np.array([y for _, y in graph]),
                                                              np.full(len(pts), 1.0 / len(pts))),
                                              {"kind": "graph"})
            rep, code = cmd_rockafellar(None, args, graph)
        elif command == "gap" and doc is None:
            rep, code = cmd_gap(None, args)
            base["fingerprint"] = _read_json(args.primal).get("fingerprint")
        else:
            prob = _problem(doc)
            base["fingerprint"] = prob.fingerprint
            rep, code = COMMANDS[command](prob, args)
    except CLIError as e:
        return {**base, **e.to_dict()}, e.code
    except ConvergenceError as e:
        return {**base, "error": "convergence", "message": str(e)}, EXIT_NONCONVERGED
    base["result"] = rep
    return base, code


def _worker(payload):
    command, doc, ns = payload
    return run_one(command, doc, argparse.Namespace(**ns))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wotlab", description="Discrete weak optimal transport tools.")
    p.add_argument("--version", action="version", version=f"wotlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--input", "-i", help="problem JSON (a record or a list of records); '-' for stdin")
        s.add_argument("--output", "-o", help="report path (default: stdout)")
        s.add_argument("--tol", type=float, default=None, help="tolerance (default depends on the command)")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--emit-coupling", action="store_true")
        s.add_argument("--csv", help="also write the coupling as CSV to this path")
        s.add_argument("--skip-property-check", action="store_true")
        s.add_argument("--workers", type=int, default=1, help="worker processes for a list of records")
        s.add_argument("--trials", type=int, default=200)
        s.add_argument("--k-max", type=int, default=4)
        if name == "stability":
            s.add_argument("--n-perturb", type=int, default=5)
        if name == "gap":
            s.add_argument("--primal", help="report of 'solve'")
            s.add_argument("--dual", help="report of 'dual'")
        if name == "order":
            s.add_argument("--order", choices=("cx", "icx"), default="cx")
        if name == "rockafellar":
            s.add_argument("--L", type=float, default=1.0)
            s.add_argument("--cycle-len", type=int, default=4)
        if name in ("monopoly", "kr-dual"):
            s.add_argument("--theta", choices=("l1", "l2"), default=None)
    return p


def _setup_logging():
    level = os.environ.get("WOTLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.input is None:
            if args.command == "gap" and args.primal and args.dual:
                docs, single = [None], True
            else:
                raise CLIError(EXIT_INVALID, "usage", "--input is required")
        else:
            data = _read_json(args.input)
            single = not isinstance(data, list)
            docs = [data] if single else data
    except CLIError as e:
        sys.stderr.write(dumps(e.to_dict()))
        return e.code
    log.info("%s on %d record(s)", args.command, len(docs))

    if args.workers > 1 and len(docs) > 1:
        ns = {k: v for k, v in vars(args).items()}
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            results = list(ex.map(_worker, [(args.command, d, ns) for d in docs]))
    else:
        results = [run_one(args.command, d, args) for d in docs]

    reports = [r for r, _ in results]
    codes = [c for _, c in results]
    for r, c in results:
        if "error" in r:
            sys.stderr.write(dumps({k: r[k] for k in ("error", "message", "field") if k in r}))
    text = dumps(reports[0] if single else reports)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
