"""Request handlers shared by the FastAPI app and the command-line client.

Errors are normalized to ServiceError with a machine-readable code so both
surfaces (HTTP status + JSON body, process exit code + stderr) can map them
uniformly:

    input-error          -> exit 2 / HTTP 400
    solver-failure       -> exit 3 / HTTP 500
    improbable-event     -> exit 3 / HTTP 409
    unsupported-regime   -> exit 4 / HTTP 422
"""

from __future__ import annotations

import json
import math
import re
import time
from typing import Optional, Tuple

from .. import engine, generators, oracle, pdgfile
from ..compiler import (
    RegimeError,
    compile_cluster_inc,
    compile_cluster_small_gamma,
    compile_cluster_zero_plus,
    freeze_marginals,
)
from ..decomp import build_decomposition, root_and_assign
from ..model import GammaSpec, PDG, PdgError
from ..program import dump_program
from ..solver import solve

__all__ = ["ServiceError", "handle_infer", "handle_generate_random",
           "handle_generate_ktree", "handle_compile", "handle_oracle"]


class ServiceError(Exception):
    def __init__(self, code: str, message: str, details: Optional[list] = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.details = details or []


QUERY_RE = re.compile(r"^[^|]+(\|[^|]+)?$")


def _parse_assignments(pdg: PDG, text: str) -> dict:
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part or "=" not in part:
            raise ServiceError("input-error", f"bad assignment {part!r} in query")
        name, _, raw = part.partition("=")
        name = name.strip()
        raw = raw.strip()
        try:
            var = pdg.variable(name)
        except KeyError:
            raise ServiceError("input-error", f"unknown variable {name!r} in query")
        matches = [v for v in var.values if str(v) == raw]
        if not matches:
            raise ServiceError(
                "input-error", f"unknown value {raw!r} for variable {name!r}"
            )
        if name in out:
            raise ServiceError("input-error", f"variable {name!r} repeated in query")
        out[name] = matches[0]
    return out


def parse_query(pdg: PDG, text: str) -> Tuple[dict, dict]:
    """Parse 'Y=y[,Z=z...][|X=x[,...]]' into (target, evidence) dicts."""
    if not QUERY_RE.match(text or ""):
        raise ServiceError("input-error", f"bad query syntax {text!r}")
    target_text, _, evidence_text = text.partition("|")
    target = _parse_assignments(pdg, target_text)
    evidence = _parse_assignments(pdg, evidence_text) if evidence_text else {}
    overlap = set(target) & set(evidence)
    if overlap:
        raise ServiceError(
            "input-error", f"query and evidence share variables {sorted(overlap)}"
        )
    return target, evidence


def _load_pdg(doc: dict):
    try:
        return pdgfile.parse_pdg(json.dumps(doc))
    except pdgfile.PdgFileError as exc:
        raise ServiceError(
            "input-error", str(exc), details=exc.report.violations
        ) from exc


def _parse_gamma(text: str) -> GammaSpec:
    try:
        return GammaSpec.parse(text)
    except (PdgError, ValueError) as exc:
        raise ServiceError("input-error", f"bad gamma {text!r}: {exc}") from exc


def handle_infer(req) -> dict:
    pdg, td = _load_pdg(req.pdg)
    spec = _parse_gamma(req.gamma)
    t0 = time.perf_counter()
    try:
        report = engine.infer(
            pdg, spec, td=td, tol=req.tol, allow_cccp=req.allow_cccp
        )
    except RegimeError as exc:
        raise ServiceError("unsupported-regime", str(exc)) from exc
    except engine.InferenceError as exc:
        code = "unsupported-regime" if "proper" in str(exc) else "input-error"
        raise ServiceError(code, str(exc)) from exc
    except engine.SolverFailure as exc:
        raise ServiceError("solver-failure", str(exc)) from exc
    out = {
        "status": "ok" if report.feasible else "infeasible",
        "gamma": str(spec),
        "inconsistency": None if math.isinf(report.inconsistency) else report.inconsistency,
        "sinc_value": report.sinc_value,
        "local_optimum": report.local_optimum,
        "solver": {
            k: v for k, v in report.stats.items() if isinstance(v, dict)
        },
        "timing_seconds": time.perf_counter() - t0,
    }
    if report.feasible:
        out["decomposition_width"] = report.beliefs.rct.decomposition.width
    if req.query:
        if not report.feasible:
            raise ServiceError(
                "solver-failure", "cannot answer queries on an infeasible PDG"
            )
        target, evidence = parse_query(pdg, req.query)
        try:
            if evidence:
                ans = engine.query_conditional(
                    pdg, spec, target, evidence, epsilon=req.eps, td=td
                )
            else:
                ans = engine.query_marginal(report.beliefs, target)
        except engine.ImprobableEventError as exc:
            raise ServiceError(
                "improbable-event",
                f"conditioning-on-improbable-event: {exc}",
            ) from exc
        out["query"] = {
            "query": req.query,
            "estimate": ans.estimate,
            "precision": ans.precision,
            "interval": tuple(ans.interval),
        }
    if req.include_beliefs and report.feasible:
        out["beliefs"] = [
            {
                "variables": list(report.beliefs.rct.clusters[ci]),
                "probabilities": [float(p) for p in vec],
            }
            for ci, vec in enumerate(report.beliefs.beliefs)
        ]
    return out


def handle_generate_random(req) -> dict:
    def rng_range(value, default):
        return (value, value) if value is not None else default

    pdg = generators.random_pdg(
        seed=req.seed,
        n_range=rng_range(req.n, (5, 9)),
        arcs_range=rng_range(req.arcs, (7, 14)),
        values=(req.vals,) if req.vals is not None else (2, 3),
    )
    return {"pdg": json.loads(pdgfile.emit_pdg(pdg))}


def handle_generate_ktree(req) -> dict:
    try:
        pdg, td = generators.random_ktree_pdg(
            seed=req.seed,
            n=req.n,
            treewidth=req.treewidth,
            n_arcs=req.arcs,
            values=req.vals,
        )
    except ValueError as exc:
        raise ServiceError("input-error", str(exc)) from exc
    return {"pdg": json.loads(pdgfile.emit_pdg(pdg, td))}


def handle_compile(req) -> dict:
    pdg, td = _load_pdg(req.pdg)
    spec = _parse_gamma(req.gamma)
    if td is None:
        td = build_decomposition(pdg)
    rct = root_and_assign(td, pdg)
    try:
        if spec.kind == "zero":
            compiled = compile_cluster_inc(pdg, rct)
        elif spec.kind == "positive":
            compiled = compile_cluster_small_gamma(pdg, rct, spec.gamma, req.variant)
        else:
            stage1 = compile_cluster_inc(pdg, rct)
            sol = solve(stage1.program, tol=1e-8)
            if sol.status != "optimal":
                raise ServiceError(
                    "solver-failure", f"stage-one solve returned {sol.status}"
                )
            frozen = freeze_marginals(
                stage1.cluster_beliefs(sol.primal), pdg, rct
            )
            compiled = compile_cluster_zero_plus(pdg, rct, frozen)
    except RegimeError as exc:
        raise ServiceError("unsupported-regime", str(exc)) from exc
    prog = compiled.program
    return {
        "kind": compiled.kind,
        "n": prog.n,
        "m": prog.m,
        "objective_scale": prog.objective_scale,
        "objective_offset": prog.objective_offset,
        "dump": dump_program(prog),
    }


def handle_oracle(req) -> dict:
    if (req.pdg is None) == (req.cnf is None):
        raise ServiceError("input-error", "provide exactly one of pdg or cnf")
    if req.cnf is not None:
        try:
            formula = oracle.parse_dimacs(req.cnf)
            count = oracle.count_models(formula)
            encoded = oracle.encode_cnf(formula)
        except oracle.OracleError as exc:
            raise ServiceError("input-error", str(exc)) from exc
        return {
            "status": "ok",
            "model_count": count,
            "n_vars": formula.n_vars,
            "n_clauses": len(formula.clauses),
            "pdg": json.loads(pdgfile.emit_pdg(encoded)),
        }
    pdg, _ = _load_pdg(req.pdg)
    spec = _parse_gamma(req.gamma)
    try:
        mu = oracle.brute_force_optimum(
            pdg, spec, restarts=req.restarts, iters=req.iters
        )
    except oracle.OracleError as exc:
        raise ServiceError("input-error", str(exc)) from exc
    from ..model import score_gamma

    g = spec.gamma if spec.kind == "positive" else 0.0
    objective = score_gamma(pdg, mu, g)
    return {
        "status": "ok",
        "objective": objective,
        "marginals": {
            name: [float(p) for p in mu.marginal((name,))]
            for name in pdg.var_names
        },
    }
