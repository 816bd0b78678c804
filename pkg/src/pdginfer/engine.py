"""End-to-end inference pipelines over calibrated cluster trees.

Pipelines: gamma = 0 solves the pure observational program; gamma > 0 in the
convex regime (beta >= gamma*alpha) solves the combined program; the 0+ limit
runs the observational stage, freezes the arc conditionals, and solves the
tie-breaking stage.  Outside the convex regime the convex-concave procedure
iterates linearized solves and labels its answer a local optimum.

Query answering works on the calibrated beliefs: marginals by out-of-clique
elimination over the minimal covering subtree, conditionals through a
precision-escalation loop (squared-delta refinement) so the returned value
carries a guaranteed absolute precision, and the inference-via-inconsistency
reduction answers unconditional queries using only inconsistency comparisons.

Reported query precision is sqrt(|VC|) times the solver's complementarity
gap, using the gap as the l2 proxy for belief error; the gap itself is the
certificate for objective (inconsistency) values.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .compiler import (
    CompiledProblem,
    CompileError,
    FrozenMarginals,
    RegimeError,
    _build_small_gamma,
    _subset_index,
    build_zero_plus_guarded,
    compile_cluster_inc,
    compile_cluster_small_gamma,
    compile_cluster_zero_plus,
    freeze_marginals,
    trivial_tree,
)
from .decomp import RootedClusterTree, TreeDecomposition, build_decomposition, root_and_assign
from .model import PDG, GammaSpec, PdgError
from .solver import solve

__all__ = [
    "InferenceError",
    "ImprobableEventError",
    "SolverFailure",
    "CalibratedBeliefs",
    "QueryResult",
    "InferenceReport",
    "infer",
    "inconsistency",
    "query_marginal",
    "query_conditional",
    "infer_via_inconsistency",
    "cccp_infer",
    "entropy_from_vcp",
    "entropy_bethe",
    "score_from_beliefs",
    "support_feasible",
]


class InferenceError(ValueError):
    """Raised for requests the engine cannot serve."""


class SolverFailure(RuntimeError):
    """Raised when the embedded solver fails to reach the requested status."""


class ImprobableEventError(InferenceError):
    """Conditioning event's probability could not be bounded away from zero."""

    def __init__(self, message: str, upper_bound: float):
        super().__init__(message)
        self.upper_bound = upper_bound


# -- calibrated beliefs --------------------------------------------------------


@dataclass
class CalibratedBeliefs:
    """Per-cluster distributions over a rooted tree, plus quality measures."""

    rct: RootedClusterTree
    beliefs: tuple  # one ndarray per cluster
    calibration_residual: float
    solver_gap: float
    pdg: PDG

    SUM_TOL = 1e-9

    def __post_init__(self):
        for vec in self.beliefs:
            if abs(float(np.sum(vec)) - 1.0) > self.SUM_TOL:
                raise InferenceError("cluster belief does not sum to 1")

    @property
    def n_cluster_values(self) -> int:
        return int(sum(len(v) for v in self.beliefs))

    def cluster_vars(self, ci: int) -> tuple:
        return tuple(self.rct.clusters[ci])

    def cluster_marginal(self, ci: int, subset: Sequence[str]) -> np.ndarray:
        idx = _subset_index(self.pdg, self.cluster_vars(ci), subset)
        out = np.zeros(self.pdg.cardinality(subset))
        np.add.at(out, idx, self.beliefs[ci])
        return out


def _calibration_residual(pdg: PDG, rct: RootedClusterTree, beliefs) -> float:
    worst = 0.0
    for i, j in rct.decomposition.edges:
        sep = tuple(
            sorted(
                set(rct.clusters[i]) & set(rct.clusters[j]),
                key=pdg.var_names.index,
            )
        )
        mi = np.zeros(pdg.cardinality(sep))
        np.add.at(mi, _subset_index(pdg, tuple(rct.clusters[i]), sep), beliefs[i])
        mj = np.zeros(pdg.cardinality(sep))
        np.add.at(mj, _subset_index(pdg, tuple(rct.clusters[j]), sep), beliefs[j])
        worst = max(worst, float(np.abs(mi - mj).sum()))
    return worst


# -- entropy decompositions -----------------------------------------------------


def _plogq(p: np.ndarray, q: np.ndarray) -> float:
    pos = p > 0
    return float((p[pos] * np.log(q[pos])).sum())


def entropy_from_vcp(cb: CalibratedBeliefs) -> float:
    """H of the represented joint via the rooted parent-overlap decomposition."""
    total = 0.0
    pdg, rct = cb.pdg, cb.rct
    for ci, vec in enumerate(cb.beliefs):
        vcp = rct.vcp[ci]
        idx = _subset_index(pdg, cb.cluster_vars(ci), vcp)
        denom_tbl = cb.cluster_marginal(ci, vcp)
        denom = denom_tbl[idx]
        pos = vec > 0
        total -= float((vec[pos] * np.log(vec[pos] / denom[pos])).sum())
    return total


def entropy_bethe(cb: CalibratedBeliefs) -> float:
    """H of the represented joint via cluster minus separator entropies."""
    pdg, rct = cb.pdg, cb.rct

    def ent(v):
        pos = v > 0
        return float(-(v[pos] * np.log(v[pos])).sum())

    total = sum(ent(vec) for vec in cb.beliefs)
    for i, j in rct.decomposition.edges:
        sep = tuple(
            sorted(set(rct.clusters[i]) & set(rct.clusters[j]), key=pdg.var_names.index)
        )
        total -= ent(cb.cluster_marginal(i, sep))
    return total


def score_from_beliefs(pdg: PDG, cb: CalibratedBeliefs, gamma: float) -> float:
    """Evaluate oinc + gamma*sinc of the represented joint from cluster data."""
    rct = cb.rct
    total = -gamma * entropy_from_vcp(cb)
    for a in pdg.arcs:
        ci = rct.arc_cluster[a.id]
        n_s, n_t = a.cpd.shape
        st = np.zeros(n_s * n_t)
        np.add.at(st, _subset_index(pdg, cb.cluster_vars(ci), a.sources + a.targets), cb.beliefs[ci])
        st = st.reshape(n_s, n_t)
        s_marg = st.sum(axis=1)
        pos = st > 0
        if a.beta:
            ref = s_marg[:, None] * a.cpd
            if np.any(pos & (ref <= 0)):
                return math.inf
            total += a.beta * float((st[pos] * np.log(st[pos] / ref[pos])).sum())
        if gamma and a.alpha:
            cond_ref = np.broadcast_to(s_marg[:, None], st.shape)
            h_cond = -float((st[pos] * np.log(st[pos] / cond_ref[pos])).sum())
            total += gamma * a.alpha * h_cond
    return total


# -- feasibility pre-pass --------------------------------------------------------


def support_feasible(pdg: PDG, rct: RootedClusterTree) -> bool:
    """Whether some assignment avoids every structural zero (tree CSP)."""
    allowed: List[np.ndarray] = []
    for ci, cluster in enumerate(rct.clusters):
        cluster = tuple(cluster)
        ok = np.ones(pdg.cardinality(cluster), dtype=bool)
        for a in pdg.arcs:
            if rct.arc_cluster[a.id] != ci:
                continue
            idx = _subset_index(pdg, cluster, a.sources + a.targets)
            ok &= a.cpd.ravel()[idx] > 0
        allowed.append(ok)
    order = rct.topo_order()
    feas = [v.copy() for v in allowed]
    for ci in reversed(order):
        parent = rct.parent[ci]
        if parent < 0:
            continue
        sep = rct.vcp[ci]
        idx_child = _subset_index(pdg, tuple(rct.clusters[ci]), sep)
        ok_sep = np.zeros(pdg.cardinality(sep), dtype=bool)
        np.logical_or.at(ok_sep, idx_child, feas[ci])
        idx_par = _subset_index(pdg, tuple(rct.clusters[parent]), sep)
        feas[parent] &= ok_sep[idx_par]
    return bool(feas[rct.root].any())


# -- reports ---------------------------------------------------------------------


@dataclass
class QueryResult:
    """A probability estimate with a guaranteed absolute precision."""

    estimate: float
    precision: float
    interval: Tuple[float, float]
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.interval
        if not (lo - 1e-12 <= self.estimate <= hi + 1e-12):
            raise InferenceError("estimate outside its own interval")


@dataclass
class InferenceReport:
    beliefs: Optional[CalibratedBeliefs]
    inconsistency: float
    gamma: GammaSpec
    stats: dict = field(default_factory=dict)
    sinc_value: Optional[float] = None
    local_optimum: bool = False

    @property
    def feasible(self) -> bool:
        return self.beliefs is not None


# -- the main pipeline -------------------------------------------------------------


def _resolve_tree(pdg: PDG, td: Optional[TreeDecomposition], method: str) -> RootedClusterTree:
    if td is None:
        td = build_decomposition(pdg, method=method)
    else:
        td.verify(pdg)
    return root_and_assign(td, pdg)


def _solved(compiled: CompiledProblem, tol: float, want: str = "optimal"):
    sol = solve(compiled.program, tol=tol)
    if sol.status != want:
        raise SolverFailure(
            f"solver returned {sol.status!r} (wanted {want!r}) after "
            f"{sol.iterations} iterations"
        )
    return sol


def _stage_stats(sol, compiled) -> dict:
    return {
        "iterations": sol.iterations,
        "gap": sol.gap,
        "status": sol.status,
        "n": compiled.program.n,
        "m": compiled.program.m,
        "objective": sol.objective,
    }


def infer(
    pdg: PDG,
    gamma,
    td: Optional[TreeDecomposition] = None,
    tol: float = 1e-8,
    variant: str = "linear-p",
    allow_cccp: bool = False,
    method: str = "min-fill",
) -> InferenceReport:
    """Full inference: compile, solve, calibrate, report inconsistency.

    gamma accepts a GammaSpec, "0", "0+", or a positive float.  For positive
    gamma outside the convex regime the call is rejected unless
    ``allow_cccp=True``, in which case it dispatches to cccp_infer.
    """
    spec = GammaSpec.parse(gamma)
    if spec.kind == "zero_plus" and not pdg.is_proper():
        raise InferenceError(
            "0+ inference requires a proper PDG (every alpha > 0 arc needs beta > 0)"
        )
    if spec.kind == "positive":
        bad = [a.id for a in pdg.arcs if a.beta < spec.gamma * a.alpha]
        if bad and not allow_cccp:
            raise RegimeError(
                f"gamma={spec.gamma} leaves the convex regime on arcs {bad}; "
                f"pass allow_cccp=True to accept a local optimum"
            )
        if bad:
            return cccp_infer(pdg, spec.gamma, td=td, tol=tol, method=method)
    rct = _resolve_tree(pdg, td, method)
    if not support_feasible(pdg, rct):
        return InferenceReport(
            beliefs=None,
            inconsistency=math.inf,
            gamma=spec,
            stats={"status": "infeasible-support"},
        )
    t0 = time.perf_counter()
    stats: Dict[str, dict] = {}
    if spec.kind == "zero":
        compiled = compile_cluster_inc(pdg, rct)
        sol = _solved(compiled, tol)
        beliefs = compiled.cluster_beliefs(sol.primal)
        inc = sol.objective
        stats["stage1"] = _stage_stats(sol, compiled)
        gap = sol.gap
        sinc_value = None
    elif spec.kind == "positive":
        compiled = compile_cluster_small_gamma(pdg, rct, spec.gamma, variant)
        sol = _solved(compiled, tol)
        beliefs = compiled.cluster_beliefs(sol.primal)
        inc = sol.objective
        stats["stage1"] = _stage_stats(sol, compiled)
        gap = sol.gap
        sinc_value = None
    else:  # zero_plus
        stage1_tol = min(tol, 1e-8)
        compiled1 = compile_cluster_inc(pdg, rct)
        sol1 = _solved(compiled1, stage1_tol)
        beliefs1 = compiled1.cluster_beliefs(sol1.primal)
        frozen = freeze_marginals(beliefs1, pdg, rct)
        # stage two carries an explicit budget on the stage-one objective;
        # the bare conditional-match construction can leak mass onto worse
        # regions when stage one leaves source configurations unvisited
        compiled2 = build_zero_plus_guarded(
            pdg, rct, frozen, oinc_budget=sol1.objective
        )
        sol2 = _solved(compiled2, tol)
        beliefs = compiled2.cluster_beliefs(sol2.primal)
        inc = sol1.objective
        sinc_value = sol2.objective
        stats["stage1"] = _stage_stats(sol1, compiled1)
        stats["stage2"] = _stage_stats(sol2, compiled2)
        gap = max(sol1.gap, sol2.gap)
    resid = _calibration_residual(pdg, rct, beliefs)
    cb = CalibratedBeliefs(rct, tuple(beliefs), resid, gap, pdg)
    stats["time"] = time.perf_counter() - t0
    return InferenceReport(cb, inc, spec, stats, sinc_value=sinc_value)


def inconsistency(pdg: PDG, gamma, td: Optional[TreeDecomposition] = None, tol: float = 1e-8) -> float:
    """The optimal score value in nats (stage-one value under 0+)."""
    return infer(pdg, gamma, td=td, tol=tol).inconsistency


# -- marginal queries over calibrated beliefs ------------------------------------


class _Factor:
    def __init__(self, variables: tuple, table: np.ndarray):
        self.vars = tuple(variables)
        self.table = table

    @classmethod
    def from_cluster(cls, cb: CalibratedBeliefs, ci: int) -> "_Factor":
        names = cb.cluster_vars(ci)
        shape = [cb.pdg.variable(v).cardinality for v in names]
        return cls(names, cb.beliefs[ci].reshape(shape))

    def multiply(self, other: "_Factor") -> "_Factor":
        merged = list(self.vars) + [v for v in other.vars if v not in self.vars]
        a = self._aligned(merged)
        b = other._aligned(merged)
        return _Factor(tuple(merged), a * b)

    def _aligned(self, merged: List[str]) -> np.ndarray:
        mine = set(self.vars)
        present = [v for v in merged if v in mine]
        perm = [self.vars.index(v) for v in present]
        arr = np.transpose(self.table, perm)
        shape, k = [], 0
        for v in merged:
            if v in mine:
                shape.append(arr.shape[k])
                k += 1
            else:
                shape.append(1)
        return arr.reshape(shape)

    def marginalize_to(self, keep: Sequence[str]) -> "_Factor":
        keep = [v for v in self.vars if v in set(keep)]
        drop_axes = tuple(i for i, v in enumerate(self.vars) if v not in set(keep))
        return _Factor(tuple(keep), self.table.sum(axis=drop_axes) if drop_axes else self.table)

    def value_at(self, assignment: Mapping[str, int]) -> float:
        idx = tuple(assignment[v] for v in self.vars)
        return float(self.table[idx])


def _conditional_factor(cb: CalibratedBeliefs, ci: int, sep: tuple) -> _Factor:
    """mu_C / mu_C(sep), with 0/0 treated as 0."""
    f = _Factor.from_cluster(cb, ci)
    if not sep:
        return f
    denom = f.marginalize_to(sep)
    d = denom._aligned(list(f.vars))
    with np.errstate(divide="ignore", invalid="ignore"):
        table = np.where(d > 0, f.table / np.where(d > 0, d, 1.0), 0.0)
    return _Factor(f.vars, table)


def _covering_subtree(cb: CalibratedBeliefs, targets: Sequence[str]) -> List[int]:
    rct = cb.rct
    chosen = []
    for v in targets:
        hits = [i for i, c in enumerate(rct.clusters) if v in c]
        if not hits:
            raise InferenceError(f"unknown variable {v!r}")
        chosen.append(min(hits))
    td = rct.decomposition
    parents = td._bfs_parents(chosen[0])
    needed = set()
    for c in chosen:
        path = td._path(parents, chosen[0], c)
        needed.update(path)
    return sorted(needed)


def query_marginal(cb: CalibratedBeliefs, target: Mapping[str, object]) -> QueryResult:
    """Pr(assignment) by elimination over the minimal covering subtree."""
    if not target:
        raise InferenceError("empty query")
    pdg = cb.pdg
    values = {}
    for name, value in target.items():
        values[name] = pdg.value_index(name, value)  # raises on unknowns
    names = list(values)
    sub = _covering_subtree(cb, names)
    sub_set = set(sub)
    rct = cb.rct
    # orient the subtree from its first cluster
    root = sub[0]
    parents = rct.decomposition._bfs_parents(root)
    children: Dict[int, List[int]] = {ci: [] for ci in sub}
    for ci in sub:
        p = parents[ci]
        if ci != root and p in sub_set:
            children[p].append(ci)
    order = []
    stack = [root]
    while stack:
        ci = stack.pop()
        order.append(ci)
        stack.extend(children[ci])
    keep = set(names)
    messages: Dict[int, List[_Factor]] = {ci: [] for ci in sub}
    for ci in reversed(order):
        if ci == root:
            f = _Factor.from_cluster(cb, ci)
        else:
            p = parents[ci]
            sep = tuple(
                sorted(
                    set(rct.clusters[ci]) & set(rct.clusters[p]),
                    key=pdg.var_names.index,
                )
            )
            f = _conditional_factor(cb, ci, sep)
        for msg in messages[ci]:
            f = f.multiply(msg)
        if ci == root:
            result = f.marginalize_to(names)
        else:
            scope = set(sep) | (set(f.vars) & keep)
            messages[parents[ci]].append(f.marginalize_to(tuple(scope)))
    estimate = float(np.clip(result.value_at(values), 0.0, 1.0))
    precision = math.sqrt(cb.n_cluster_values) * cb.solver_gap
    lo, hi = max(0.0, estimate - precision), min(1.0, estimate + precision)
    return QueryResult(estimate, precision, (lo, hi))


# -- conditional queries with precision escalation ---------------------------------


class _MarginalOracle:
    """Marginal queries at requested precision, re-solving as needed.

    Requested solver tolerances are floored at the numerically attainable
    limit; achieved gaps (hence reported precisions) are what count.
    """

    MIN_TOL = 1e-10
    MAX_TOL = 1e-8

    def __init__(self, pdg, gamma, td=None, method="min-fill"):
        self.pdg = pdg
        self.gamma = gamma
        self.rct = _resolve_tree(pdg, td, method)
        self.td = self.rct.decomposition
        self._cache: Dict[float, CalibratedBeliefs] = {}
        self.solves = 0

    def beliefs_at(self, solver_tol: float) -> CalibratedBeliefs:
        for cached_tol, cb in self._cache.items():
            if cached_tol <= solver_tol:
                return cb
        report = infer(self.pdg, self.gamma, td=self.td, tol=solver_tol)
        if not report.feasible:
            raise InferenceError("PDG admits no distribution of finite score")
        self.solves += 1
        self._cache[solver_tol] = report.beliefs
        return report.beliefs

    def marginal(self, assignment: Mapping[str, object], delta: float) -> QueryResult:
        n_vc = sum(
            self.pdg.cardinality(tuple(c)) for c in self.rct.clusters
        )
        tol = min(self.MAX_TOL, delta / (4.0 * math.sqrt(n_vc)))
        tol = max(tol, self.MIN_TOL)
        cb = self.beliefs_at(tol)
        return query_marginal(cb, assignment)


def query_conditional(
    pdg: PDG,
    gamma,
    target: Mapping[str, object],
    evidence: Mapping[str, object],
    epsilon: float = 1e-4,
    td: Optional[TreeDecomposition] = None,
    delta_floor: float = 1e-300,
) -> QueryResult:
    """Pr(target | evidence) within epsilon via squared-delta escalation.

    Repeatedly estimates the evidence probability at precision delta; once
    the estimate clears 2*delta, both numerator and denominator are
    re-estimated at delta* = epsilon*(a - delta)/3 and the stabilized ratio
    q/(p + delta*) is returned.  If delta underflows ``delta_floor`` first,
    the evidence is reported improbable with its best upper bound.
    """
    if not evidence:
        raise InferenceError("query_conditional requires evidence")
    if set(target) & set(evidence):
        raise InferenceError("target and evidence variables must be disjoint")
    if not (0 < epsilon < 1):
        raise InferenceError("epsilon must lie in (0, 1)")
    oracle = _MarginalOracle(pdg, gamma, td=td)
    both = dict(target)
    both.update(evidence)
    delta = epsilon
    escalations = 0
    while True:
        res = oracle.marginal(evidence, delta)
        a = res.estimate
        if res.precision > delta:
            # the marginal subroutine can no longer honor its precision
            # contract, so the evidence cannot be bounded away from zero
            raise ImprobableEventError(
                f"evidence probability is at most {a + res.precision:.3e}; "
                f"cannot condition at precision {epsilon}",
                upper_bound=a + res.precision,
            )
        if a > 2 * delta:
            delta_star = epsilon * (a - delta) / 3.0
            res_p = oracle.marginal(evidence, delta_star)
            res_q = oracle.marginal(both, delta_star)
            if max(res_p.precision, res_q.precision) > delta_star:
                raise ImprobableEventError(
                    f"evidence probability is at most "
                    f"{res_p.estimate + res_p.precision:.3e}; cannot condition "
                    f"at precision {epsilon}",
                    upper_bound=res_p.estimate + res_p.precision,
                )
            estimate = float(
                np.clip(res_q.estimate / (res_p.estimate + delta_star), 0.0, 1.0)
            )
            lo, hi = max(0.0, estimate - epsilon), min(1.0, estimate + epsilon)
            return QueryResult(
                estimate,
                epsilon,
                (lo, hi),
                stats={"escalations": escalations, "solves": oracle.solves},
            )
        if delta * delta < delta_floor:
            raise ImprobableEventError(
                f"evidence probability is at most {a + delta:.3e}; cannot "
                f"condition at precision {epsilon}",
                upper_bound=a + delta,
            )
        delta = delta * delta
        escalations += 1


# -- inference via inconsistency comparison ----------------------------------------


def _fresh_name(pdg: PDG, base: str) -> str:
    name = base
    while name in pdg.var_names:
        name += "_"
    return name


def observation_widget(pdg: PDG, event: Mapping[str, object], p: float) -> Tuple[PDG, str]:
    """Extend the PDG with an indicator variable asserting Pr(event) = p.

    Adds a binary variable that deterministically reports whether the event
    holds, plus an unconditional cpd (p, 1-p) on it.  Both widget arcs carry
    alpha = 0 (no structural claim) and beta = 1.
    """
    from .model import Hyperarc, Variable  # local import to keep module load light

    if not 0.0 < p < 1.0:
        raise InferenceError("widget probability must be strictly inside (0, 1)")
    names = [n for n in pdg.var_names if n in event]
    if len(names) != len(event):
        unknown = set(event) - set(names)
        raise InferenceError(f"unknown variables in event: {sorted(unknown)}")
    ind = _fresh_name(pdg, "OBS_" + "_".join(names))
    match = pdg.assignment_index(names, [event[n] for n in names])
    n_src = pdg.cardinality(names)
    det = np.zeros((n_src, 2))
    for s in range(n_src):
        det[s, 0 if s == match else 1] = 1.0
    widget = PDG(
        list(pdg.variables) + [Variable(ind, ("event", "other"))],
        list(pdg.arcs)
        + [
            Hyperarc(_fresh_name(pdg, "def_" + ind), tuple(names), (ind,), det, alpha=0.0, beta=1.0),
            Hyperarc(
                _fresh_name(pdg, "assert_" + ind),
                (),
                (ind,),
                np.array([[p, 1.0 - p]]),
                alpha=0.0,
                beta=1.0,
            ),
        ],
    )
    return widget, ind


class _InconsistencyOracle:
    """f(p) = inconsistency of (PDG + Pr(event) = p), solved to a precision.

    The requested comparison precision shrinks like (z - b)^4 and quickly
    passes below what floating point can certify; it is floored at the
    attainable objective accuracy (the tie rule keeps the search sound, and
    strong convexity bounds the answer drift by about sqrt(floor/gamma)).
    """

    MIN_TOL = 1e-9
    PRECISION_FLOOR = 1e-8

    def __init__(self, pdg, gamma: float, event, method="min-fill"):
        self.pdg = pdg
        self.gamma = gamma
        self.event = dict(event)
        probe, _ = observation_widget(pdg, self.event, 0.5)
        self.td = build_decomposition(probe, method=method)
        self._cache: Dict[float, Tuple[float, float]] = {}
        self.evaluations = 0

    def value(self, p: float, precision: float) -> float:
        cached = self._cache.get(p)
        if cached is not None and cached[0] <= precision:
            return cached[1]
        tol = max(self.MIN_TOL, min(1e-8, precision / 4.0))
        widget, _ = observation_widget(self.pdg, self.event, p)
        report = infer(widget, self.gamma, td=self.td, tol=tol)
        self.evaluations += 1
        self._cache[p] = (tol, report.inconsistency)
        return report.inconsistency


def infer_via_inconsistency(
    pdg: PDG,
    gamma,
    event: Mapping[str, object],
    epsilon: float = 1e-3,
    td: Optional[TreeDecomposition] = None,
) -> QueryResult:
    """Pr(event) located by interval search over inconsistency comparisons.

    Maintains a <= b <= c with the optimum inside [a, c]; each iteration
    probes the midpoint of the longer half and shrinks the interval by at
    least a quarter.  Comparisons are resolved by two inconsistency
    evaluations at the precision log(1 + 8 gamma (z-b)^2)^2 / (16 gamma);
    ties keep the left branch.
    """
    spec = GammaSpec.parse(gamma)
    if spec.kind != "positive":
        raise InferenceError("the reduction needs a positive gamma")
    g = spec.gamma
    bad = [a.id for a in pdg.arcs if a.alpha > 0 and g >= a.beta / a.alpha]
    if bad:
        raise InferenceError(
            f"gamma={g} must be strictly below beta/alpha on arcs {bad}"
        )
    if not pdg.is_proper():
        raise InferenceError("the reduction requires a proper PDG")
    if not 0 < epsilon < 1:
        raise InferenceError("epsilon must lie in (0, 1)")
    oracle = _InconsistencyOracle(pdg, g, event)

    def less(z: float, b: float) -> bool:
        """Decide f(z) < f(b), keeping the left branch on a tie."""
        eps_prime = math.log1p(8.0 * g * (z - b) ** 2) ** 2 / (16.0 * g)
        eps_prime = max(eps_prime, oracle.PRECISION_FLOOR)
        fz = oracle.value(z, eps_prime)
        fb = oracle.value(b, eps_prime)
        if abs(fz - fb) > eps_prime:
            return fz < fb
        return z < b

    a, b, c = 0.0, 0.5, 1.0
    iterations = 0
    while c - a > epsilon:
        iterations += 1
        if b - a >= c - b:
            z = (a + b) / 2.0
            if less(z, b):
                a, b, c = a, z, b
            else:
                a, b, c = z, b, c
        else:
            z = (b + c) / 2.0
            if less(z, b):
                a, b, c = b, z, c
            else:
                a, b, c = a, b, z
    lo, hi = max(0.0, a), min(1.0, c)
    return QueryResult(
        b,
        epsilon,
        (lo, hi),
        stats={"iterations": iterations, "evaluations": oracle.evaluations},
    )


# -- convex-concave procedure --------------------------------------------------------


def cccp_infer(
    pdg: PDG,
    gamma: float,
    td: Optional[TreeDecomposition] = None,
    tol: float = 1e-8,
    objective_tol: float = 1e-8,
    max_rounds: int = 25,
    variant: str = "linear-p",
    method: str = "min-fill",
) -> InferenceReport:
    """Iterated linearized solves for gamma outside the convex regime.

    Arcs with beta >= gamma*alpha keep their cones; the remaining (concave)
    conditional-entropy terms are linearized at the incumbent beliefs.  The
    objective (evaluated exactly from the beliefs) is nonincreasing; the
    result is a local optimum and the report is flagged accordingly.
    """
    gamma = float(gamma)
    if gamma <= 0:
        raise InferenceError("cccp needs gamma > 0")
    rct = _resolve_tree(pdg, td, method)
    if not support_feasible(pdg, rct):
        return InferenceReport(
            beliefs=None,
            inconsistency=math.inf,
            gamma=GammaSpec("positive", gamma),
            stats={"status": "infeasible-support"},
        )
    convex_ids = {a.id for a in pdg.arcs if a.beta >= gamma * a.alpha}
    concave = [a for a in pdg.arcs if a.id not in convex_ids]
    t0 = time.perf_counter()
    beliefs = None
    trace: List[float] = []
    rounds = 0
    gap = math.inf
    for rounds in range(1, max_rounds + 1):
        extra: Dict[Tuple[int, int], float] = {}
        for a in concave:
            ci = rct.arc_cluster[a.id]
            cluster = tuple(rct.clusters[ci])
            idx_st = _subset_index(pdg, cluster, a.sources + a.targets)
            idx_s = _subset_index(pdg, cluster, a.sources)
            if beliefs is None:
                cond = np.full(a.cpd.shape, 1.0 / a.cpd.shape[1]).ravel()
            else:
                vec = beliefs[ci]
                st = np.zeros(a.cpd.size)
                np.add.at(st, idx_st, vec)
                st = st.reshape(a.cpd.shape)
                s_marg = np.maximum(st.sum(axis=1), 1e-300)
                cond = np.clip(st / s_marg[:, None], 1e-12, None).ravel()
            coeff = gamma * a.alpha - a.beta
            logc = np.log(cond)
            for c_idx in range(pdg.cardinality(cluster)):
                key = (ci, c_idx)
                extra[key] = extra.get(key, 0.0) - coeff * float(logc[idx_st[c_idx]])
        compiled = _build_small_gamma(
            pdg,
            rct,
            gamma,
            variant,
            cone_arc_ids=convex_ids,
            extra_mu_cost=extra,
            enforce_regime=False,
        )
        sol = _solved(compiled, tol)
        beliefs = compiled.cluster_beliefs(sol.primal)
        gap = sol.gap
        resid = _calibration_residual(pdg, rct, beliefs)
        cb = CalibratedBeliefs(rct, tuple(beliefs), resid, gap, pdg)
        trace.append(score_from_beliefs(pdg, cb, gamma))
        if not concave:
            break
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= objective_tol:
            break
    resid = _calibration_residual(pdg, rct, beliefs)
    cb = CalibratedBeliefs(rct, tuple(beliefs), resid, gap, pdg)
    return InferenceReport(
        cb,
        trace[-1],
        GammaSpec("positive", gamma),
        stats={
            "cccp_iterations": rounds,
            "objective_trace": trace,
            "time": time.perf_counter() - t0,
        },
        local_optimum=bool(concave),
    )
