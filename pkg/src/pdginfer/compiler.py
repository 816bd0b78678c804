"""Compile PDG inference problems into standard-form exponential conic programs.

Three problem families are produced, over either a cluster tree or the
trivial single-cluster tree (the joint-distribution forms):

- "inc":         minimize sum_a beta_a u_{a,s,t} with per-arc relative-entropy
                 cones over cluster marginals, calibration equalities, and
                 per-cluster simplex rows.
- "small-gamma": adds per-(C,c) entropy cones against the parent-overlap
                 marginal and zero rows for cpd zeros.  The default variant
                 moves the cpd logs into the linear term ("linear-p"); the
                 textbook variant with the cpd inside the cone is kept behind
                 ``variant="cone-p"`` for differential testing.
- "zero-plus":   second stage minimizing 1^T u with cones against
                 k (*) parent-overlap marginals and conditional-marginal
                 match rows against the frozen stage-one solution.

Cone blocks are consecutive triples (x1, x2, x3) with x1 >= x2 exp(x3/x2);
a bound u >= q log(q/r) is encoded as x1 = r, x2 = q, x3 = -u, so bound
coordinates ("u", "v") enter the conic vector negated: the bound's value is
minus the solution entry at the recorded column.

Standard-form sizes are exact:
  inc:          n = 3|VA| + |VC|,  m = 2|VA| + |VT| + |clusters|
  small-gamma:  n = 3|VA| + 3|VC|, m = 2|VA| + |VT| + |VA0| + |VC| + |clusters|
  zero-plus:    n = 3|VC|,         m = |VC| + |VT| + |VA| + |clusters|
with VA the (arc, source value, target value) triples, VC the
(cluster, cluster value) pairs, VT the (tree edge, separator value) pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .cones import ConeSpec
from .decomp import RootedClusterTree, TreeDecomposition, root_and_assign
from .model import PDG, Hyperarc, JointDistribution
from .program import ConicProgram

__all__ = [
    "CompileError",
    "RegimeError",
    "IndexMap",
    "ArcValueSplit",
    "FrozenMarginals",
    "CompiledProblem",
    "trivial_tree",
    "compile_cluster_inc",
    "compile_cluster_small_gamma",
    "compile_cluster_zero_plus",
    "compile_joint_inc",
    "compile_joint_small_gamma",
    "compile_joint_zero_plus",
    "freeze_marginals",
]


class CompileError(ValueError):
    """Raised for inputs the compiler cannot express."""


class RegimeError(CompileError):
    """Raised when gamma falls outside the convex regime beta >= gamma*alpha."""


def _subset_index(pdg: PDG, cluster: Sequence[str], subset: Sequence[str]) -> np.ndarray:
    """For each cluster config, the flat index of its restriction to subset."""
    cards = [pdg.variable(v).cardinality for v in cluster]
    sub_cards = [pdg.variable(v).cardinality for v in subset]
    strides = np.ones(len(cards), dtype=np.int64)
    for i in range(len(cards) - 2, -1, -1):
        strides[i] = strides[i + 1] * cards[i + 1]
    sub_strides = np.ones(len(sub_cards), dtype=np.int64)
    for i in range(len(sub_cards) - 2, -1, -1):
        sub_strides[i] = sub_strides[i + 1] * sub_cards[i + 1]
    n = int(np.prod(cards)) if cards else 1
    out = np.zeros(n, dtype=np.int64)
    configs = np.arange(n, dtype=np.int64)
    pos = {v: i for i, v in enumerate(cluster)}
    for v, ss in zip(subset, sub_strides):
        i = pos[v]
        digit = (configs // strides[i]) % cards[i]
        out += digit * int(ss)
    return out


@dataclass
class IndexMap:
    """Columns of every named conic coordinate (a bijection onto 0..n-1)."""

    columns: Dict[tuple, int] = field(default_factory=dict)
    n: int = 0

    def add(self, key: tuple) -> int:
        if key in self.columns:
            raise CompileError(f"duplicate coordinate {key!r}")
        self.columns[key] = self.n
        self.n += 1
        return self.columns[key]

    def col(self, *key) -> int:
        return self.columns[key]

    def check_bijection(self) -> None:
        cols = sorted(self.columns.values())
        if cols != list(range(self.n)):
            raise CompileError("index map is not a bijection onto 0..n-1")


@dataclass(frozen=True)
class ArcValueSplit:
    """(arc, s, t) triples with positive cpd entries vs. structural zeros."""

    plus: tuple
    zero: tuple

    @classmethod
    def of(cls, pdg: PDG) -> "ArcValueSplit":
        plus, zero = [], []
        for a in pdg.arcs:
            n_s, n_t = a.cpd.shape
            for s in range(n_s):
                for t in range(n_t):
                    (plus if a.cpd[s, t] > 0 else zero).append((a.id, s, t))
        return cls(tuple(plus), tuple(zero))


@dataclass
class FrozenMarginals:
    """Per-arc conditionals from a stage-one optimum plus the k vector.

    ``cond[aid]`` is the (S x T) conditional table; rows with vanishing
    source marginal are uniform and listed in ``undefined[aid]``.  ``k`` has
    one array per cluster: k[(C,c)] = prod over arcs assigned to C of
    cond(T(c) | S(c)) ** alpha.
    """

    cond: Dict[str, np.ndarray]
    joint: Dict[str, np.ndarray]
    source: Dict[str, np.ndarray]
    undefined: Dict[str, tuple]
    k: tuple  # one ndarray per cluster
    rct: RootedClusterTree


@dataclass
class CompiledProblem:
    """A standard-form program plus the coordinate map that produced it."""

    program: ConicProgram
    index: IndexMap
    rct: RootedClusterTree
    kind: str
    va_split: ArcValueSplit
    cluster_sizes: tuple = ()

    def cluster_beliefs(self, x_over_tau: np.ndarray) -> List[np.ndarray]:
        """Per-cluster belief vectors read off a primal point (renormalized)."""
        out = []
        for ci, size in enumerate(self.cluster_sizes):
            vals = np.array(
                [x_over_tau[self.index.col("mu", ci, c)] for c in range(size)]
            )
            vals = np.clip(vals, 0.0, None)
            total = vals.sum()
            if total <= 0:
                raise CompileError("degenerate beliefs in solution")
            out.append(vals / total)
        return out


class _Builder:
    """Assemble (c, A, b, cones) column-first, then row by row."""

    def __init__(self, pdg: PDG, rct: RootedClusterTree):
        self.pdg = pdg
        self.rct = rct
        self.index = IndexMap()
        self.cone_blocks: List[tuple] = []
        self.c_entries: Dict[int, float] = {}
        self.rows: List[Dict[int, float]] = []
        self.rhs: List[float] = []
        self.cluster_vars = [tuple(c) for c in rct.clusters]
        self.cluster_size = [pdg.cardinality(c) for c in self.cluster_vars]
        self._subset_cache: Dict[tuple, np.ndarray] = {}

    # -- columns --------------------------------------------------------------

    def exp_block(self, k1: tuple, k2: tuple, k3: tuple):
        cols = (self.index.add(k1), self.index.add(k2), self.index.add(k3))
        self.cone_blocks.append(("exp", 3))
        return cols

    def orthant_block(self, keys: Sequence[tuple]) -> List[int]:
        cols = [self.index.add(k) for k in keys]
        self.cone_blocks.append(("orthant", len(cols)))
        return cols

    def all_mu_keys(self) -> List[tuple]:
        return [
            ("mu", ci, c)
            for ci in range(len(self.cluster_vars))
            for c in range(self.cluster_size[ci])
        ]

    # -- rows -----------------------------------------------------------------

    def add_cost(self, col: int, coeff: float) -> None:
        if coeff != 0.0:
            self.c_entries[col] = self.c_entries.get(col, 0.0) + coeff

    def add_row(self, coeffs: Dict[int, float], rhs: float) -> None:
        self.rows.append(coeffs)
        self.rhs.append(rhs)

    def subset_index(self, ci: int, subset: Sequence[str]) -> np.ndarray:
        key = (ci, tuple(subset))
        if key not in self._subset_cache:
            self._subset_cache[key] = _subset_index(
                self.pdg, self.cluster_vars[ci], subset
            )
        return self._subset_cache[key]

    def mu_cols_matching(self, ci: int, subset: Sequence[str], value: int):
        idx = self.subset_index(ci, subset)
        return [
            self.index.col("mu", ci, c)
            for c in range(self.cluster_size[ci])
            if idx[c] == value
        ]

    def marginal_row(self, ci, subset, value, extra: Dict[int, float], rhs: float):
        """Row: sum of matching mu entries plus ``extra`` coefficients = rhs."""
        row = dict(extra)
        for col in self.mu_cols_matching(ci, subset, value):
            row[col] = row.get(col, 0.0) + 1.0
        self.add_row(row, rhs)

    def calibration_rows(self) -> None:
        for i, j in self.rct.decomposition.edges:
            sep = tuple(
                sorted(
                    set(self.cluster_vars[i]) & set(self.cluster_vars[j]),
                    key=self.pdg.var_names.index,
                )
            )
            idx_i = self.subset_index(i, sep)
            idx_j = self.subset_index(j, sep)
            for omega in range(self.pdg.cardinality(sep)):
                row: Dict[int, float] = {}
                for c in np.nonzero(idx_i == omega)[0]:
                    col = self.index.col("mu", i, int(c))
                    row[col] = row.get(col, 0.0) + 1.0
                for d in np.nonzero(idx_j == omega)[0]:
                    col = self.index.col("mu", j, int(d))
                    row[col] = row.get(col, 0.0) - 1.0
                self.add_row(row, 0.0)

    def simplex_rows(self) -> None:
        for ci in range(len(self.cluster_vars)):
            row = {
                self.index.col("mu", ci, c): 1.0
                for c in range(self.cluster_size[ci])
            }
            self.add_row(row, 1.0)

    def finish(self, kind: str, va_split: ArcValueSplit) -> CompiledProblem:
        self.index.check_bijection()
        n, m = self.index.n, len(self.rows)
        c = np.zeros(n)
        for col, coeff in self.c_entries.items():
            c[col] = coeff
        rows_i, cols_i, vals = [], [], []
        for r, row in enumerate(self.rows):
            for col, coeff in row.items():
                if coeff != 0.0:
                    rows_i.append(r)
                    cols_i.append(col)
                    vals.append(coeff)
        A = sp.csr_matrix((vals, (rows_i, cols_i)), shape=(m, n))
        prog = ConicProgram(
            c, A, np.array(self.rhs), ConeSpec(tuple(self.cone_blocks))
        )
        return CompiledProblem(
            prog, self.index, self.rct, kind, va_split, tuple(self.cluster_size)
        )


def _va_triples(pdg: PDG, arc_ids=None):
    out = []
    for a in pdg.arcs:
        if arc_ids is not None and a.id not in arc_ids:
            continue
        n_s, n_t = a.cpd.shape
        for s in range(n_s):
            for t in range(n_t):
                out.append((a, s, t))
    return out


def _check_weights(pdg: PDG) -> None:
    for a in pdg.arcs:
        if not (math.isfinite(a.beta) and a.beta >= 0):
            raise CompileError(f"arc {a.id!r}: beta must be finite and nonnegative")


def trivial_tree(pdg: PDG) -> RootedClusterTree:
    """The single-cluster tree used by the joint-distribution forms."""
    td = TreeDecomposition((tuple(pdg.var_names),), ())
    return root_and_assign(td, pdg)


def _arc_defining_rows(b: _Builder, a: Hyperarc, s: int, t: int, cols, with_p: bool):
    """Rows tying an arc cone's first two coordinates to cluster marginals."""
    w_col, y_col, _ = cols
    ci = b.rct.arc_cluster[a.id]
    st_val = s * a.cpd.shape[1] + t
    b.marginal_row(ci, a.sources + a.targets, st_val, {y_col: -1.0}, 0.0)
    scale = float(a.cpd[s, t]) if with_p else 1.0
    row = {}
    for col in b.mu_cols_matching(ci, a.sources, s):
        row[col] = row.get(col, 0.0) + scale
    row[w_col] = row.get(w_col, 0.0) - 1.0
    b.add_row(row, 0.0)


# -- problem (inc): minimize the beta-weighted relative entropies -------------


def compile_cluster_inc(pdg: PDG, rct: RootedClusterTree) -> CompiledProblem:
    _check_weights(pdg)
    split = ArcValueSplit.of(pdg)
    b = _Builder(pdg, rct)
    triples = _va_triples(pdg)
    arc_cols = {}
    for a, s, t in triples:
        arc_cols[(a.id, s, t)] = b.exp_block(
            ("w", a.id, s, t), ("y", a.id, s, t), ("u", a.id, s, t)
        )
    b.orthant_block(b.all_mu_keys())
    for a, s, t in triples:
        cols = arc_cols[(a.id, s, t)]
        _arc_defining_rows(b, a, s, t, cols, with_p=True)
        b.add_cost(cols[2], -a.beta)  # bound coordinate is negated
    b.calibration_rows()
    b.simplex_rows()
    return b.finish("inc", split)


# -- problem (small gamma) ----------------------------------------------------


def _build_small_gamma(
    pdg: PDG,
    rct: RootedClusterTree,
    gamma: float,
    variant: str,
    cone_arc_ids=None,
    extra_mu_cost: Optional[Dict[Tuple[int, int], float]] = None,
    enforce_regime: bool = True,
) -> CompiledProblem:
    _check_weights(pdg)
    if not gamma > 0:
        raise CompileError("small-gamma compilation needs gamma > 0")
    if variant not in ("linear-p", "cone-p"):
        raise CompileError(f"unknown variant {variant!r}")
    if cone_arc_ids is None:
        cone_arc_ids = {a.id for a in pdg.arcs}
    if enforce_regime:
        bad = [a.id for a in pdg.arcs if a.beta < gamma * a.alpha]
        if bad:
            raise RegimeError(
                f"beta < gamma*alpha on arcs {bad}; use the convex-concave "
                f"procedure for this regime"
            )
    split = ArcValueSplit.of(pdg)
    b = _Builder(pdg, rct)
    arcs_by_id = {a.id: a for a in pdg.arcs}
    triples = _va_triples(pdg, cone_arc_ids)
    arc_cols = {}
    for a, s, t in triples:
        arc_cols[(a.id, s, t)] = b.exp_block(
            ("w", a.id, s, t), ("y", a.id, s, t), ("u", a.id, s, t)
        )
    ent_cols = {}
    for ci in range(len(b.cluster_vars)):
        for c in range(b.cluster_size[ci]):
            ent_cols[(ci, c)] = b.exp_block(("z", ci, c), ("mu", ci, c), ("v", ci, c))

    with_p = variant == "cone-p"
    for a, s, t in triples:
        cols = arc_cols[(a.id, s, t)]
        _arc_defining_rows(b, a, s, t, cols, with_p=with_p)
        b.add_cost(cols[2], -(a.beta - gamma * a.alpha))
        if a.cpd[s, t] > 0:
            logp = math.log(float(a.cpd[s, t]))
            coeff = -a.beta * logp if variant == "linear-p" else -gamma * a.alpha * logp
            b.add_cost(cols[1], coeff)
    b.calibration_rows()
    for aid, s, t in split.zero:
        a = arcs_by_id[aid]
        ci = rct.arc_cluster[aid]
        st_val = s * a.cpd.shape[1] + t
        b.marginal_row(ci, a.sources + a.targets, st_val, {}, 0.0)
    # entropy cones against the parent-overlap marginal
    for ci in range(len(b.cluster_vars)):
        vcp = rct.vcp[ci]
        idx = b.subset_index(ci, vcp)
        for c in range(b.cluster_size[ci]):
            z_col, mu_col, v_col = ent_cols[(ci, c)]
            row = {z_col: -1.0}
            for col in b.mu_cols_matching(ci, vcp, int(idx[c])):
                row[col] = row.get(col, 0.0) + 1.0
            b.add_row(row, 0.0)
            b.add_cost(v_col, -gamma)
    b.simplex_rows()
    # linear cpd-log terms of arcs compiled without cones (CCCP concave side)
    for a in pdg.arcs:
        if a.id in cone_arc_ids or a.beta == 0:
            continue
        ci = rct.arc_cluster[a.id]
        idx = b.subset_index(ci, a.sources + a.targets)
        n_t = a.cpd.shape[1]
        flat = a.cpd.ravel()
        for c in range(b.cluster_size[ci]):
            p = float(flat[idx[c]])
            if p > 0:
                b.add_cost(b.index.col("mu", ci, c), -a.beta * math.log(p))
    if extra_mu_cost:
        for (ci, c), coeff in extra_mu_cost.items():
            b.add_cost(b.index.col("mu", ci, c), coeff)
    return b.finish("small-gamma", split)


def compile_cluster_small_gamma(
    pdg: PDG, rct: RootedClusterTree, gamma: float, variant: str = "linear-p"
) -> CompiledProblem:
    return _build_small_gamma(pdg, rct, gamma, variant)


# -- problem (zero plus) -------------------------------------------------------


def compile_cluster_zero_plus(
    pdg: PDG, rct: RootedClusterTree, frozen: FrozenMarginals
) -> CompiledProblem:
    _check_weights(pdg)
    split = ArcValueSplit.of(pdg)
    b = _Builder(pdg, rct)
    cols = {}
    for ci in range(len(b.cluster_vars)):
        for c in range(b.cluster_size[ci]):
            cols[(ci, c)] = b.exp_block(("wk", ci, c), ("mu", ci, c), ("u", ci, c))
    for ci in range(len(b.cluster_vars)):
        vcp = rct.vcp[ci]
        idx = b.subset_index(ci, vcp)
        kvec = frozen.k[ci]
        for c in range(b.cluster_size[ci]):
            wk_col, mu_col, u_col = cols[(ci, c)]
            row = {wk_col: -1.0}
            kval = float(kvec[c])
            for col in b.mu_cols_matching(ci, vcp, int(idx[c])):
                row[col] = row.get(col, 0.0) + kval
            b.add_row(row, 0.0)
            b.add_cost(u_col, -1.0)
    b.calibration_rows()
    # conditional-marginal match rows, in the symmetric product form
    for a in pdg.arcs:
        ci = rct.arc_cluster[a.id]
        nu_st = frozen.joint[a.id]
        nu_s = frozen.source[a.id]
        n_s, n_t = a.cpd.shape
        idx_st = b.subset_index(ci, a.sources + a.targets)
        idx_s = b.subset_index(ci, a.sources)
        for s in range(n_s):
            for t in range(n_t):
                row: Dict[int, float] = {}
                st_val = s * n_t + t
                for c in np.nonzero(idx_st == st_val)[0]:
                    col = b.index.col("mu", ci, int(c))
                    row[col] = row.get(col, 0.0) + float(nu_s[s])
                for c in np.nonzero(idx_s == s)[0]:
                    col = b.index.col("mu", ci, int(c))
                    row[col] = row.get(col, 0.0) - float(nu_st[s, t])
                b.add_row(row, 0.0)
    b.simplex_rows()
    return b.finish("zero-plus", split)


def build_zero_plus_guarded(
    pdg: PDG,
    rct: RootedClusterTree,
    frozen: FrozenMarginals,
    oinc_budget: float,
    slack: float = 1e-7,
    match_threshold: float = 1e-7,
) -> CompiledProblem:
    """Second-stage program with an explicit stage-one objective budget.

    The verbatim second stage constrains only the conditional marginals,
    which is insufficient when the stage-one optimum leaves some source
    configurations unvisited: mass may then migrate to strictly worse
    regions of the first objective.  This variant re-introduces the per-arc
    relative-entropy cones and bounds their weighted sum by the stage-one
    value plus ``slack``, restoring the lexicographic semantics.  Match rows
    whose frozen source marginal falls below ``match_threshold`` are dropped
    (they are identically zero at an exact stage-one optimum).
    """
    _check_weights(pdg)
    split = ArcValueSplit.of(pdg)
    b = _Builder(pdg, rct)
    triples = _va_triples(pdg)
    arc_cols = {}
    for a, s, t in triples:
        arc_cols[(a.id, s, t)] = b.exp_block(
            ("w", a.id, s, t), ("y", a.id, s, t), ("u", a.id, s, t)
        )
    ent_cols = {}
    for ci in range(len(b.cluster_vars)):
        for c in range(b.cluster_size[ci]):
            ent_cols[(ci, c)] = b.exp_block(
                ("wk", ci, c), ("mu", ci, c), ("uz", ci, c)
            )
    slack_col = b.orthant_block([("slack", 0, 0)])[0]

    for a, s, t in triples:
        _arc_defining_rows(b, a, s, t, arc_cols[(a.id, s, t)], with_p=True)
    for ci in range(len(b.cluster_vars)):
        vcp = rct.vcp[ci]
        idx = b.subset_index(ci, vcp)
        kvec = frozen.k[ci]
        for c in range(b.cluster_size[ci]):
            wk_col, _, uz_col = ent_cols[(ci, c)]
            row = {wk_col: -1.0}
            kval = float(kvec[c])
            for col in b.mu_cols_matching(ci, vcp, int(idx[c])):
                row[col] = row.get(col, 0.0) + kval
            b.add_row(row, 0.0)
            b.add_cost(uz_col, -1.0)
    b.calibration_rows()
    for a in pdg.arcs:
        ci = rct.arc_cluster[a.id]
        nu_st = frozen.joint[a.id]
        nu_s = frozen.source[a.id]
        n_s, n_t = a.cpd.shape
        idx_st = b.subset_index(ci, a.sources + a.targets)
        idx_s = b.subset_index(ci, a.sources)
        for s in range(n_s):
            if nu_s[s] < match_threshold:
                continue
            for t in range(n_t):
                row: Dict[int, float] = {}
                for c in np.nonzero(idx_st == s * n_t + t)[0]:
                    col = b.index.col("mu", ci, int(c))
                    row[col] = row.get(col, 0.0) + float(nu_s[s])
                for c in np.nonzero(idx_s == s)[0]:
                    col = b.index.col("mu", ci, int(c))
                    row[col] = row.get(col, 0.0) - float(nu_st[s, t])
                b.add_row(row, 0.0)
    b.simplex_rows()
    budget_row = {slack_col: 1.0}
    for a, s, t in triples:
        u_col = arc_cols[(a.id, s, t)][2]
        budget_row[u_col] = budget_row.get(u_col, 0.0) - a.beta  # bound negated
    b.add_row(budget_row, oinc_budget + slack)
    return b.finish("zero-plus-guarded", split)


# -- joint-distribution forms ---------------------------------------------------


def compile_joint_inc(pdg: PDG) -> CompiledProblem:
    return compile_cluster_inc(pdg, trivial_tree(pdg))


def compile_joint_small_gamma(
    pdg: PDG, gamma: float, variant: str = "linear-p"
) -> CompiledProblem:
    return compile_cluster_small_gamma(pdg, trivial_tree(pdg), gamma, variant)


def compile_joint_zero_plus(pdg: PDG, frozen: FrozenMarginals) -> CompiledProblem:
    if len(frozen.rct.clusters) != 1:
        raise CompileError("joint zero-plus stage needs single-cluster marginals")
    return compile_cluster_zero_plus(pdg, frozen.rct, frozen)


# -- freezing stage-one marginals ----------------------------------------------

UNDEFINED_SOURCE_TOL = 1e-14


def freeze_marginals(
    stage_one: Union[JointDistribution, Sequence[np.ndarray]],
    pdg: PDG,
    rct: Optional[RootedClusterTree] = None,
) -> FrozenMarginals:
    """Extract per-arc conditionals and the k vector from a stage-one optimum.

    ``stage_one`` is either a JointDistribution or per-cluster belief vectors
    matching ``rct``.  Conditional rows whose source marginal vanishes are
    recorded as undefined and set uniform; the zero-plus program's symmetric
    product-form match rows degenerate gracefully there.
    """
    if isinstance(stage_one, JointDistribution):
        if rct is None:
            rct = trivial_tree(pdg)
        beliefs = []
        for cluster in rct.clusters:
            beliefs.append(stage_one.marginal(tuple(cluster)))
    else:
        if rct is None:
            raise CompileError("cluster-form freezing needs the rooted tree")
        beliefs = [np.asarray(v, float) for v in stage_one]
        if len(beliefs) != len(rct.clusters):
            raise CompileError("one belief vector per cluster required")

    cond, joint, source, undefined = {}, {}, {}, {}
    for a in pdg.arcs:
        ci = rct.arc_cluster[a.id]
        cluster = tuple(rct.clusters[ci])
        n_s, n_t = a.cpd.shape
        idx_st = _subset_index(pdg, cluster, a.sources + a.targets)
        vec = beliefs[ci]
        st = np.zeros(n_s * n_t)
        np.add.at(st, idx_st, vec)
        st = st.reshape(n_s, n_t)
        s_marg = st.sum(axis=1)
        table = np.empty_like(st)
        undef = []
        for s in range(n_s):
            if s_marg[s] > UNDEFINED_SOURCE_TOL:
                table[s] = st[s] / s_marg[s]
            else:
                table[s] = 1.0 / n_t
                undef.append(s)
        cond[a.id] = table
        joint[a.id] = st
        source[a.id] = s_marg
        undefined[a.id] = tuple(undef)

    k = []
    for ci, cluster in enumerate(rct.clusters):
        cluster = tuple(cluster)
        size = pdg.cardinality(cluster)
        kvec = np.ones(size)
        for a in pdg.arcs:
            if rct.arc_cluster[a.id] != ci or a.alpha == 0:
                continue
            idx_st = _subset_index(pdg, cluster, a.sources + a.targets)
            factors = cond[a.id].ravel()[idx_st]
            kvec *= np.power(factors, a.alpha)
        k.append(kvec)
    return FrozenMarginals(cond, joint, source, undefined, tuple(k), rct)
