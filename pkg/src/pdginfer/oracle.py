"""Independent ground-truth machinery: brute-force optima over explicit
joints, clique-tree to joint conversion, and the CNF encoder with model
counting.

Deliberately slow and simple, and independent of the conic pipeline: the
optimizer is exponentiated-gradient (mirror) descent on the full simplex
with random restarts; the 0+ second stage is the exact I-projection of the
frozen-product vector onto the conditional-match affine set, solved through
its smooth convex dual.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.optimize

from .compiler import _subset_index
from .model import PDG, GammaSpec, Hyperarc, JointDistribution, Variable

__all__ = [
    "OracleError",
    "brute_force_optimum",
    "joint_from_beliefs",
    "CNF",
    "parse_dimacs",
    "encode_cnf",
    "count_models",
    "add_uniform_joint_arc",
]

MAX_WORLDS = 2**16


class OracleError(ValueError):
    """Raised when the oracle cannot produce a ground truth."""


# -- score evaluation over restricted supports ----------------------------------


class _ScoreMachine:
    """Vectorized score/gradient of the combined objective on a support."""

    def __init__(self, pdg: PDG, gamma: float, support: np.ndarray):
        self.pdg = pdg
        self.gamma = gamma
        self.support = support  # world indices with finite score
        self.arcs = []
        for a in pdg.arcs:
            idx_st = pdg.world_value_indices(a.sources + a.targets)[support]
            idx_s = pdg.world_value_indices(a.sources)[support]
            self.arcs.append(
                {
                    "beta": a.beta,
                    "alpha": a.alpha,
                    "n_st": a.cpd.size,
                    "n_s": a.cpd.shape[0],
                    "idx_st": idx_st,
                    "idx_s": idx_s,
                    "logp": np.log(np.maximum(a.cpd.ravel()[idx_st], 1e-300)),
                }
            )

    def score(self, mu: np.ndarray) -> float:
        total = 0.0
        ent = -float(np.sum(mu[mu > 0] * np.log(mu[mu > 0])))
        total -= self.gamma * ent
        for arc in self.arcs:
            m_st = np.bincount(arc["idx_st"], weights=mu, minlength=arc["n_st"])
            m_s = np.bincount(arc["idx_s"], weights=mu, minlength=arc["n_s"])
            pos = m_st > 0
            log_cond = np.zeros_like(m_st)
            log_cond[pos] = np.log(m_st[pos]) - np.log(
                np.maximum(m_s.repeat(arc["n_st"] // arc["n_s"])[pos], 1e-300)
            )
            h_cond = -float((m_st[pos] * log_cond[pos]).sum())
            if arc["beta"]:
                elogp = float(np.sum(mu * arc["logp"]))
                total += arc["beta"] * (-h_cond - elogp)
            if self.gamma and arc["alpha"]:
                total += self.gamma * arc["alpha"] * h_cond
        return total

    def grad(self, mu: np.ndarray) -> np.ndarray:
        mu = np.maximum(mu, 1e-300)
        g = self.gamma * (1.0 + np.log(mu))
        for arc in self.arcs:
            m_st = np.bincount(arc["idx_st"], weights=mu, minlength=arc["n_st"])
            m_s = np.bincount(arc["idx_s"], weights=mu, minlength=arc["n_s"])
            rep = arc["n_st"] // arc["n_s"]
            log_cond = np.log(np.maximum(m_st, 1e-300)) - np.log(
                np.maximum(m_s.repeat(rep), 1e-300)
            )
            lc = log_cond[arc["idx_st"]]
            if arc["beta"]:
                g += arc["beta"] * (lc - arc["logp"])
            if self.gamma and arc["alpha"]:
                g -= self.gamma * arc["alpha"] * lc
        return g

    def hess_mul(self, mu: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Hessian-vector product of the score at mu."""
        out = self.gamma * (w / np.maximum(mu, 1e-300))
        for arc in self.arcs:
            coeff = arc["beta"] - self.gamma * arc["alpha"]
            if coeff == 0:
                continue
            m_st = np.bincount(arc["idx_st"], weights=mu, minlength=arc["n_st"])
            m_s = np.bincount(arc["idx_s"], weights=mu, minlength=arc["n_s"])
            w_st = np.bincount(arc["idx_st"], weights=w, minlength=arc["n_st"])
            w_s = np.bincount(arc["idx_s"], weights=w, minlength=arc["n_s"])
            term = (w_st / np.maximum(m_st, 1e-300))[arc["idx_st"]]
            term -= (w_s / np.maximum(m_s, 1e-300))[arc["idx_s"]]
            out += coeff * term
        return out

    def hess_dense(self, mu: np.ndarray) -> np.ndarray:
        """Dense Hessian of the score at mu (desk-scale supports only)."""
        n = len(mu)
        H = np.diag(self.gamma / np.maximum(mu, 1e-300))
        for arc in self.arcs:
            coeff = arc["beta"] - self.gamma * arc["alpha"]
            if coeff == 0:
                continue
            m_st = np.bincount(arc["idx_st"], weights=mu, minlength=arc["n_st"])
            m_s = np.bincount(arc["idx_s"], weights=mu, minlength=arc["n_s"])
            ist, isrc = arc["idx_st"], arc["idx_s"]
            same_st = ist[:, None] == ist[None, :]
            same_s = isrc[:, None] == isrc[None, :]
            H += coeff * (
                same_st / np.maximum(m_st, 1e-300)[ist][:, None]
                - same_s / np.maximum(m_s, 1e-300)[isrc][:, None]
            )
        return H


def _finite_support(pdg: PDG) -> np.ndarray:
    ok = np.ones(pdg.n_worlds, dtype=bool)
    for a in pdg.arcs:
        if a.beta > 0:
            idx = pdg.world_value_indices(a.sources + a.targets)
            ok &= a.cpd.ravel()[idx] > 0
    return np.nonzero(ok)[0]


def _embed(pdg: PDG, support: np.ndarray, mu: np.ndarray) -> JointDistribution:
    full = np.zeros(pdg.n_worlds)
    full[support] = mu
    return JointDistribution(pdg.var_names, full / full.sum(), pdg)


def _mirror_descent(machine: _ScoreMachine, mu0: np.ndarray, iters: int, step0: float):
    mu = mu0 / mu0.sum()
    best, best_score = mu.copy(), machine.score(mu)
    for t in range(1, iters + 1):
        g = machine.grad(mu)
        g = g - g.max()  # shift-invariant on the simplex; avoids overflow
        step = step0 / (1.0 + t)
        mu = mu * np.exp(-step * g)
        total = mu.sum()
        if not np.isfinite(total) or total <= 0:
            mu = best.copy()
            continue
        mu /= total
        sc = machine.score(mu)
        if sc < best_score:
            best, best_score = mu.copy(), sc
    return best, best_score


def _newton_theta(machine: _ScoreMachine, theta0: np.ndarray, maxiter: int = 60):
    """Damped dense-Newton passes over mu = softmax(theta) for one machine.

    The softmax substitution removes the simplex boundary (coordinates of
    effectively-zero worlds just drift to large negative theta), and the
    dense Hessian solve keeps the nearly flat small-gamma directions
    tractable where first-order methods crawl.  Each pass uses Levenberg
    damping that grows on rejected steps; passes restart with fresh damping
    while they keep making progress.
    """
    theta = theta0
    prev = math.inf
    for _ in range(4):
        theta = _newton_pass(machine, theta, maxiter)
        shifted = theta - theta.max()
        mu = np.exp(shifted)
        f_now = machine.score(mu / mu.sum())
        if prev - f_now <= 1e-13 * max(1.0, abs(f_now)):
            break
        prev = f_now
    return theta


def _newton_pass(machine: _ScoreMachine, theta0: np.ndarray, maxiter: int):
    def unpack(theta):
        shifted = theta - theta.max()
        e = np.exp(shifted)
        return e / e.sum()

    n = len(theta0)
    theta = theta0.copy()
    mu = unpack(theta)
    f_cur = machine.score(mu)
    lam = 1e-9
    for _ in range(maxiter):
        g = machine.grad(mu)
        s = float(mu @ g)
        gt = mu * (g - s)
        gnorm = float(np.linalg.norm(gt))
        if gnorm <= 1e-12 * max(1.0, abs(f_cur)):
            break
        Hf = machine.hess_dense(mu)
        W = np.diag(mu) - np.outer(mu, mu)
        Ht = (np.diag(g - s) + (np.diag(mu) - np.outer(mu, mu)) @ Hf
              - np.outer(mu, g)) @ W
        Ht = 0.5 * (Ht + Ht.T)
        accepted = False
        for _ in range(12):
            try:
                d = np.linalg.solve(Ht + lam * np.eye(n), -gt)
            except np.linalg.LinAlgError:
                lam *= 100
                continue
            t = 1.0
            for _ in range(30):
                cand = theta + t * d
                mu_c = unpack(cand)
                f_c = machine.score(mu_c)
                if f_c < f_cur - 1e-16:
                    theta, mu, f_cur = cand, mu_c, f_c
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                lam = max(lam / 10, 1e-12)
                break
            lam *= 100
            if lam > 1e12:
                break
        if not accepted:
            break
    return theta


# continuation ladder: the small-gamma objectives are nearly flat along the
# kernel of the arc-marginal maps, where plain descent crawls; successive
# warm-started solves at decreasing gamma track the optimum into the flat
# regime (and, continued to ZERO_PLUS_GAMMA, into the 0+ limit itself)
CONTINUATION_LADDER = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
ZERO_PLUS_GAMMA = 1e-6


def _continuation_polish(pdg, support, mu0, spec: GammaSpec) -> np.ndarray:
    if spec.kind == "positive":
        rungs = [g for g in CONTINUATION_LADDER if g > spec.gamma] + [spec.gamma]
    elif spec.kind == "zero":
        rungs = list(CONTINUATION_LADDER) + [0.0]
    else:  # zero_plus: stop at the last rung, the proxy for the limit
        rungs = list(CONTINUATION_LADDER)
    theta = np.log(np.maximum(mu0, 1e-80))
    for g in rungs:
        theta = _newton_theta(_ScoreMachine(pdg, g, support), theta)
    theta = theta - theta.max()
    mu = np.exp(theta)
    return mu / mu.sum()


def brute_force_optimum(
    pdg: PDG,
    gamma,
    restarts: int = 8,
    iters: int = 20000,
    seed: int = 0,
    step0: float = 0.5,
    polish: bool = True,
) -> JointDistribution:
    """Minimize the combined score over the full simplex by mirror descent
    with random restarts, then a warm-started continuation polish in the
    softmax parametrization (pass ``polish=False`` for the raw descent).

    The 0+ semantics is computed as its definition suggests, by following
    the continuation down to a vanishing gamma (the literal two-stage
    freeze-and-reoptimize construction is unsound when the stage-one
    optimum leaves source configurations unvisited).
    """
    if pdg.n_worlds > MAX_WORLDS:
        raise OracleError(f"state space too large ({pdg.n_worlds} worlds)")
    spec = GammaSpec.parse(gamma)
    support = _finite_support(pdg)
    if support.size == 0:
        raise OracleError("no distribution has finite score (empty support)")
    rng = np.random.default_rng(seed)
    g = spec.gamma if spec.kind == "positive" else 0.0
    md_gamma = ZERO_PLUS_GAMMA if spec.kind == "zero_plus" else g
    machine = _ScoreMachine(pdg, md_gamma, support)
    n = support.size
    best, best_score = None, math.inf
    for r in range(restarts):
        mu0 = np.ones(n) if r == 0 else rng.dirichlet(np.ones(n))
        mu, sc = _mirror_descent(machine, mu0, iters, step0)
        if sc < best_score:
            best, best_score = mu, sc
    if polish:
        best = _continuation_polish(pdg, support, best, spec)
    return _embed(pdg, support, best)


# -- clique tree to joint ---------------------------------------------------------


def joint_from_beliefs(cb) -> JointDistribution:
    """Evaluate the product/quotient joint of calibrated beliefs worldwise.

    ``cb`` needs ``rct``, ``beliefs``, and ``pdg`` attributes.  0/0 counts
    as 0.  Only valid at desk scale (the full world table is materialized).
    """
    pdg: PDG = cb.pdg
    rct = cb.rct
    if pdg.n_worlds > MAX_WORLDS:
        raise OracleError(f"state space too large ({pdg.n_worlds} worlds)")
    num = np.ones(pdg.n_worlds)
    for ci, cluster in enumerate(rct.clusters):
        idx = pdg.world_value_indices(tuple(cluster))
        num *= np.asarray(cb.beliefs[ci])[idx]
    den = np.ones(pdg.n_worlds)
    for i, j in rct.decomposition.edges:
        sep = tuple(
            sorted(set(rct.clusters[i]) & set(rct.clusters[j]), key=pdg.var_names.index)
        )
        sep_marg = np.zeros(pdg.cardinality(sep))
        sub = _subset_index(pdg, tuple(rct.clusters[i]), sep)
        np.add.at(sep_marg, sub, np.asarray(cb.beliefs[i]))
        den *= sep_marg[pdg.world_value_indices(sep)]
    with np.errstate(divide="ignore", invalid="ignore"):
        probs = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    total = probs.sum()
    if not math.isfinite(total) or total <= 0:
        raise OracleError("belief product does not normalize")
    return JointDistribution(pdg.var_names, probs / total, pdg)


# -- CNF encoding and model counting ----------------------------------------------


@dataclass(frozen=True)
class CNF:
    """A formula in conjunctive normal form over variables 1..n_vars.

    Clauses are tuples of nonzero literals; negative means negated.
    """

    n_vars: int
    clauses: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "clauses", tuple(tuple(cl) for cl in self.clauses)
        )
        for cl in self.clauses:
            if not cl:
                raise OracleError("empty clause")
            for lit in cl:
                if lit == 0 or abs(lit) > self.n_vars:
                    raise OracleError(f"literal {lit} out of range")


def parse_dimacs(text: str) -> CNF:
    n_vars = None
    clauses = []
    pending: List[int] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith(("c", "%")):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) < 4 or parts[1] != "cnf":
                raise OracleError(f"bad DIMACS header: {line!r}")
            n_vars = int(parts[2])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                if pending:
                    clauses.append(tuple(pending))
                    pending = []
            else:
                pending.append(lit)
    if pending:
        clauses.append(tuple(pending))
    if n_vars is None:
        n_vars = max((abs(l) for cl in clauses for l in cl), default=0)
    return CNF(n_vars, tuple(clauses))


def count_models(formula: CNF) -> int:
    """Exhaustive model count (at most 20 variables)."""
    if formula.n_vars > 20:
        raise OracleError("too many variables for exhaustive counting")
    count = 0
    for bits in itertools.product((0, 1), repeat=formula.n_vars):
        ok = True
        for cl in formula.clauses:
            if not any(
                (bits[abs(l) - 1] == 1) == (l > 0) for l in cl
            ):
                ok = False
                break
        count += ok
    return count


def encode_cnf(formula: CNF, width_bound: int = 3) -> PDG:
    """One binary variable per proposition and per clause; per clause a
    deterministic OR arc into the clause variable and a unary arc asserting
    it true.  All weights are 1.
    """
    variables = [Variable(f"x{i}", (0, 1)) for i in range(1, formula.n_vars + 1)]
    arcs = []
    for j, cl in enumerate(formula.clauses, start=1):
        names = sorted({abs(l) for l in cl})
        if len(names) > width_bound:
            raise OracleError(
                f"clause {j} has width {len(names)} > bound {width_bound}"
            )
        cname = f"C{j}"
        variables.append(Variable(cname, (0, 1)))
        sources = tuple(f"x{i}" for i in names)
        n_src = 2 ** len(names)
        cpd = np.zeros((n_src, 2))
        for s, bits in enumerate(itertools.product((0, 1), repeat=len(names))):
            value = {n: b for n, b in zip(names, bits)}
            sat = any((value[abs(l)] == 1) == (l > 0) for l in cl)
            cpd[s, 1 if sat else 0] = 1.0
        arcs.append(Hyperarc(f"or{j}", sources, (cname,), cpd, alpha=1.0, beta=1.0))
        arcs.append(
            Hyperarc(
                f"assert{j}", (), (cname,), np.array([[0.0, 1.0]]), alpha=1.0, beta=1.0
            )
        )
    return PDG(variables, arcs)


def add_uniform_joint_arc(pdg: PDG, arc_id: str = "uniform_all") -> PDG:
    """Add a full-joint uniform arc with confidence 1 (the gamma = 0 widget)."""
    n = pdg.n_worlds
    cpd = np.full((1, n), 1.0 / n)
    extra = Hyperarc(arc_id, (), tuple(pdg.var_names), cpd, alpha=1.0, beta=1.0)
    return PDG(pdg.variables, list(pdg.arcs) + [extra])
