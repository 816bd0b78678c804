"""Core data model: variables, weighted hyperarcs, joint distributions, scores.

Conventions used throughout:

- All logarithms are natural; every score is reported in nats.
- 0 * log(0/x) = 0 and 0 * log(0/0) = 0; p * log(p/0) = +inf for p > 0.
- Worlds (joint assignments) are enumerated row-major in the declared
  variable order, so dense vectors over the world space are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Variable",
    "Hyperarc",
    "PDG",
    "JointDistribution",
    "GammaSpec",
    "ValidationReport",
    "PdgError",
    "oinc",
    "sinc",
    "score_gamma",
    "validate",
]

CPD_ROW_TOL = 1e-12


class PdgError(ValueError):
    """Raised for malformed PDGs or mismatched distributions."""


@dataclass(frozen=True)
class Variable:
    """A named variable with an ordered, finite set of values."""

    name: str
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.name:
            raise PdgError("variable name must be nonempty")
        if len(self.values) < 1:
            raise PdgError(f"variable {self.name!r} needs at least one value")
        if len(set(self.values)) != len(self.values):
            raise PdgError(f"variable {self.name!r} has duplicate values")

    @property
    def cardinality(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Hyperarc:
    """A weighted hyperarc carrying a cpd from joint sources to joint targets.

    ``cpd`` has one row per joint source assignment and one column per joint
    target assignment, both enumerated row-major in the order the variable
    names appear in ``sources`` / ``targets``.  Rows must sum to 1 within
    ``CPD_ROW_TOL`` (they are renormalized on construction).
    """

    id: str
    sources: tuple
    targets: tuple
    cpd: np.ndarray
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise PdgError(f"arc {self.id!r} must have at least one target")
        if set(self.sources) & set(self.targets):
            raise PdgError(f"arc {self.id!r} has overlapping sources and targets")
        if len(set(self.sources)) != len(self.sources):
            raise PdgError(f"arc {self.id!r} repeats a source variable")
        if len(set(self.targets)) != len(self.targets):
            raise PdgError(f"arc {self.id!r} repeats a target variable")
        cpd = np.asarray(self.cpd, dtype=float)
        if cpd.ndim != 2:
            raise PdgError(f"arc {self.id!r} cpd must be 2-d (rows per source value)")
        if np.any(cpd < 0) or not np.all(np.isfinite(cpd)):
            raise PdgError(f"arc {self.id!r} cpd has negative or non-finite entries")
        rows = cpd.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > CPD_ROW_TOL):
            raise PdgError(f"arc {self.id!r} cpd rows do not sum to 1")
        # renormalize only rows beyond float-accumulation noise, so that
        # ingestion is idempotent and files round-trip byte-identically
        off = np.abs(rows - 1.0) > 1e-14 * cpd.shape[1]
        if np.any(off):
            cpd = cpd.copy()
            cpd[off] = cpd[off] / rows[off, None]
        cpd.flags.writeable = False
        object.__setattr__(self, "cpd", cpd)
        if not math.isfinite(self.beta):
            # Infinite beta would be a hard constraint; the conic pipeline
            # has no semantics for it, so reject at the gate.
            raise PdgError(f"arc {self.id!r} has non-finite beta")
        if not math.isfinite(self.alpha):
            raise PdgError(f"arc {self.id!r} has non-finite alpha")

    @property
    def scope(self) -> frozenset:
        return frozenset(self.sources) | frozenset(self.targets)


def _axes_strides(cards: Sequence[int]) -> np.ndarray:
    """Row-major strides: world index = sum(value_index * stride)."""
    strides = np.ones(len(cards), dtype=np.int64)
    for i in range(len(cards) - 2, -1, -1):
        strides[i] = strides[i + 1] * cards[i + 1]
    return strides


class PDG:
    """A probabilistic dependency graph over finite variables.

    Immutable after construction.  Provides world enumeration (row-major in
    declared variable order) and per-arc index maps from worlds into the
    arc's joint (source, target) value space.
    """

    def __init__(self, variables: Iterable[Variable], arcs: Iterable[Hyperarc]):
        self.variables = tuple(variables)
        self.arcs = tuple(arcs)
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise PdgError("duplicate variable names")
        self._vars = {v.name: v for v in self.variables}
        self._var_pos = {v.name: i for i, v in enumerate(self.variables)}
        ids = [a.id for a in self.arcs]
        if len(set(ids)) != len(ids):
            raise PdgError("duplicate arc ids")
        for a in self.arcs:
            for n in a.sources + a.targets:
                if n not in self._vars:
                    raise PdgError(f"arc {a.id!r} references unknown variable {n!r}")
            if a.cpd.shape != (self.cardinality(a.sources), self.cardinality(a.targets)):
                raise PdgError(
                    f"arc {a.id!r} cpd shape {a.cpd.shape} does not match "
                    f"source/target value spaces"
                )

    # -- value space helpers -------------------------------------------------

    @property
    def var_names(self) -> tuple:
        return tuple(v.name for v in self.variables)

    def variable(self, name: str) -> Variable:
        return self._vars[name]

    def cardinality(self, names: Sequence[str] = ()) -> int:
        n = 1
        for name in names:
            n *= self._vars[name].cardinality
        return n

    @property
    def n_worlds(self) -> int:
        return self.cardinality(self.var_names)

    def value_index(self, name: str, value) -> int:
        try:
            return self._vars[name].values.index(value)
        except ValueError:
            raise PdgError(f"unknown value {value!r} for variable {name!r}") from None

    def assignment_index(self, names: Sequence[str], values: Sequence) -> int:
        """Flat row-major index of a joint assignment to ``names``."""
        cards = [self._vars[n].cardinality for n in names]
        strides = _axes_strides(cards)
        idx = 0
        for n, v, s in zip(names, values, strides):
            idx += self.value_index(n, v) * int(s)
        return idx

    def world_value_indices(self, names: Sequence[str]) -> np.ndarray:
        """For each world, the flat index of its restriction to ``names``.

        Returns an int array of length ``n_worlds``.
        """
        cards_all = np.array([v.cardinality for v in self.variables], dtype=np.int64)
        strides_all = _axes_strides(cards_all)
        cards_sub = [self._vars[n].cardinality for n in names]
        strides_sub = _axes_strides(cards_sub)
        out = np.zeros(self.n_worlds, dtype=np.int64)
        worlds = np.arange(self.n_worlds, dtype=np.int64)
        for n, s_sub in zip(names, strides_sub):
            pos = self._var_pos[n]
            digit = (worlds // strides_all[pos]) % cards_all[pos]
            out += digit * int(s_sub)
        return out

    def worlds(self) -> Iterable[tuple]:
        """Iterate all joint assignments, row-major in variable order."""
        cards = [v.cardinality for v in self.variables]
        strides = _axes_strides(cards)
        for w in range(self.n_worlds):
            yield tuple(
                v.values[(w // int(s)) % v.cardinality]
                for v, s in zip(self.variables, strides)
            )

    # -- structure predicates ------------------------------------------------

    def is_proper(self) -> bool:
        """beta >= 0 everywhere and every arc with alpha > 0 has beta > 0."""
        return all(
            a.beta >= 0 and (a.beta > 0 or a.alpha <= 0) for a in self.arcs
        )

    def combine(self, other: "PDG", rename_clashes: bool = False) -> "PDG":
        """Union of variables, disjoint union of arcs.

        Shared variable names must agree on their value sets.
        """
        merged = dict(self._vars)
        for v in other.variables:
            if v.name in merged:
                if merged[v.name].values != v.values:
                    raise PdgError(
                        f"variable {v.name!r} has conflicting value sets"
                    )
            else:
                merged[v.name] = v
        arcs = list(self.arcs)
        taken = {a.id for a in arcs}
        for a in other.arcs:
            if a.id in taken:
                if not rename_clashes:
                    raise PdgError(f"arc id {a.id!r} appears in both PDGs")
                k, new_id = 1, f"{a.id}~1"
                while new_id in taken:
                    k += 1
                    new_id = f"{a.id}~{k}"
                a = Hyperarc(new_id, a.sources, a.targets, a.cpd, a.alpha, a.beta)
            taken.add(a.id)
            arcs.append(a)
        return PDG(merged.values(), arcs)


class JointDistribution:
    """A dense joint distribution over a PDG's variables."""

    SUM_TOL = 1e-9

    def __init__(self, var_names: Sequence[str], probs: np.ndarray, pdg: PDG):
        if tuple(var_names) != pdg.var_names:
            raise PdgError("distribution variable order must match the PDG")
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (pdg.n_worlds,):
            raise PdgError(
                f"expected {pdg.n_worlds} entries, got shape {probs.shape}"
            )
        if np.any(probs < -1e-15):
            raise PdgError("negative probability entry")
        total = probs.sum()
        if abs(total - 1.0) > self.SUM_TOL:
            raise PdgError(f"probabilities sum to {total}, not 1")
        self.var_names = tuple(var_names)
        self.probs = np.clip(probs, 0.0, None) / probs.sum()
        self.probs.flags.writeable = False
        self.pdg = pdg

    @classmethod
    def uniform(cls, pdg: PDG) -> "JointDistribution":
        n = pdg.n_worlds
        return cls(pdg.var_names, np.full(n, 1.0 / n), pdg)

    def marginal(self, names: Sequence[str]) -> np.ndarray:
        """Marginal over ``names`` as a flat row-major vector."""
        idx = self.pdg.world_value_indices(names)
        out = np.zeros(self.pdg.cardinality(names))
        np.add.at(out, idx, self.probs)
        return out

    def prob_of(self, assignment: Mapping[str, object]) -> float:
        names = [n for n in self.var_names if n in assignment]
        if len(names) != len(assignment):
            unknown = set(assignment) - set(names)
            raise PdgError(f"unknown variables in assignment: {sorted(unknown)}")
        marg = self.marginal(names)
        i = self.pdg.assignment_index(names, [assignment[n] for n in names])
        return float(marg[i])

    def condition(self, evidence: Mapping[str, object]) -> "JointDistribution":
        """New distribution conditioned on ``evidence`` (mass must be > 0)."""
        mask = np.ones(self.pdg.n_worlds, dtype=bool)
        for name, value in evidence.items():
            vi = self.pdg.value_index(name, value)
            digits = self.pdg.world_value_indices([name])
            mask &= digits == vi
        mass = self.probs[mask].sum()
        if mass <= 0:
            raise PdgError("conditioning on a zero-probability event")
        probs = np.where(mask, self.probs, 0.0) / mass
        return JointDistribution(self.var_names, probs, self.pdg)

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())


# -- scoring functions -------------------------------------------------------


def _check_match(pdg: PDG, mu: JointDistribution) -> None:
    if mu.pdg is not pdg and mu.var_names != pdg.var_names:
        raise PdgError("distribution is not over this PDG's variables")


def _arc_tables(pdg: PDG, mu: JointDistribution, arc: Hyperarc):
    """(mu(S,T) flat, mu(S) flat, cpd flat) for one arc, all over V(S)xV(T)."""
    st = mu.marginal(arc.sources + arc.targets)
    s = mu.marginal(arc.sources)
    n_s, n_t = arc.cpd.shape
    return st.reshape(n_s, n_t), s, arc.cpd


def oinc(pdg: PDG, mu: JointDistribution) -> float:
    """Observational incompatibility: sum_a beta_a KL(mu(T,S) || p_a(T|S) mu(S)).

    Returns +inf when mu puts mass where some cpd with beta > 0 is zero.
    """
    _check_match(pdg, mu)
    total = 0.0
    for arc in pdg.arcs:
        if arc.beta == 0:
            continue
        m_st, m_s, cpd = _arc_tables(pdg, mu, arc)
        ref = m_s[:, None] * cpd
        pos = m_st > 0
        if np.any(pos & (ref <= 0)):
            return math.inf
        term = float((m_st[pos] * np.log(m_st[pos] / ref[pos])).sum())
        total += arc.beta * term
    return total


def _cond_entropy(m_st: np.ndarray, m_s: np.ndarray) -> float:
    """H(T|S) from the joint table mu(S,T) and marginal mu(S)."""
    pos = m_st > 0
    ref = np.broadcast_to(m_s[:, None], m_st.shape)
    return float(-(m_st[pos] * np.log(m_st[pos] / ref[pos])).sum())


def sinc(pdg: PDG, mu: JointDistribution) -> float:
    """Structural incompatibility: sum_a alpha_a H_mu(T_a|S_a) - H(mu).

    Independent of the cpd tables; can be negative.
    """
    _check_match(pdg, mu)
    total = -mu.entropy()
    for arc in pdg.arcs:
        if arc.alpha == 0:
            continue
        m_st, m_s, _ = _arc_tables(pdg, mu, arc)
        total += arc.alpha * _cond_entropy(m_st, m_s)
    return total


def score_gamma(
    pdg: PDG, mu: JointDistribution, gamma: float, regrouped: bool = False
) -> float:
    """The combined score oinc + gamma * sinc.

    With ``regrouped=True`` the value is computed by the equivalent
    regrouping -gamma H(mu) - sum_a beta_a E_mu[log p_a]
    + sum_a (gamma alpha_a - beta_a) H_mu(T_a|S_a); the two paths agree
    wherever finite.
    """
    if gamma < 0:
        raise PdgError("gamma must be nonnegative")
    if not regrouped:
        o = oinc(pdg, mu)
        if math.isinf(o):
            return math.inf
        return o + gamma * sinc(pdg, mu)
    _check_match(pdg, mu)
    total = -gamma * mu.entropy()
    for arc in pdg.arcs:
        m_st, m_s, cpd = _arc_tables(pdg, mu, arc)
        if arc.beta != 0:
            pos = m_st > 0
            if np.any(pos & (cpd <= 0)):
                return math.inf
            total -= arc.beta * float((m_st[pos] * np.log(cpd[pos])).sum())
        coeff = gamma * arc.alpha - arc.beta
        if coeff != 0:
            total += coeff * _cond_entropy(m_st, m_s)
    return total


@dataclass(frozen=True)
class GammaSpec:
    """Which semantics to compute: gamma=0, gamma>0, or the 0+ limit."""

    kind: str  # "zero" | "positive" | "zero_plus"
    gamma: float = 0.0

    ZERO = None  # populated below
    ZERO_PLUS = None

    def __post_init__(self):
        if self.kind not in ("zero", "positive", "zero_plus"):
            raise PdgError(f"unknown gamma kind {self.kind!r}")
        if self.kind == "positive" and not self.gamma > 0:
            raise PdgError("positive gamma spec requires gamma > 0")
        if self.kind != "positive" and self.gamma != 0.0:
            raise PdgError("gamma value only applies to the positive kind")

    @classmethod
    def parse(cls, text) -> "GammaSpec":
        """Accepts "0", "0+", a float string, or a number."""
        if isinstance(text, GammaSpec):
            return text
        if isinstance(text, (int, float)):
            return cls.ZERO if text == 0 else cls("positive", float(text))
        t = str(text).strip()
        if t == "0+":
            return cls.ZERO_PLUS
        value = float(t)
        return cls.ZERO if value == 0 else cls("positive", value)

    def __str__(self) -> str:
        if self.kind == "zero":
            return "0"
        if self.kind == "zero_plus":
            return "0+"
        return repr(self.gamma)


GammaSpec.ZERO = GammaSpec("zero")
GammaSpec.ZERO_PLUS = GammaSpec("zero_plus")


@dataclass
class ValidationReport:
    """Structured invariant-violation list; empty means valid."""

    violations: list = field(default_factory=list)

    def add(self, code: str, message: str) -> None:
        self.violations.append({"code": code, "message": message})

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list:
        return [v["code"] for v in self.violations]


def validate(pdg: PDG, width_bound: int = None) -> ValidationReport:
    """Check the type invariants, flagging rather than raising.

    Construction already enforces most invariants; this re-checks the ones
    that depend on the whole PDG and whatever can be probed post hoc.
    """
    report = ValidationReport()
    for arc in pdg.arcs:
        rows = np.asarray(arc.cpd).sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-9):
            report.add("cpd-not-normalized", f"arc {arc.id!r} rows sum to {rows}")
        if arc.beta < 0:
            report.add("negative-beta", f"arc {arc.id!r} has beta < 0")
        if width_bound is not None and len(arc.scope) > width_bound + 1:
            report.add(
                "arc-exceeds-width",
                f"arc {arc.id!r} scope {sorted(arc.scope)} exceeds width bound "
                f"{width_bound}",
            )
    if not pdg.is_proper():
        bad = [a.id for a in pdg.arcs if a.alpha > 0 and not a.beta > 0]
        report.add("not-proper", f"arcs with alpha > 0 but beta <= 0: {bad}")
    return report
