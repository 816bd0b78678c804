"""The PDG text format: JSON with explicit value ordering.

Layout:

    {
      "variables": [{"name": "X", "values": [0, 1]}, ...],
      "arcs": [
        {"id": "a0", "sources": ["X"], "targets": ["Y"],
         "cpd": {"0": [0.9, 0.1], "1": [0.1, 0.9]},
         "alpha": 1.0, "beta": 1.0},
        ...
      ],
      "decomposition": {"clusters": [["X", "Y"]], "edges": []}   # optional
    }

cpd rows are keyed by comma-joined source values ("" for no sources) and
list target probabilities in the row-major order of the declared target
value sets.  Unknown fields anywhere are rejected.  Emission is
deterministic, so parse -> emit round-trips byte-identically.
"""

from __future__ import annotations

import json
from typing import Optional, Tuple

import numpy as np

from .decomp import TreeDecomposition
from .model import PDG, Hyperarc, PdgError, Variable, ValidationReport

__all__ = ["PdgFileError", "parse_pdg", "emit_pdg", "validate_document"]

CPD_KEY_SEP = ","


class PdgFileError(ValueError):
    """Raised on malformed documents; carries the structured report."""

    def __init__(self, report: ValidationReport):
        super().__init__(
            "; ".join(f"{v['code']}: {v['message']}" for v in report.violations)
        )
        self.report = report


def _value_token(value) -> str:
    return str(value)


def _row_key(values) -> str:
    return CPD_KEY_SEP.join(_value_token(v) for v in values)


def _source_rows(variables, sources):
    """All joint source assignments in row-major declared order."""
    doms = [variables[s].values for s in sources]
    rows = [()]
    for dom in doms:
        rows = [r + (v,) for r in rows for v in dom]
    return rows


def validate_document(doc: dict) -> ValidationReport:
    """Structural validation with machine-readable violation codes."""
    report = ValidationReport()
    if not isinstance(doc, dict):
        report.add("not-an-object", "top level must be a JSON object")
        return report
    allowed_top = {"variables", "arcs", "decomposition"}
    for key in doc:
        if key not in allowed_top:
            report.add("unknown-field", f"unknown top-level field {key!r}")
    variables = {}
    for i, raw in enumerate(doc.get("variables", [])):
        extra = set(raw) - {"name", "values"}
        if extra:
            report.add("unknown-field", f"variable #{i} has fields {sorted(extra)}")
        name = raw.get("name")
        values = raw.get("values")
        if not isinstance(name, str) or not name:
            report.add("bad-variable", f"variable #{i} needs a nonempty name")
            continue
        if not isinstance(values, list) or not values:
            report.add("bad-variable", f"variable {name!r} needs a value list")
            continue
        if name in variables:
            report.add("duplicate-variable", f"variable {name!r} repeated")
            continue
        if len({_value_token(v) for v in values}) != len(values):
            report.add("bad-variable", f"variable {name!r} has duplicate values")
            continue
        variables[name] = Variable(name, tuple(values))
    if not variables:
        report.add("no-variables", "document declares no variables")
    seen_arcs = set()
    for i, raw in enumerate(doc.get("arcs", [])):
        extra = set(raw) - {"id", "sources", "targets", "cpd", "alpha", "beta"}
        if extra:
            report.add("unknown-field", f"arc #{i} has fields {sorted(extra)}")
        aid = raw.get("id", f"arc{i}")
        if aid in seen_arcs:
            report.add("duplicate-arc", f"arc id {aid!r} repeated")
            continue
        seen_arcs.add(aid)
        sources = raw.get("sources", [])
        targets = raw.get("targets", [])
        missing = [v for v in list(sources) + list(targets) if v not in variables]
        if missing:
            report.add(
                "unknown-variable", f"arc {aid!r} references {missing}"
            )
            continue
        if set(sources) & set(targets):
            report.add("overlapping-arc", f"arc {aid!r} sources meet targets")
            continue
        if not targets:
            report.add("no-targets", f"arc {aid!r} has no targets")
            continue
        cpd = raw.get("cpd")
        if not isinstance(cpd, dict):
            report.add("bad-cpd", f"arc {aid!r} cpd must be an object of rows")
            continue
        n_target = 1
        for t in targets:
            n_target *= len(variables[t].values)
        expected = {_row_key(r) for r in _source_rows(variables, sources)}
        if set(cpd) != expected:
            report.add(
                "bad-cpd",
                f"arc {aid!r} rows {sorted(cpd)} do not match source space",
            )
            continue
        for key, row in cpd.items():
            if not isinstance(row, list) or len(row) != n_target:
                report.add(
                    "bad-cpd", f"arc {aid!r} row {key!r} needs {n_target} entries"
                )
                break
            if any((not isinstance(x, (int, float))) or x < 0 for x in row):
                report.add("bad-cpd", f"arc {aid!r} row {key!r} has bad entries")
                break
            if abs(sum(row) - 1.0) > 1e-12:
                report.add(
                    "cpd-not-normalized",
                    f"arc {aid!r} row {key!r} sums to {sum(row)}",
                )
                break
        beta = raw.get("beta", 1.0)
        if not isinstance(beta, (int, float)):
            report.add("bad-weight", f"arc {aid!r} beta must be a number")
        elif beta != beta or beta in (float("inf"), float("-inf")):
            report.add("unsupported-weight", f"arc {aid!r} beta must be finite")
    return report


def parse_pdg(text: str) -> Tuple[PDG, Optional[TreeDecomposition]]:
    """Parse a document; raises PdgFileError with the violation report."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        report = ValidationReport()
        report.add("bad-json", str(exc))
        raise PdgFileError(report) from exc
    report = validate_document(doc)
    if not report.ok:
        raise PdgFileError(report)
    variables = {
        raw["name"]: Variable(raw["name"], tuple(raw["values"]))
        for raw in doc["variables"]
    }
    arcs = []
    for i, raw in enumerate(doc.get("arcs", [])):
        sources = tuple(raw.get("sources", []))
        targets = tuple(raw["targets"])
        rows = _source_rows(variables, sources)
        cpd = np.array([raw["cpd"][_row_key(r)] for r in rows], dtype=float)
        try:
            arcs.append(
                Hyperarc(
                    raw.get("id", f"arc{i}"),
                    sources,
                    targets,
                    cpd,
                    float(raw.get("alpha", 1.0)),
                    float(raw.get("beta", 1.0)),
                )
            )
        except PdgError as exc:
            rep = ValidationReport()
            rep.add("bad-arc", str(exc))
            raise PdgFileError(rep) from exc
    try:
        pdg = PDG(variables.values(), arcs)
    except PdgError as exc:
        rep = ValidationReport()
        rep.add("bad-pdg", str(exc))
        raise PdgFileError(rep) from exc
    td = None
    if "decomposition" in doc:
        raw = doc["decomposition"]
        extra = set(raw) - {"clusters", "edges"}
        if extra:
            rep = ValidationReport()
            rep.add("unknown-field", f"decomposition has fields {sorted(extra)}")
            raise PdgFileError(rep)
        td = TreeDecomposition(
            tuple(tuple(c) for c in raw["clusters"]),
            tuple(tuple(e) for e in raw.get("edges", [])),
        )
    return pdg, td


def emit_pdg(pdg: PDG, td: Optional[TreeDecomposition] = None) -> str:
    """Deterministic JSON emission (round-trips losslessly)."""
    doc = {
        "variables": [
            {"name": v.name, "values": list(v.values)} for v in pdg.variables
        ],
        "arcs": [],
    }
    for a in pdg.arcs:
        variables = {v.name: v for v in pdg.variables}
        rows = _source_rows(variables, a.sources)
        doc["arcs"].append(
            {
                "id": a.id,
                "sources": list(a.sources),
                "targets": list(a.targets),
                "cpd": {
                    _row_key(r): [float(x) for x in a.cpd[i]]
                    for i, r in enumerate(rows)
                },
                "alpha": float(a.alpha),
                "beta": float(a.beta),
            }
        )
    if td is not None:
        doc["decomposition"] = {
            "clusters": [list(c) for c in td.clusters],
            "edges": [list(e) for e in td.edges],
        }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"
