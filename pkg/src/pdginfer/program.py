"""Standard-form exponential conic programs and solution records.

A program is  minimize c^T x  s.t.  A x = b,  x in K,  with K an ordered
product of nonnegative-orthant and exponential-cone blocks.  On
construction the data are rescaled so every entry of (A, b, c) has
magnitude at most 1: rows of [A | b] are divided by their max magnitude
and c by a single positive factor recorded in ``objective_scale`` (with
``objective_offset`` added back), so user-unit objective values are
``objective_scale * c^T x + objective_offset`` and the primal solution x
is unchanged by the rescaling.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import scipy.sparse as sp

from .cones import ConeSpec

__all__ = ["ConicProgram", "ConicSolution", "dump_program", "parse_program"]


class ProgramError(ValueError):
    """Raised for inconsistent program data."""


@dataclass
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: ConeSpec
    objective_scale: float = 1.0
    objective_offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).copy()
        self.b = np.asarray(self.b, dtype=float).copy()
        self.A = sp.csr_matrix(self.A, dtype=float)
        m, n = self.A.shape
        if self.c.shape != (n,) or self.b.shape != (m,):
            raise ProgramError("inconsistent shapes for (c, A, b)")
        if self.cones.n != n:
            raise ProgramError(
                f"cone blocks cover {self.cones.n} coordinates, program has {n}"
            )
        if self.objective_scale <= 0:
            raise ProgramError("objective_scale must be positive")
        self._normalize()

    def _normalize(self):
        # rows of [A | b]: divide by max magnitude (keeps x unchanged)
        absA = abs(self.A)
        row_max = np.asarray(absA.max(axis=1).todense()).ravel()
        row_max = np.maximum(row_max, np.abs(self.b))
        row_max = np.where(row_max > 1.0, row_max, 1.0)
        d = sp.diags(1.0 / row_max)
        self.A = sp.csr_matrix(d @ self.A)
        self.b = self.b / row_max
        c_max = float(np.max(np.abs(self.c))) if self.c.size else 0.0
        if c_max > 1.0:
            self.c = self.c / c_max
            self.objective_scale *= c_max

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def user_objective(self, x: np.ndarray) -> float:
        return self.objective_scale * float(self.c @ x) + self.objective_offset


@dataclass
class ConicSolution:
    """Primal/dual point of the homogeneous embedding plus status data.

    status is one of "optimal", "primal-infeasible", "dual-infeasible",
    "max-iter".  ``gap`` is the final complementarity mu_e; ``residuals``
    holds the scaled primal/dual/gap residual norms.  ``objective`` and
    ``dual_objective`` are in user units (scale and offset applied).
    """

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    tau: float
    kappa: float
    status: str
    gap: float
    residuals: Dict[str, float]
    iterations: int
    objective: float
    dual_objective: float
    gap_trace: list = field(default_factory=list)
    # set when the iteration stalled at numerical limits but the point
    # satisfies a mildly relaxed tolerance (boundary-limit problems)
    inaccurate: bool = False

    @property
    def primal(self) -> np.ndarray:
        """The de-homogenized primal point x / tau."""
        return self.x / self.tau

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# -- sparse text dump format --------------------------------------------------
#
# Line-oriented, '#' comments allowed.  Sections:
#   problem <n> <m>
#   scale <objective_scale> <objective_offset>
#   cone orthant <len>   |   cone exp
#   c <i> <value>                 (nonzeros only)
#   b <j> <value>
#   A <j> <i> <value>             (COO triplets)
# Floats use repr-style %.17g so the dump re-parses losslessly.


def dump_program(prog: ConicProgram, fh=None) -> Optional[str]:
    out = fh or io.StringIO()
    out.write(f"problem {prog.n} {prog.m}\n")
    out.write(
        "scale %.17g %.17g\n" % (prog.objective_scale, prog.objective_offset)
    )
    for kind, length in prog.cones.blocks:
        if kind == "orthant":
            out.write(f"cone orthant {length}\n")
        else:
            out.write("cone exp\n")
    for i in np.nonzero(prog.c)[0]:
        out.write("c %d %.17g\n" % (i, prog.c[i]))
    for j in np.nonzero(prog.b)[0]:
        out.write("b %d %.17g\n" % (j, prog.b[j]))
    coo = prog.A.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        out.write("A %d %d %.17g\n" % (coo.row[k], coo.col[k], coo.data[k]))
    if fh is None:
        return out.getvalue()
    return None


def parse_program(text: str) -> ConicProgram:
    n = m = None
    scale, offset = 1.0, 0.0
    blocks = []
    c_entries, b_entries, a_entries = [], [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "problem":
            n, m = int(parts[1]), int(parts[2])
        elif tag == "scale":
            scale, offset = float(parts[1]), float(parts[2])
        elif tag == "cone":
            if parts[1] == "orthant":
                blocks.append(("orthant", int(parts[2])))
            elif parts[1] == "exp":
                blocks.append(("exp", 3))
            else:
                raise ProgramError(f"unknown cone kind {parts[1]!r}")
        elif tag == "c":
            c_entries.append((int(parts[1]), float(parts[2])))
        elif tag == "b":
            b_entries.append((int(parts[1]), float(parts[2])))
        elif tag == "A":
            a_entries.append((int(parts[1]), int(parts[2]), float(parts[3])))
        else:
            raise ProgramError(f"unknown line tag {tag!r}")
    if n is None:
        raise ProgramError("missing 'problem' header")
    c = np.zeros(n)
    for i, v in c_entries:
        c[i] = v
    b = np.zeros(m)
    for j, v in b_entries:
        b[j] = v
    rows = [j for j, _, _ in a_entries]
    cols = [i for _, i, _ in a_entries]
    vals = [v for _, _, v in a_entries]
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return ConicProgram(c, A, b, ConeSpec(tuple(blocks)), scale, offset)
