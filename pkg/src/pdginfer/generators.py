"""Random PDG and random k-tree instance samplers.

The plain sampler draws, uniformly: a variable count, a per-instance value
count, an arc count, and per-arc source/target counts; sources are chosen
without replacement, targets from the remaining variables, and cpd rows are
normalized uniform entries.  All confidences are 1, so gamma = 1 sits on
the convex-regime boundary.

The k-tree sampler grows a random k-tree (start from a (k+1)-clique; each
new vertex connects to a random existing k-clique), records the clique
tree alongside, and samples every arc inside a random clique so the
embedded decomposition covers it by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .decomp import TreeDecomposition
from .model import PDG, Hyperarc, Variable

__all__ = ["random_pdg", "random_ktree_pdg"]


def _normalized_rows(rng, n_rows: int, n_cols: int) -> np.ndarray:
    raw = rng.uniform(size=(n_rows, n_cols))
    raw = np.maximum(raw, 1e-12)
    return raw / raw.sum(axis=1, keepdims=True)


def random_pdg(
    seed: int,
    n_range: Tuple[int, int] = (5, 9),
    arcs_range: Tuple[int, int] = (7, 14),
    values: Tuple[int, ...] = (2, 3),
    sources_range: Tuple[int, int] = (0, 3),
    targets_range: Tuple[int, int] = (1, 2),
) -> PDG:
    """Sample a random PDG; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    v = int(values[rng.integers(0, len(values))])
    n_arcs = int(rng.integers(arcs_range[0], arcs_range[1] + 1))
    names = [f"V{i}" for i in range(n)]
    variables = [Variable(name, tuple(range(v))) for name in names]
    arcs = []
    for a in range(n_arcs):
        n_src = int(rng.integers(sources_range[0], min(sources_range[1], n - 1) + 1))
        max_tgt = min(targets_range[1], n - n_src)
        n_tgt = int(rng.integers(targets_range[0], max(targets_range[0], max_tgt) + 1))
        perm = rng.permutation(n)
        sources = tuple(names[i] for i in sorted(perm[:n_src]))
        targets = tuple(names[i] for i in sorted(perm[n_src : n_src + n_tgt]))
        cpd = _normalized_rows(rng, v**n_src, v**n_tgt)
        arcs.append(Hyperarc(f"a{a}", sources, targets, cpd, alpha=1.0, beta=1.0))
    return PDG(variables, arcs)


def random_ktree_pdg(
    seed: int,
    n: int = 8,
    treewidth: int = 2,
    n_arcs: int = 10,
    values: int = 2,
) -> Tuple[PDG, TreeDecomposition]:
    """Sample a PDG whose structure lives inside a random k-tree.

    Returns the PDG together with the embedded clique tree (every arc's
    scope is contained in one of its clusters; width = ``treewidth``).
    """
    if n < treewidth + 1:
        raise ValueError("need at least treewidth + 1 variables")
    rng = np.random.default_rng(seed)
    k = treewidth
    names = [f"V{i}" for i in range(n)]
    variables = [Variable(name, tuple(range(values))) for name in names]

    cliques = [tuple(range(k + 1))]  # vertex indices
    tree_edges = []
    for vtx in range(k + 1, n):
        host = int(rng.integers(0, len(cliques)))
        members = list(cliques[host])
        rng.shuffle(members)
        sub = tuple(sorted(members[:k]))
        cliques.append(tuple(sorted(sub + (vtx,))))
        tree_edges.append((host, len(cliques) - 1))

    arcs = []
    for a in range(n_arcs):
        clique = cliques[int(rng.integers(0, len(cliques)))]
        n_src = int(rng.integers(0, 4))
        n_tgt = int(rng.integers(1, 3))
        while n_src + n_tgt > k + 1:
            n_src = int(rng.integers(0, 4))
            n_tgt = int(rng.integers(1, 3))
        members = list(clique)
        rng.shuffle(members)
        sources = tuple(names[i] for i in sorted(members[:n_src]))
        targets = tuple(names[i] for i in sorted(members[n_src : n_src + n_tgt]))
        cpd = _normalized_rows(rng, values**n_src, values**n_tgt)
        arcs.append(Hyperarc(f"a{a}", sources, targets, cpd, alpha=1.0, beta=1.0))
    pdg = PDG(variables, arcs)
    clusters = tuple(tuple(names[i] for i in cl) for cl in cliques)
    td = TreeDecomposition(clusters, tuple(tree_edges))
    td.verify(pdg)
    return pdg, td
