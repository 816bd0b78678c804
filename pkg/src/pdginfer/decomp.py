"""Tree decompositions of a PDG's hypergraph, rooting, and arc assignment.

The decomposition heuristic is min-fill on the moralized graph (every arc's
source+target set becomes a clique); clusters are the maximal cliques of the
resulting chordal graph, joined by a maximum-weight spanning tree on
separator sizes.  Ties break by lowest index everywhere for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .model import PDG

__all__ = [
    "TreeDecomposition",
    "RootedClusterTree",
    "DecompositionError",
    "build_decomposition",
    "root_and_assign",
]


class DecompositionError(ValueError):
    """Raised when a (supplied) decomposition fails its invariants."""


@dataclass(frozen=True)
class TreeDecomposition:
    """Clusters of variable names plus tree edges between cluster indices."""

    clusters: tuple  # tuple of tuples of variable names
    edges: tuple  # tuple of (i, j) index pairs, i < j

    def __post_init__(self):
        object.__setattr__(
            self, "clusters", tuple(tuple(c) for c in self.clusters)
        )
        object.__setattr__(
            self,
            "edges",
            tuple((min(i, j), max(i, j)) for i, j in self.edges),
        )

    @property
    def width(self) -> int:
        return max(len(c) for c in self.clusters) - 1

    def neighbors(self, i: int) -> List[int]:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def separator(self, i: int, j: int) -> frozenset:
        return frozenset(self.clusters[i]) & frozenset(self.clusters[j])

    def verify(self, pdg: PDG) -> None:
        """Raise DecompositionError unless all invariants hold for ``pdg``."""
        sets = [frozenset(c) for c in self.clusters]
        known = set(pdg.var_names)
        for c in sets:
            if not c:
                raise DecompositionError("empty cluster")
            if not c <= known:
                raise DecompositionError(f"cluster {sorted(c)} has unknown variables")
        covered = set().union(*sets) if sets else set()
        if covered != known:
            raise DecompositionError(
                f"variables not covered: {sorted(known - covered)}"
            )
        for arc in pdg.arcs:
            if not any(arc.scope <= c for c in sets):
                raise DecompositionError(f"arc {arc.id!r} not inside any cluster")
        # tree shape: connected and acyclic
        n = len(sets)
        if len(self.edges) != n - 1:
            raise DecompositionError("edge count does not form a tree")
        seen, stack = {0}, [0]
        while stack:
            i = stack.pop()
            for j in self.neighbors(i):
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        if len(seen) != n:
            raise DecompositionError("cluster tree is disconnected")
        # running intersection: walk the unique path between every pair
        parents = self._bfs_parents(0)
        for i in range(n):
            for j in range(i + 1, n):
                need = sets[i] & sets[j]
                if not need:
                    continue
                for k in self._path(parents, i, j):
                    if not need <= sets[k]:
                        raise DecompositionError(
                            f"running intersection fails between clusters "
                            f"{i} and {j} at cluster {k}"
                        )

    def _bfs_parents(self, root: int) -> Dict[int, Optional[int]]:
        parents: Dict[int, Optional[int]] = {root: None}
        queue = [root]
        while queue:
            i = queue.pop(0)
            for j in self.neighbors(i):
                if j not in parents:
                    parents[j] = i
                    queue.append(j)
        return parents

    def _path(self, parents: Dict[int, Optional[int]], i: int, j: int) -> List[int]:
        anc_i = []
        k: Optional[int] = i
        while k is not None:
            anc_i.append(k)
            k = parents[k]
        anc_set = set(anc_i)
        path_j = []
        k = j
        while k not in anc_set:
            path_j.append(k)
            k = parents[k]
        pivot = k
        return anc_i[: anc_i.index(pivot) + 1] + list(reversed(path_j))


@dataclass(frozen=True)
class RootedClusterTree:
    """A rooted decomposition with arc assignments and parent-overlap sets."""

    decomposition: TreeDecomposition
    root: int
    parent: tuple  # parent[i] is the parent index, or -1 at the root
    arc_cluster: dict  # arc id -> cluster index
    vcp: tuple  # vcp[i] = tuple of variable names shared with the parent

    @property
    def clusters(self) -> tuple:
        return self.decomposition.clusters

    def children(self, i: int) -> List[int]:
        return [j for j, p in enumerate(self.parent) if p == i]

    def topo_order(self) -> List[int]:
        """Root first, parents before children."""
        order, queue = [], [self.root]
        while queue:
            i = queue.pop(0)
            order.append(i)
            queue.extend(self.children(i))
        return order


def _moral_graph(pdg: PDG) -> Dict[str, set]:
    adj = {name: set() for name in pdg.var_names}
    for arc in pdg.arcs:
        scope = sorted(arc.scope, key=pdg.var_names.index)
        for i, u in enumerate(scope):
            for v in scope[i + 1 :]:
                adj[u].add(v)
                adj[v].add(u)
    return adj


def _eliminate(pdg: PDG, pick) -> List[tuple]:
    """Run an elimination ordering, returning the elimination cliques."""
    adj = _moral_graph(pdg)
    order_pos = {n: i for i, n in enumerate(pdg.var_names)}
    cliques = []
    remaining = dict(adj)
    while remaining:
        node = pick(remaining, order_pos)
        nbrs = sorted(remaining[node], key=order_pos.get)
        cliques.append(tuple(sorted([node] + nbrs, key=order_pos.get)))
        for i, u in enumerate(nbrs):
            for v in nbrs[i + 1 :]:
                remaining[u].add(v)
                remaining[v].add(u)
        del remaining[node]
        for u in remaining:
            remaining[u].discard(node)
    return cliques


def _min_fill_pick(remaining: Dict[str, set], order_pos: Dict[str, int]) -> str:
    best, best_cost = None, None
    for node in sorted(remaining, key=order_pos.get):
        nbrs = list(remaining[node])
        cost = 0
        for i in range(len(nbrs)):
            for j in range(i + 1, len(nbrs)):
                if nbrs[j] not in remaining[nbrs[i]]:
                    cost += 1
        if best_cost is None or cost < best_cost:
            best, best_cost = node, cost
    return best


def _min_degree_pick(remaining: Dict[str, set], order_pos: Dict[str, int]) -> str:
    return min(sorted(remaining, key=order_pos.get), key=lambda n: len(remaining[n]))


def _spanning_tree(clusters: Sequence[tuple]) -> List[Tuple[int, int]]:
    """Maximum-weight spanning tree on separator sizes (Prim, lowest-index ties).

    Zero-weight edges still connect components so the result is a tree even
    for disconnected graphs.
    """
    n = len(clusters)
    sets = [frozenset(c) for c in clusters]
    if n == 1:
        return []
    in_tree = {0}
    edges: List[Tuple[int, int]] = []
    while len(in_tree) < n:
        best = None  # (weight, -i, -j) maximized
        for i in sorted(in_tree):
            for j in range(n):
                if j in in_tree:
                    continue
                w = len(sets[i] & sets[j])
                key = (w, -i, -j)
                if best is None or key > best[0]:
                    best = (key, i, j)
        _, i, j = best
        edges.append((min(i, j), max(i, j)))
        in_tree.add(j)
    return edges


def build_decomposition(
    pdg: PDG, method: str = "min-fill", clusters: Optional[Iterable] = None
) -> TreeDecomposition:
    """Build (or validate) a tree decomposition of the PDG's hypergraph.

    method: "min-fill" | "min-degree" | "given" (with ``clusters`` supplied;
    the tree over them is a maximum-weight spanning tree on separator sizes).
    """
    if method == "given":
        if clusters is None:
            raise DecompositionError("method 'given' requires clusters")
        cl = [tuple(sorted(c, key=pdg.var_names.index)) for c in clusters]
        td = TreeDecomposition(tuple(cl), tuple(_spanning_tree(cl)))
        td.verify(pdg)
        return td
    if method == "min-fill":
        cliques = _eliminate(pdg, _min_fill_pick)
    elif method == "min-degree":
        cliques = _eliminate(pdg, _min_degree_pick)
    else:
        raise DecompositionError(f"unknown method {method!r}")
    # keep maximal cliques only, preserving first-seen order
    maximal: List[tuple] = []
    for c in cliques:
        cs = set(c)
        if any(cs <= set(m) for m in maximal):
            continue
        maximal = [m for m in maximal if not set(m) <= cs]
        maximal.append(c)
    td = TreeDecomposition(tuple(maximal), tuple(_spanning_tree(maximal)))
    td.verify(pdg)
    return td


def root_and_assign(td: TreeDecomposition, pdg: PDG) -> RootedClusterTree:
    """Assign arcs to smallest covering clusters and pick a minimizing root.

    Each arc goes to the smallest cluster containing its scope (ties by
    lowest cluster index).  The root minimizes the total size of the
    parent-overlap value spaces, sum over non-root clusters of |V(VCP_C)|,
    found by trying every cluster (desk-scale trees are small).
    """
    sets = [frozenset(c) for c in td.clusters]
    arc_cluster = {}
    for arc in pdg.arcs:
        candidates = [
            (len(td.clusters[i]), i) for i, s in enumerate(sets) if arc.scope <= s
        ]
        if not candidates:
            raise DecompositionError(f"arc {arc.id!r} not covered by any cluster")
        arc_cluster[arc.id] = min(candidates)[1]

    def overlap_cost(root: int) -> int:
        parents = td._bfs_parents(root)
        cost = 0
        for i, p in parents.items():
            if p is None:
                continue
            cost += pdg.cardinality(sorted(sets[i] & sets[p]))
        return cost

    best_root = min(range(len(sets)), key=lambda r: (overlap_cost(r), r))
    parents_map = td._bfs_parents(best_root)
    parent = tuple(
        -1 if parents_map[i] is None else parents_map[i] for i in range(len(sets))
    )
    vcp = []
    for i in range(len(sets)):
        if parent[i] < 0:
            vcp.append(())
        else:
            shared = sets[i] & sets[parent[i]]
            vcp.append(tuple(sorted(shared, key=pdg.var_names.index)))
    return RootedClusterTree(td, best_root, parent, arc_cluster, tuple(vcp))
