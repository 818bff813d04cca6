"""Lumped circuits as graphs and their PSO model assembly.

A circuit is a graph whose vertices are charge nodes and whose edges
carry a parallel inverse inductance k (1/H), conductance g (S) and
capacitance c (F); a value of 0 is an open circuit.  Node fluxes along a
rooted spanning tree give independent coordinates, and the PSO matrices
follow from an explicit symmetric sum over edges which is positive
semidefinite by construction.  Semi-infinite transmission lines fold
into the graph as a resistor of the line impedance plus a drive port.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .model import PSOModel, PsoError


class DisconnectedGraphError(PsoError):
    def __init__(self, components):
        self.components = components
        names = ["{" + ", ".join(sorted(c)) + "}" for c in components]
        super().__init__(f"circuit graph is disconnected: components {', '.join(names)}")


class NonPositiveImpedanceError(PsoError):
    """Semi-infinite line impedance must be strictly positive."""


GROUND = "gnd"


class CircuitGraph:
    """Vertices plus symmetric k, g, c edge values, ports and terminations.

    Vertices are kept in declaration order; the root (ground) vertex is
    created automatically.  Edge values accumulate, so adding a branch
    twice puts the elements in parallel.
    """

    def __init__(self, root: str = GROUND):
        self.root = root
        self.vertices: list[str] = [root]
        self._index = {root: 0}
        self._k: dict[tuple[str, str], float] = {}
        self._g: dict[tuple[str, str], float] = {}
        self._c: dict[tuple[str, str], float] = {}
        self.ports: list[tuple[str, str, str]] = []  # (name, v_from, v_to)
        self.semi_infinite: list[dict] = []

    def copy(self) -> "CircuitGraph":
        g = CircuitGraph(self.root)
        g.vertices = list(self.vertices)
        g._index = dict(self._index)
        g._k = dict(self._k)
        g._g = dict(self._g)
        g._c = dict(self._c)
        g.ports = list(self.ports)
        g.semi_infinite = [dict(r) for r in self.semi_infinite]
        return g

    def add_vertex(self, name: str) -> str:
        if name not in self._index:
            self._index[name] = len(self.vertices)
            self.vertices.append(name)
        return name

    def _edge_key(self, v1: str, v2: str) -> tuple[str, str]:
        if v1 == v2:
            raise ValueError(f"self-loop on vertex {v1!r} carries no flux")
        i1, i2 = self._index[v1], self._index[v2]
        return (v1, v2) if i1 < i2 else (v2, v1)

    def add_branch(self, v1: str, v2: str, k: float = 0.0, g: float = 0.0, c: float = 0.0):
        """Accumulate edge values; all three must be >= 0."""
        for name, val in (("k", k), ("g", g), ("c", c)):
            if val < 0.0:
                raise ValueError(f"edge value {name}({v1},{v2}) = {val} must be >= 0")
        self.add_vertex(v1)
        self.add_vertex(v2)
        key = self._edge_key(v1, v2)
        if k:
            self._k[key] = self._k.get(key, 0.0) + k
        if g:
            self._g[key] = self._g.get(key, 0.0) + g
        if c:
            self._c[key] = self._c.get(key, 0.0) + c

    def k(self, v1, v2) -> float:
        return self._k.get(self._edge_key(v1, v2), 0.0)

    def g(self, v1, v2) -> float:
        return self._g.get(self._edge_key(v1, v2), 0.0)

    def c(self, v1, v2) -> float:
        return self._c.get(self._edge_key(v1, v2), 0.0)

    def add_port(self, name: str, v_from: str, v_to: str):
        self.add_vertex(v_from)
        self.add_vertex(v_to)
        if any(p[0] == name for p in self.ports):
            raise ValueError(f"duplicate port name {name!r}")
        self.ports.append((name, v_from, v_to))

    def edges(self):
        """All edges with any nonzero value, in deterministic order."""
        keys = set(self._k) | set(self._g) | set(self._c)
        return sorted(keys, key=lambda e: (self._index[e[0]], self._index[e[1]]))

    def neighbors(self, v: str) -> list[str]:
        """Vertices connected to v by any element or declared port."""
        out = []
        for a, b in self.edges():
            if a == v:
                out.append(b)
            elif b == v:
                out.append(a)
        for _, pa, pb in self.ports:
            if pa == v and pb not in out and pb != v:
                out.append(pb)
            elif pb == v and pa not in out and pa != v:
                out.append(pa)
        out.sort(key=lambda u: self._index[u])
        return out


def terminate_semi_infinite(graph: CircuitGraph, edge, z0: float, port_name=None) -> CircuitGraph:
    """Fold a semi-infinite line of impedance z0 into the graph.

    Returns a new graph with g(edge) increased by 1/z0 and the edge
    registered as a drive port carrying the incoming-wave current
    (2/Z0) V+(0).  Eigenmode analysis corresponds to V+ = 0, so the
    port only matters for transfer-function bookkeeping.
    """
    if z0 <= 0.0:
        raise NonPositiveImpedanceError(f"line impedance must be positive, got {z0}")
    v1, v2 = edge
    out = graph.copy()
    out.add_branch(v1, v2, g=1.0 / z0)
    if port_name is None:
        port_name = f"si{len(out.semi_infinite)}"
    out.add_port(port_name, v1, v2)
    out.semi_infinite.append({"edge": (v1, v2), "z0": float(z0), "port": port_name})
    return out


@dataclass(frozen=True)
class TreeMaps:
    """Spanning tree data: oriented edges, l vectors and m differences.

    Tree edge e_i runs from tree_edges[i][0] toward its parent
    tree_edges[i][1]; coordinate i is the flux across e_i and is labeled
    by the child vertex.  l(v) expresses the path flux from v to the
    root; m(v, v') = l(v) - l(v') expresses any edge flux.
    """

    tree_edges: tuple[tuple[str, str], ...]
    l_sparse: dict  # vertex -> {coord index: +-1}
    root: str

    @property
    def n_coords(self) -> int:
        return len(self.tree_edges)

    @property
    def coord_labels(self) -> tuple[str, ...]:
        return tuple(child for child, _ in self.tree_edges)

    def coord_index(self, vertex: str) -> int:
        """Index of the coordinate whose tree edge starts at vertex."""
        for i, (child, _) in enumerate(self.tree_edges):
            if child == vertex:
                return i
        raise KeyError(vertex)

    def l(self, v: str) -> np.ndarray:
        vec = np.zeros(self.n_coords, dtype=int)
        for i, s in self.l_sparse[v].items():
            vec[i] = s
        return vec

    def m(self, v1: str, v2: str) -> np.ndarray:
        return self.l(v1) - self.l(v2)

    def m_sparse(self, v1: str, v2: str) -> dict:
        out = dict(self.l_sparse[v1])
        for i, s in self.l_sparse[v2].items():
            out[i] = out.get(i, 0) - s
            if out[i] == 0:
                del out[i]
        return out


def build_tree_maps(graph: CircuitGraph, tree_policy="bfs") -> TreeMaps:
    """Build spanning-tree coordinates for the graph.

    tree_policy is either "bfs" (breadth-first from the root, vertices
    visited in declaration order) or an explicit ordered list of
    (child, parent) edges forming a spanning tree oriented toward the
    root.  Raises DisconnectedGraphError listing the components when the
    element-plus-port edge set does not connect all vertices.
    """
    if isinstance(tree_policy, str):
        if tree_policy != "bfs":
            raise ValueError(f"unknown tree policy {tree_policy!r}")
        tree_edges = _bfs_tree(graph)
    else:
        tree_edges = [(c, p) for c, p in tree_policy]
        _check_explicit_tree(graph, tree_edges)
    l_sparse = {graph.root: {}}
    pending = deque(range(len(tree_edges)))
    # Children may be listed before their parents in an explicit tree.
    guard = 0
    while pending:
        i = pending.popleft()
        child, parent = tree_edges[i]
        if parent in l_sparse:
            vec = dict(l_sparse[parent])
            vec[i] = 1
            l_sparse[child] = vec
            guard = 0
        else:
            pending.append(i)
            guard += 1
            if guard > len(pending):
                raise ValueError("tree edges do not reach the root")
    return TreeMaps(tuple(tree_edges), l_sparse, graph.root)


def _bfs_tree(graph: CircuitGraph):
    visited = {graph.root}
    tree_edges = []
    queue = deque([graph.root])
    while queue:
        v = queue.popleft()
        for u in graph.neighbors(v):
            if u not in visited:
                visited.add(u)
                tree_edges.append((u, v))
                queue.append(u)
    if len(visited) != len(graph.vertices):
        components = _components(graph)
        raise DisconnectedGraphError(components)
    return tree_edges


def _components(graph: CircuitGraph):
    seen = set()
    comps = []
    for start in graph.vertices:
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for u in graph.neighbors(v):
                if u not in comp:
                    comp.add(u)
                    queue.append(u)
        seen |= comp
        comps.append(comp)
    return comps


def _check_explicit_tree(graph: CircuitGraph, tree_edges):
    children = [c for c, _ in tree_edges]
    if len(set(children)) != len(children):
        raise ValueError("explicit tree repeats a child vertex")
    expected = set(graph.vertices) - {graph.root}
    if set(children) != expected:
        missing = expected - set(children)
        extra = set(children) - expected
        raise ValueError(f"explicit tree mismatch: missing {missing}, extra {extra}")
    if graph.root in children:
        raise ValueError("root cannot be a child in the spanning tree")


def assemble_pso(graph: CircuitGraph, maps: TreeMaps | None = None) -> PSOModel:
    """Assemble the PSO model (K, G, C, P) of the circuit.

    Uses the explicit symmetric sum K_ab = sum_e k(e) m(e)_a m(e)_b over
    unordered edges (and likewise for G and C), which is PSD term by
    term.  P has one column m(p) per declared port.
    """
    if maps is None:
        maps = build_tree_maps(graph)
    n = maps.n_coords
    k = np.zeros((n, n))
    g = np.zeros((n, n))
    c = np.zeros((n, n))
    for key in graph.edges():
        m = maps.m_sparse(*key)
        for mat, table in ((k, graph._k), (g, graph._g), (c, graph._c)):
            val = table.get(key, 0.0)
            if val:
                for a, sa in m.items():
                    for b, sb in m.items():
                        mat[a, b] += val * sa * sb
    p = np.zeros((n, max(len(graph.ports), 0)))
    for j, (_, v_from, v_to) in enumerate(graph.ports):
        for a, sa in maps.m_sparse(v_from, v_to).items():
            p[a, j] = sa
    return PSOModel(
        k, g, c, p, maps.coord_labels, tuple(name for name, _, _ in graph.ports)
    )


def assemble_unreduced(graph: CircuitGraph, maps: TreeMaps | None = None):
    """Debug assembly of the redundant per-vertex equations.

    Returns (K_hat, G_hat, C_hat, T): the |V| x (|V|-1) matrices of the
    per-vertex current-conservation equations and the reduction matrix T
    whose columns are l(v).  Rows of each hat matrix sum to zero, and
    T @ hat equals the direct symmetric assembly.
    """
    if maps is None:
        maps = build_tree_maps(graph)
    n = maps.n_coords
    nv = len(graph.vertices)
    hats = {name: np.zeros((nv, n)) for name in ("k", "g", "c")}
    tables = {"k": graph._k, "g": graph._g, "c": graph._c}
    for key in graph.edges():
        a, b = key
        ia, ib = graph._index[a], graph._index[b]
        m_ab = maps.m_sparse(a, b)
        for name, table in tables.items():
            val = table.get(key, 0.0)
            if val:
                for j, sj in m_ab.items():
                    hats[name][ia, j] += val * sj
                    hats[name][ib, j] -= val * sj  # m(b, a) = -m(a, b)
    t = np.zeros((n, nv))
    for vi, v in enumerate(graph.vertices):
        for i, s in maps.l_sparse[v].items():
            t[i, vi] = s
    return hats["k"], hats["g"], hats["c"], t
