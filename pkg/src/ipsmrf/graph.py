"""Finite marked graphs and the neighbourhood / separation computations
the rest of the package is phrased in.

Vertex ids are nonnegative integers.  Marks are arbitrary JSON-serialisable
values; only models interpret them.
"""
from __future__ import annotations

import json
import numbers
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import networkx as nx

from .exceptions import InputError
from .validation import check_disjoint, check_positive_int, check_vertex_set


@dataclass(frozen=True)
class MarkedGraph:
    """Simple undirected graph with one mark per vertex.

    Construct through :meth:`from_edges` (or the builders below); the
    constructor itself trusts its arguments.
    """

    vertices: tuple
    edges: frozenset
    marks: Mapping
    _adj: Mapping = field(repr=False, compare=False, default=None)

    @classmethod
    def from_edges(cls, vertices: Iterable[int], edges: Iterable, marks: Mapping | None = None,
                   default_mark=0) -> "MarkedGraph":
        vs = []
        for v in vertices:
            if isinstance(v, bool) or not isinstance(v, numbers.Integral) or v < 0:
                raise InputError(f"vertex ids must be nonnegative integers, got {v!r}")
            vs.append(int(v))
        if len(set(vs)) != len(vs):
            raise InputError("duplicate vertex id")
        vset = set(vs)
        es = set()
        for e in edges:
            u, w = (int(x) for x in e)
            if u == w:
                raise InputError(f"self-loop at vertex {u}")
            if u not in vset or w not in vset:
                raise InputError(f"edge ({u}, {w}) has an undeclared endpoint")
            key = (min(u, w), max(u, w))
            if key in es:
                raise InputError(f"duplicate edge {key}")
            es.add(key)
        marks = dict(marks or {})
        unknown = set(marks) - vset
        if unknown:
            raise InputError(f"marks given for undeclared vertices {sorted(unknown)}")
        full_marks = {v: marks.get(v, default_mark) for v in sorted(vs)}
        adj = {v: [] for v in vs}
        for u, w in es:
            adj[u].append(w)
            adj[w].append(u)
        adj = {v: tuple(sorted(n)) for v, n in adj.items()}
        return cls(tuple(sorted(vs)), frozenset(es), full_marks, adj)

    def __len__(self):
        return len(self.vertices)

    def __contains__(self, v):
        return v in self._adj

    def neighbors(self, v: int) -> tuple:
        try:
            return self._adj[v]
        except KeyError:
            raise InputError(f"unknown vertex {v}") from None

    def degree(self, v: int) -> int:
        return len(self.neighbors(v))

    def closure_of(self, v: int) -> tuple:
        """Sorted ``cl(v)`` of a single vertex."""
        return tuple(sorted((v,) + self.neighbors(v)))

    def with_marks(self, marks: Mapping) -> "MarkedGraph":
        return MarkedGraph.from_edges(self.vertices, self.edges, marks)

    def subgraph(self, vertices: Iterable[int]) -> "MarkedGraph":
        """Induced subgraph, keeping vertex ids and marks."""
        keep = set(check_vertex_set(vertices, self._adj, "subgraph"))
        edges = [e for e in self.edges if e[0] in keep and e[1] in keep]
        return MarkedGraph.from_edges(sorted(keep), edges, {v: self.marks[v] for v in keep})

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.vertices)
        g.add_edges_from(self.edges)
        return g

    def index(self) -> dict:
        """Map vertex id to its column position (vertices are stored sorted)."""
        return {v: i for i, v in enumerate(self.vertices)}

    # -- serialisation -------------------------------------------------

    def to_json(self) -> dict:
        return {"vertices": [{"id": v, "mark": self.marks[v]} for v in self.vertices],
                "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_json(cls, data: Mapping) -> "MarkedGraph":
        try:
            entries = data["vertices"]
            edges = data.get("edges", [])
        except (TypeError, KeyError):
            raise InputError("graph JSON needs a 'vertices' list") from None
        ids, marks = [], {}
        for item in entries:
            if not isinstance(item, Mapping) or "id" not in item:
                raise InputError(f"graph JSON vertex entry without 'id': {item!r}")
            vid = item["id"]
            if vid in marks:
                raise InputError(f"duplicate vertex id {vid}")
            if "mark" not in item:
                raise InputError(f"vertex {vid} has no mark")
            ids.append(vid)
            marks[vid] = item["mark"]
        return cls.from_edges(ids, edges, marks)


def load_graph(path) -> MarkedGraph:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from None
    return MarkedGraph.from_json(data)


def save_graph(g: MarkedGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(g.to_json(), fh)


# -- builders ----------------------------------------------------------

def path_graph(n: int, start: int = 0, marks=None) -> MarkedGraph:
    vs = range(start, start + n)
    return MarkedGraph.from_edges(vs, [(v, v + 1) for v in vs[:-1]], marks)


def cycle_graph(n: int, start: int = 0, marks=None) -> MarkedGraph:
    if n < 3:
        raise InputError("a simple cycle needs at least 3 vertices")
    vs = list(range(start, start + n))
    return MarkedGraph.from_edges(vs, [(vs[i], vs[(i + 1) % n]) for i in range(n)], marks)


def grid_graph(rows: int, cols: int, marks=None) -> MarkedGraph:
    vid = lambda r, c: r * cols + c  # noqa: E731
    edges = [(vid(r, c), vid(r, c + 1)) for r in range(rows) for c in range(cols - 1)]
    edges += [(vid(r, c), vid(r + 1, c)) for r in range(rows - 1) for c in range(cols)]
    return MarkedGraph.from_edges(range(rows * cols), edges, marks)


def tree_graph(branching: int, depth: int, marks=None) -> MarkedGraph:
    """Complete ``branching``-ary tree of the given depth rooted at 0."""
    g = nx.balanced_tree(branching, depth)
    return MarkedGraph.from_edges(g.nodes, g.edges, marks)


def erdos_renyi_graph(n: int, p: float, seed: int = 0, marks=None) -> MarkedGraph:
    g = nx.gnp_random_graph(n, p, seed=seed)
    return MarkedGraph.from_edges(g.nodes, g.edges, marks)


# -- neighbourhood operations --------------------------------------------

def _distances(g: MarkedGraph, sources, cutoff=None) -> dict:
    dist = {s: 0 for s in sources}
    queue = deque(sources)
    while queue:
        u = queue.popleft()
        d = dist[u]
        if cutoff is not None and d >= cutoff:
            continue
        for w in g.neighbors(u):
            if w not in dist:
                dist[w] = d + 1
                queue.append(w)
    return dist


def neighborhood(g: MarkedGraph, u: Iterable[int], alpha: int = 1) -> frozenset:
    """Vertices outside ``u`` within graph distance ``alpha`` of ``u``."""
    u = check_vertex_set(u, g, "u")
    alpha = check_positive_int(alpha, "alpha")
    dist = _distances(g, u, cutoff=alpha)
    return frozenset(v for v, d in dist.items() if 0 < d <= alpha)


def closure(g: MarkedGraph, u: Iterable[int]) -> frozenset:
    u = check_vertex_set(u, g, "u")
    return frozenset(u) | neighborhood(g, u, 1)


def ball(g: MarkedGraph, root: int, n: int) -> frozenset:
    if root not in g:
        raise InputError(f"unknown root {root}")
    n = check_positive_int(n, "n", minimum=0)
    return frozenset(_distances(g, [root], cutoff=n))


def _walk_reachable(g, a, b, s, alpha):
    """Breadth-first search over (vertex, run length) states.

    The run length counts the trailing consecutive vertices in ``s``.  A
    state whose run reaches ``alpha`` is dead.  Walks may revisit vertices,
    so an unreachable ``b`` certifies separation while a reachable one only
    suggests a violating simple path.
    """
    start = [(v, 0) for v in a]
    seen = set(start)
    queue = deque(start)
    while queue:
        v, run = queue.popleft()
        for w in g.neighbors(v):
            if w in b:
                return True
            nrun = run + 1 if w in s else 0
            if nrun >= alpha or (w, nrun) in seen:
                continue
            seen.add((w, nrun))
            queue.append((w, nrun))
    return False


def _simple_path_escapes(g, a, b, s, alpha):
    """Depth-first search over simple paths whose S-runs stay below alpha."""
    on_path = set()

    def extend(v, run):
        for w in g.neighbors(v):
            if w in on_path:
                continue
            if w in b:
                return True
            nrun = run + 1 if w in s else 0
            if nrun >= alpha or w in a:
                # a path re-entering A is dominated by the one starting there
                continue
            on_path.add(w)
            if extend(w, nrun):
                return True
            on_path.discard(w)
        return False

    for v in sorted(a):
        on_path.add(v)
        if extend(v, 0):
            return True
        on_path.discard(v)
    return False


def alpha_separates(g: MarkedGraph, s: Iterable[int], a: Iterable[int], b: Iterable[int],
                    alpha: int) -> bool:
    """True iff every simple path from ``a`` to ``b`` contains ``alpha``
    consecutive (distinct) vertices of ``s``.

    A walk-level search over run-length states decides the common case in
    polynomial time.  Only when it finds an escaping walk is the answer
    confirmed by an exact search restricted to simple paths, because a
    walk can dodge long runs by looping in a way no simple path can.
    """
    s = set(check_vertex_set(s, g, "s"))
    a = set(check_vertex_set(a, g, "a"))
    b = set(check_vertex_set(b, g, "b"))
    alpha = check_positive_int(alpha, "alpha")
    check_disjoint(s=s, a=a, b=b)
    if not a or not b:
        return True
    if not _walk_reachable(g, a, b, s, alpha):
        return True
    return not _simple_path_escapes(g, a, b, s, alpha)
