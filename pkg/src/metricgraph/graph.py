"""Metric graphs: finite multigraphs whose edges carry lengths.

An edge of length ``l`` is the interval ``(0, l)`` glued to the vertex set at
its endpoints; edges of infinite length have an initial vertex only.  The
whole graph is a metric measure space: the distance between two points is the
infimum of lengths of vertex chains in which consecutive points share an
edge, and the measure is Lebesgue measure on the edges.

Loops and parallel edges are allowed.  A loop contributes two independent
edge-ends to its vertex, so the boundary-value space at a vertex ``v`` always
has dimension equal to the degree ``d_v``.

Everything here is immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Union

VertexId = Union[str, int]
EdgeId = Union[str, int]

INIT = "init"
TERM = "term"


@dataclass(frozen=True)
class Edge:
    """Oriented edge: the interval ``(0, length)`` with ends ``init`` / ``end``.

    ``end`` is ``None`` exactly when the length is infinite.
    """

    id: EdgeId
    length: float
    init: VertexId
    end: VertexId | None

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.length)


@dataclass(frozen=True)
class VertexPoint:
    vertex: VertexId


@dataclass(frozen=True)
class EdgePoint:
    """Interior point of an edge at arc-length coordinate ``t``, 0 < t < l."""

    edge: EdgeId
    t: float


Point = Union[VertexPoint, EdgePoint]


@dataclass(frozen=True)
class EdgeSegment:
    """Closed subinterval [t0, t1] of an edge, of positive length."""

    edge: EdgeId
    t0: float
    t1: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.t0 < self.t1):
            raise ValueError(f"degenerate segment [{self.t0}, {self.t1}] on edge {self.edge!r}")

    @property
    def length(self) -> float:
        return self.t1 - self.t0


@dataclass(frozen=True)
class VertexStar:
    """Ordered list of edge-ends meeting a vertex.

    Slots are sorted by edge id, with the initial end of a loop before the
    terminal one, so the ordering is canonical.  Boundary-value vectors at the
    vertex are indexed by these slots.
    """

    vertex: VertexId
    slots: tuple[tuple[EdgeId, str], ...]

    @property
    def degree(self) -> int:
        return len(self.slots)

    def index(self, edge_id: EdgeId, end: str) -> int:
        return self.slots.index((edge_id, end))


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str


@dataclass(frozen=True)
class MetricGraph:
    """Vertices, edges with lengths, and the uniform lower length bound ``u``.

    ``u`` is part of the data: all edges must be at least this long, and the
    constants in the form bounds (see :mod:`metricgraph.boundary`) depend on
    it.
    """

    vertices: tuple[VertexId, ...]
    edges: tuple[Edge, ...]
    u: float

    # -- derived lookups ---------------------------------------------------

    @cached_property
    def _edge_map(self) -> dict[EdgeId, Edge]:
        return {e.id: e for e in self.edges}

    @cached_property
    def _stars(self) -> dict[VertexId, VertexStar]:
        slots: dict[VertexId, list[tuple[EdgeId, str]]] = {v: [] for v in self.vertices}
        for e in self.edges:
            if e.init in slots:
                slots[e.init].append((e.id, INIT))
            if e.end is not None and e.end in slots:
                slots[e.end].append((e.id, TERM))
        out = {}
        for v, sl in slots.items():
            sl.sort(key=lambda s: (s[0], 0 if s[1] == INIT else 1))
            out[v] = VertexStar(v, tuple(sl))
        return out

    def edge(self, edge_id: EdgeId) -> Edge:
        try:
            return self._edge_map[edge_id]
        except KeyError:
            raise ValueError(f"unknown edge {edge_id!r}") from None

    def star(self, vertex: VertexId) -> VertexStar:
        try:
            return self._stars[vertex]
        except KeyError:
            raise ValueError(f"unknown vertex {vertex!r}") from None

    def degree(self, vertex: VertexId) -> int:
        return self.star(vertex).degree

    @cached_property
    def total_length(self) -> float:
        return sum(e.length for e in self.edges)

    @property
    def is_compact(self) -> bool:
        return all(e.is_finite for e in self.edges)

    def require_compact(self, what: str) -> None:
        if not self.is_compact:
            raise ValueError(f"{what} requires a compact graph (all edge lengths finite)")

    def require_valid(self) -> None:
        problems = validate(self)
        if problems:
            msgs = "; ".join(p.message for p in problems)
            raise ValueError(f"invalid metric graph: {msgs}")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate(g: MetricGraph) -> list[Violation]:
    """Check the structural invariants; violations are data, not exceptions."""
    out: list[Violation] = []
    if not (g.u > 0):
        out.append(Violation("u", "graph", f"lower length bound u={g.u} must be positive"))
    seen_v = set()
    for v in g.vertices:
        if v in seen_v:
            out.append(Violation("vertex-dup", str(v), f"duplicate vertex id {v!r}"))
        seen_v.add(v)
    seen_e = set()
    for e in g.edges:
        if e.id in seen_e:
            out.append(Violation("edge-dup", str(e.id), f"duplicate edge id {e.id!r}"))
        seen_e.add(e.id)
        if not (e.length > 0):
            out.append(Violation("length", str(e.id), f"edge {e.id!r} has nonpositive length {e.length}"))
        elif g.u > 0 and e.length < g.u - 1e-15:
            out.append(
                Violation("lb", str(e.id), f"edge {e.id!r} has length {e.length} below the bound u={g.u}")
            )
        if e.init not in seen_v:
            out.append(Violation("endpoint", str(e.id), f"edge {e.id!r}: unknown initial vertex {e.init!r}"))
        if e.is_finite:
            if e.end is None:
                out.append(Violation("endpoint", str(e.id), f"finite edge {e.id!r} is missing its end vertex"))
            elif e.end not in g.vertices:
                out.append(Violation("endpoint", str(e.id), f"edge {e.id!r}: unknown end vertex {e.end!r}"))
        elif e.end is not None:
            out.append(
                Violation("endpoint", str(e.id), f"infinite edge {e.id!r} must not declare an end vertex")
            )
    for v in g.vertices:
        if g._stars[v].degree == 0:
            out.append(Violation("isolated", str(v), f"vertex {v!r} has degree 0"))
    return out


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------


def point_on_edge(g: MetricGraph, edge_id: EdgeId, t: float) -> Point:
    """Point at coordinate ``t`` on an edge; endpoints normalize to vertices."""
    e = g.edge(edge_id)
    if t < 0 or t > e.length:
        raise ValueError(f"coordinate {t} outside [0, {e.length}] on edge {edge_id!r}")
    if t == 0:
        return VertexPoint(e.init)
    if t == e.length:
        if e.end is None:
            raise ValueError(f"infinite edge {edge_id!r} has no far endpoint")
        return VertexPoint(e.end)
    return EdgePoint(edge_id, t)


def _check_point(g: MetricGraph, x: Point) -> None:
    if isinstance(x, VertexPoint):
        if x.vertex not in g._stars:
            raise ValueError(f"unknown vertex {x.vertex!r}")
    elif isinstance(x, EdgePoint):
        e = g.edge(x.edge)
        if not (0.0 < x.t < e.length):
            raise ValueError(f"edge coordinate {x.t} not interior to (0, {e.length})")
    else:
        raise TypeError(f"not a point: {x!r}")


# ---------------------------------------------------------------------------
# path metric
# ---------------------------------------------------------------------------


def vertex_distances(g: MetricGraph, x: Point) -> dict[VertexId, float]:
    """Shortest-path distance from ``x`` to every vertex (inf if unreachable).

    Parallel edges are kept separately, so the shorter of two parallel edges
    is the one that counts.  Infinite edges connect nothing (their far end is
    not a vertex).
    """
    _check_point(g, x)
    dist = {v: math.inf for v in g.vertices}
    heap: list[tuple[float, VertexId]] = []
    if isinstance(x, VertexPoint):
        heapq.heappush(heap, (0.0, _hkey(x.vertex)))
        dist[x.vertex] = 0.0
    else:
        e = g.edge(x.edge)
        dist[e.init] = x.t
        heapq.heappush(heap, (x.t, _hkey(e.init)))
        if e.end is not None:
            d = e.length - x.t
            if d < dist[e.end]:
                dist[e.end] = d
                heapq.heappush(heap, (d, _hkey(e.end)))

    adj: dict[VertexId, list[tuple[VertexId, float]]] = {v: [] for v in g.vertices}
    for e in g.edges:
        if e.end is not None:
            adj[e.init].append((e.end, e.length))
            adj[e.end].append((e.init, e.length))

    keymap = {_hkey(v): v for v in g.vertices}
    while heap:
        d, vk = heapq.heappop(heap)
        v = keymap[vk]
        if d > dist[v]:
            continue
        for w, le in adj[v]:
            nd = d + le
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, _hkey(w)))
    return dist


def _hkey(v: VertexId) -> tuple[int, str]:
    # heap entries must be comparable even for mixed id types
    return (0 if isinstance(v, (int, float)) else 1, str(v))


def distance(g: MetricGraph, x: Point, y: Point) -> float:
    """Path metric between two points; ``inf`` across components."""
    _check_point(g, y)
    dv = vertex_distances(g, x)
    if isinstance(y, VertexPoint):
        return dv[y.vertex]
    e = g.edge(y.edge)
    best = dv[e.init] + y.t
    if e.end is not None:
        best = min(best, dv[e.end] + (e.length - y.t))
    if isinstance(x, EdgePoint) and x.edge == y.edge:
        best = min(best, abs(x.t - y.t))
    return best


def _union_length(intervals: Iterable[tuple[float, float]]) -> float:
    ivs = sorted((a, b) for a, b in intervals if b > a)
    total = 0.0
    cur_a = cur_b = None
    for a, b in ivs:
        if cur_b is None or a > cur_b:
            if cur_b is not None:
                total += cur_b - cur_a
            cur_a, cur_b = a, b
        else:
            cur_b = max(cur_b, b)
    if cur_b is not None:
        total += cur_b - cur_a
    return total


def _edge_ball_intervals(
    g: MetricGraph, e: Edge, dv: Mapping[VertexId, float], x: Point, r: float
) -> list[tuple[float, float]]:
    """Sublevel set {t : d(x, point(e,t)) <= r} as a union of intervals."""
    out: list[tuple[float, float]] = []
    di = dv.get(e.init, math.inf)
    if r > di:
        out.append((0.0, min(e.length, r - di)))
    if e.end is not None:
        dj = dv.get(e.end, math.inf)
        if r > dj:
            out.append((max(0.0, e.length - (r - dj)), e.length))
    if isinstance(x, EdgePoint) and x.edge == e.id and r > 0:
        out.append((max(0.0, x.t - r), min(e.length, x.t + r)))
    return out


def ball_volume(g: MetricGraph, x0: Point, r: float) -> float:
    """Lebesgue measure of the closed metric ball B(x0, r).

    Computed edge by edge in closed form: on each edge the distance to ``x0``
    is the minimum of affine functions of the arc-length coordinate, so the
    sublevel set is a union of at most three intervals.
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    _check_point(g, x0)
    dv = vertex_distances(g, x0)
    return sum(_union_length(_edge_ball_intervals(g, e, dv, x0, r)) for e in g.edges)


# ---------------------------------------------------------------------------
# window enumeration
# ---------------------------------------------------------------------------


def segments(g: MetricGraph, max_len: float, step: float) -> list[EdgeSegment]:
    """Sliding windows of width ``min(max_len, l(e))`` covering every edge.

    Start offsets are multiples of ``step``; a final window flush with the far
    end is added when the edge length is not an exact multiple.
    """
    if not (0 < step <= max_len):
        raise ValueError("need 0 < step <= max_len")
    out: list[EdgeSegment] = []
    for e in g.edges:
        if not e.is_finite:
            raise ValueError(f"edge {e.id!r} has infinite length; truncate before windowing")
        w = min(max_len, e.length)
        starts = []
        k = 0
        while k * step <= e.length - w + 1e-12:
            starts.append(k * step)
            k += 1
        last = e.length - w
        if not starts or abs(starts[-1] - last) > 1e-12:
            starts.append(last)
        for a in starts:
            out.append(EdgeSegment(e.id, a, a + w))
    return out


# ---------------------------------------------------------------------------
# connectivity
# ---------------------------------------------------------------------------


def connected_components(g: MetricGraph) -> list[set[VertexId]]:
    seen: set[VertexId] = set()
    comps = []
    for v in g.vertices:
        if v in seen:
            continue
        comp = set()
        stack = [v]
        while stack:
            w = stack.pop()
            if w in comp:
                continue
            comp.add(w)
            for eid, _ in g.star(w).slots:
                e = g.edge(eid)
                for other in (e.init, e.end):
                    if other is not None and other not in comp:
                        stack.append(other)
        seen |= comp
        comps.append(comp)
    return comps


def is_connected(g: MetricGraph) -> bool:
    return len(connected_components(g)) <= 1


# ---------------------------------------------------------------------------
# JSON description files
# ---------------------------------------------------------------------------

_GRAPH_KEYS = {"u", "vertices", "edges"}
_EDGE_KEYS = {"id", "length", "from", "to"}


def graph_from_dict(doc: Mapping) -> MetricGraph:
    """Parse ``{"u": ..., "vertices": [...], "edges": [{...}]}``.

    Unknown keys are rejected; ``"length": "inf"`` marks an infinite edge, in
    which case ``"to"`` must be omitted.
    """
    unknown = set(doc) - _GRAPH_KEYS
    if unknown:
        raise ValueError(f"unknown graph keys: {sorted(unknown)}")
    for key in _GRAPH_KEYS:
        if key not in doc:
            raise ValueError(f"graph document is missing {key!r}")
    edges = []
    for rec in doc["edges"]:
        bad = set(rec) - _EDGE_KEYS
        if bad:
            raise ValueError(f"unknown edge keys: {sorted(bad)}")
        if "id" not in rec or "length" not in rec or "from" not in rec:
            raise ValueError(f"edge record {rec!r} needs id, length, from")
        raw = rec["length"]
        if raw == "inf":
            length = math.inf
        else:
            length = float(raw)
        if math.isinf(length) and "to" in rec:
            raise ValueError(f"infinite edge {rec['id']!r} must omit 'to'")
        if math.isfinite(length) and "to" not in rec:
            raise ValueError(f"finite edge {rec['id']!r} needs 'to'")
        edges.append(Edge(rec["id"], length, rec["from"], rec.get("to")))
    return MetricGraph(tuple(doc["vertices"]), tuple(edges), float(doc["u"]))


def load_graph(path: str | Path) -> MetricGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return graph_from_dict(json.load(fh))


def graph_to_dict(g: MetricGraph) -> dict:
    edges = []
    for e in g.edges:
        rec: dict = {"id": e.id, "length": e.length if e.is_finite else "inf", "from": e.init}
        if e.end is not None:
            rec["to"] = e.end
        edges.append(rec)
    return {"u": g.u, "vertices": list(g.vertices), "edges": edges}
