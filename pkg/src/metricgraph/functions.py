"""Functions on a metric graph, sampled on per-edge uniform grids.

A :class:`GridFunction` stores complex nodal values on every edge, with mesh
width at most ``h_max``.  Vertex traces collect boundary values and inward
derivatives over the edge-ends of each vertex; the derivative at the far end
of an edge carries a minus sign so that the trace is orientation independent.

Also here: the one-dimensional boundary trace inequality

    |h(0)|^2 <= (2/a) ||h||^2_{L2(0,a)} + a ||h'||^2_{L2(0,a)}

evaluated on grid data, and smooth cutoff functions supported on metric balls
whose first two derivatives stay below ``(1 + 4/u)^2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .graph import (
    INIT,
    EdgeId,
    EdgePoint,
    MetricGraph,
    Point,
    VertexId,
    vertex_distances,
)


def edge_grid(g: MetricGraph, edge_id: EdgeId, h_max: float) -> np.ndarray:
    """Uniform nodes 0 = t_0 < ... < t_n = l with h = l/n <= h_max, n >= 2."""
    e = g.edge(edge_id)
    if not e.is_finite:
        raise ValueError(f"edge {edge_id!r} has infinite length; grid functions need finite edges")
    if not (h_max > 0):
        raise ValueError("h_max must be positive")
    n = max(2, int(math.ceil(e.length / h_max - 1e-12)))
    return np.linspace(0.0, e.length, n + 1)


@dataclass(frozen=True)
class GridFunction:
    """Complex nodal values on the per-edge grids of mesh parameter h_max."""

    graph: MetricGraph
    h_max: float
    values: Mapping[EdgeId, np.ndarray]

    def __post_init__(self) -> None:
        for e in self.graph.edges:
            if e.id not in self.values:
                raise ValueError(f"missing values on edge {e.id!r}")
            n_expected = edge_grid(self.graph, e.id, self.h_max).size
            got = np.asarray(self.values[e.id])
            if got.shape != (n_expected,):
                raise ValueError(
                    f"edge {e.id!r}: expected {n_expected} nodes, got shape {got.shape}"
                )
            if not np.all(np.isfinite(got.view(float))):
                raise ValueError(f"edge {e.id!r}: non-finite values")

    # -- constructors --------------------------------------------------

    @classmethod
    def from_callable(
        cls, g: MetricGraph, h_max: float, fn: Callable[[EdgeId, np.ndarray], np.ndarray]
    ) -> "GridFunction":
        vals = {}
        for e in g.edges:
            ts = edge_grid(g, e.id, h_max)
            vals[e.id] = np.asarray(fn(e.id, ts), dtype=complex)
        return cls(g, h_max, vals)

    @classmethod
    def zeros(cls, g: MetricGraph, h_max: float) -> "GridFunction":
        return cls.from_callable(g, h_max, lambda eid, ts: np.zeros_like(ts, dtype=complex))

    @classmethod
    def ones(cls, g: MetricGraph, h_max: float) -> "GridFunction":
        return cls.from_callable(g, h_max, lambda eid, ts: np.ones_like(ts, dtype=complex))

    # -- access ----------------------------------------------------------

    def nodes(self, edge_id: EdgeId) -> np.ndarray:
        return edge_grid(self.graph, edge_id, self.h_max)

    def mesh(self, edge_id: EdgeId) -> float:
        ts = self.nodes(edge_id)
        return float(ts[1] - ts[0])

    def evaluate(self, edge_id: EdgeId, t: np.ndarray) -> np.ndarray:
        """Linear interpolation between nodes."""
        ts = self.nodes(edge_id)
        y = np.asarray(self.values[edge_id])
        t = np.asarray(t, dtype=float)
        return np.interp(t, ts, y.real) + 1j * np.interp(t, ts, y.imag)

    def same_mesh(self, other: "GridFunction") -> bool:
        return self.graph == other.graph and self.h_max == other.h_max

    # -- arithmetic (same mesh only) --------------------------------------

    def _binary(self, other: "GridFunction", op) -> "GridFunction":
        if not self.same_mesh(other):
            raise ValueError("grid functions live on different meshes")
        return GridFunction(
            self.graph, self.h_max, {k: op(np.asarray(v), np.asarray(other.values[k])) for k, v in self.values.items()}
        )

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return self._binary(other, np.add)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self._binary(other, np.subtract)

    def __mul__(self, scalar: complex) -> "GridFunction":
        return GridFunction(self.graph, self.h_max, {k: scalar * np.asarray(v) for k, v in self.values.items()})

    __rmul__ = __mul__

    def pointwise(self, other: "GridFunction") -> "GridFunction":
        return self._binary(other, np.multiply)


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceVector:
    """Boundary values f(v) and inward derivatives f'(v), star-ordered."""

    values: Mapping[VertexId, np.ndarray]
    derivatives: Mapping[VertexId, np.ndarray]


def traces(f: GridFunction) -> TraceVector:
    """Vertex traces with second-order one-sided derivative stencils.

    At an initial end f'(v) = lim f'(t) as t -> 0+, at a terminal end the
    limit at l carries a minus sign; both need three grid nodes.
    """
    g = f.graph
    vals: dict[VertexId, np.ndarray] = {}
    ders: dict[VertexId, np.ndarray] = {}
    for v in g.vertices:
        star = g.star(v)
        fv = np.zeros(star.degree, dtype=complex)
        dv = np.zeros(star.degree, dtype=complex)
        for k, (eid, end) in enumerate(star.slots):
            y = np.asarray(f.values[eid])
            if y.size < 3:
                raise ValueError(f"edge {eid!r} grid too coarse for trace stencils")
            h = f.mesh(eid)
            if end == INIT:
                fv[k] = y[0]
                dv[k] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h)
            else:
                fv[k] = y[-1]
                dv[k] = -(3.0 * y[-1] - 4.0 * y[-2] + y[-3]) / (2.0 * h)
        vals[v] = fv
        ders[v] = dv
    return TraceVector(vals, ders)


# ---------------------------------------------------------------------------
# norms and quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Norms:
    l2: float
    deriv_l2: float
    w12: float
    linf: float


# np.trapz is deprecated in favor of np.trapezoid on numpy >= 2
trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _trapz(y: np.ndarray, h: float) -> float:
    return float(trapezoid(y, dx=h))


def norms(f: GridFunction) -> Norms:
    """Trapezoid L2 norm, centered-difference derivative norm, sup of nodes."""
    l2sq = 0.0
    dsq = 0.0
    linf = 0.0
    for e in f.graph.edges:
        y = np.asarray(f.values[e.id])
        h = f.mesh(e.id)
        l2sq += _trapz(np.abs(y) ** 2, h)
        dy = np.gradient(y, h, edge_order=2)
        dsq += _trapz(np.abs(dy) ** 2, h)
        linf = max(linf, float(np.max(np.abs(y))))
    return Norms(math.sqrt(l2sq), math.sqrt(dsq), math.sqrt(l2sq + dsq), linf)


def inner(f: GridFunction, g: GridFunction) -> complex:
    """L2 pairing <f, g> = integral of f * conj(g), by the trapezoid rule."""
    if not f.same_mesh(g):
        raise ValueError("grid functions live on different meshes")
    acc = 0.0 + 0.0j
    for e in f.graph.edges:
        h = f.mesh(e.id)
        acc += trapezoid(np.asarray(f.values[e.id]) * np.conj(g.values[e.id]), dx=h)
    return complex(acc)


def _prefix_integral(y: np.ndarray, h: float, a: float) -> float:
    """Trapezoid integral of y over [0, a]; a need not hit a node."""
    k = int(math.floor(a / h + 1e-12))
    k = min(k, y.size - 1)
    total = float(trapezoid(y[: k + 1], dx=h)) if k >= 1 else 0.0
    frac = a - k * h
    if frac > 1e-14 and k + 1 < y.size:
        ya = y[k] + (y[k + 1] - y[k]) * frac / h
        total += 0.5 * frac * float(y[k] + ya)
    return total


@dataclass(frozen=True)
class SobolevCheck:
    lhs: float
    rhs: float
    slack: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + self.slack


def sobolev_check(f: GridFunction, edge_id: EdgeId, a: float) -> SobolevCheck:
    """Evaluate |h(0)|^2 <= (2/a)||h||^2 + a||h'||^2 on the initial piece (0, a)."""
    e = f.graph.edge(edge_id)
    if not (0 < a <= e.length + 1e-12):
        raise ValueError(f"window a={a} exceeds edge length {e.length}")
    a = min(a, e.length)
    y = np.asarray(f.values[edge_id])
    h = f.mesh(edge_id)
    dy = np.gradient(y, h, edge_order=2)
    i0 = _prefix_integral(np.abs(y) ** 2, h, a)
    i1 = _prefix_integral(np.abs(dy) ** 2, h, a)
    lhs = float(np.abs(y[0]) ** 2)
    rhs = (2.0 / a) * i0 + a * i1
    slack = 1e-12 + 10.0 * h * h * max(1.0, rhs)
    return SobolevCheck(lhs, rhs, slack)


# ---------------------------------------------------------------------------
# cutoff functions
# ---------------------------------------------------------------------------


def _smoothstep(s: np.ndarray) -> np.ndarray:
    # C^2 quintic ramp 0 -> 1 on [0, 1]
    s = np.clip(s, 0.0, 1.0)
    return 10.0 * s**3 - 15.0 * s**4 + 6.0 * s**5


def _smoothstep_d1(s: np.ndarray, w: float) -> np.ndarray:
    inside = (s > 0) & (s < 1)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, (30.0 * s**2 - 60.0 * s**3 + 30.0 * s**4) / w, 0.0)


def _smoothstep_d2(s: np.ndarray, w: float) -> np.ndarray:
    inside = (s > 0) & (s < 1)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, (60.0 * s - 180.0 * s**2 + 120.0 * s**3) / w**2, 0.0)


@dataclass(frozen=True)
class CutoffFunction:
    """Smooth indicator of a metric ball, constant near every vertex.

    Per edge the profile is either constant (0 or 1) or a quintic ramp over a
    window of width min(l(e), u) placed where the edge crosses the ball
    boundary.  ``windows[e]`` holds (t_lo, t_hi, ramp_up) transitions; the
    value is 1 on the side of a window facing the inside of the ball.
    """

    graph: MetricGraph
    center: Point
    radius: float
    levels: Mapping[EdgeId, float]
    windows: Mapping[EdgeId, tuple[tuple[float, float, bool], ...]]

    def value(self, edge_id: EdgeId, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        wins = self.windows.get(edge_id, ())
        if not wins:
            return np.full_like(t, self.levels[edge_id])
        # windows are disjoint and sorted; before the first one the level is
        # where its ramp starts, and a clipped ramp extends constantly past
        # its window, so painting left to right settles every region
        out = np.full_like(t, 0.0 if wins[0][2] else 1.0)
        for (lo, hi, up) in wins:
            s = np.clip((t - lo) / (hi - lo), 0.0, 1.0)
            ramp = _smoothstep(s) if up else 1.0 - _smoothstep(s)
            out = np.where(t >= lo, ramp, out)
        return out

    def derivative(self, edge_id: EdgeId, t: np.ndarray, order: int = 1) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for (lo, hi, up) in self.windows.get(edge_id, ()):
            w = hi - lo
            s = (t - lo) / w
            d = _smoothstep_d1(s, w) if order == 1 else _smoothstep_d2(s, w)
            out = out + (d if up else -d)
        return out

    def to_grid(self, h_max: float) -> GridFunction:
        return GridFunction.from_callable(
            self.graph, h_max, lambda eid, ts: self.value(eid, ts).astype(complex)
        )

    def derivative_bound(self) -> float:
        """Analytic sup of |psi|, |psi'|, |psi''| over the whole graph."""
        sup = 1.0
        for wins in self.windows.values():
            for (lo, hi, _) in wins:
                w = hi - lo
                sup = max(sup, 1.875 / w, (10.0 / math.sqrt(3.0)) / w**2)
        return sup


def cutoff(g: MetricGraph, x: Point, n: float) -> CutoffFunction:
    """Smooth cutoff for the ball B(x, n), built edge by edge.

    Edges with both ends inside the ball carry the constant 1, edges with
    both ends outside carry 0, and an edge crossing the boundary gets a ramp
    of width w = min(l(e), u) centered where the distance from ``x`` through
    the inside end reaches ``n`` (clipped into the edge).  That placement
    keeps psi = 1 on B(x, n - 2u) and supp psi' inside B(x, n + 2u) \\
    B(x, n - 2u), and the ramp obeys sup(|psi|, |psi'|, |psi''|) <=
    (1 + 4/u)^2.

    If ``x`` sits on an edge whose far ends are both outside the ball, the
    profile there is a plateau around ``x`` with a ramp on each side.
    """
    g.require_valid()
    dv = vertex_distances(g, x)
    levels: dict[EdgeId, float] = {}
    windows: dict[EdgeId, tuple[tuple[float, float, bool], ...]] = {}
    for e in g.edges:
        di = dv[e.init]
        dj = dv[e.end] if e.end is not None else math.inf
        inside_i, inside_j = di <= n, dj <= n
        on_edge = isinstance(x, EdgePoint) and x.edge == e.id
        w = min(e.length, g.u)
        if inside_i and inside_j:
            levels[e.id] = 1.0
        elif not inside_i and not inside_j:
            levels[e.id] = 0.0
            if on_edge and n > 0:
                # plateau around x with a ramp on each side
                lo_c = x.t - n
                hi_c = x.t + n
                lo = _clip_window(lo_c, w, e.length)
                hi = _clip_window(hi_c, w, e.length)
                if lo[1] <= hi[0]:
                    windows[e.id] = ((lo[0], lo[1], True), (hi[0], hi[1], False))
                    levels[e.id] = 0.0
        else:
            # one end inside: ramp down moving away from it
            if inside_i:
                crossing = n - di
                if on_edge:
                    crossing = max(crossing, x.t + n)
                lo, hi = _clip_window(crossing, w, e.length)
                levels[e.id] = 0.0
                windows[e.id] = ((lo, hi, False),)
            else:
                crossing_from_j = n - dj
                if on_edge:
                    crossing_from_j = max(crossing_from_j, (e.length - x.t) + n)
                crossing = e.length - crossing_from_j
                lo, hi = _clip_window(crossing, w, e.length)
                levels[e.id] = 0.0
                windows[e.id] = ((lo, hi, True),)
    return CutoffFunction(g, x, n, levels, windows)


def _clip_window(center: float, w: float, length: float) -> tuple[float, float]:
    lo = min(max(center - w / 2.0, 0.0), length - w)
    return lo, lo + w


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------


def save_function_csv(f: GridFunction, path: str | Path) -> None:
    """Rows (edge_id, t, re, im), nodes in grid order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["edge_id", "t", "re", "im"])
        for e in f.graph.edges:
            ts = f.nodes(e.id)
            y = np.asarray(f.values[e.id])
            for t, val in zip(ts, y):
                writer.writerow([e.id, repr(float(t)), repr(float(val.real)), repr(float(val.imag))])


def load_function_csv(path: str | Path, g: MetricGraph, h_max: float) -> GridFunction:
    """Read the CSV format written by :func:`save_function_csv`.

    Node coordinates must match the grid implied by ``h_max`` to 1e-9.
    """
    rows: dict[str, list[tuple[float, complex]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["edge_id", "t", "re", "im"]:
            raise ValueError("function CSV must start with header edge_id,t,re,im")
        for rec in reader:
            rows.setdefault(rec[0], []).append((float(rec[1]), complex(float(rec[2]), float(rec[3]))))
    vals = {}
    for e in g.edges:
        got = rows.get(str(e.id))
        if got is None:
            raise ValueError(f"CSV has no rows for edge {e.id!r}")
        got.sort(key=lambda p: p[0])
        ts = edge_grid(g, e.id, h_max)
        if len(got) != ts.size or max(abs(t - s) for (t, _), s in zip(got, ts)) > 1e-9:
            raise ValueError(f"CSV nodes on edge {e.id!r} do not match the mesh h_max={h_max}")
        vals[e.id] = np.array([v for _, v in got], dtype=complex)
    return GridFunction(g, h_max, vals)
