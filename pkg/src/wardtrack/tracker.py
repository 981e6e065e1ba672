"""Global data association by min-cost flow.

Detections become nodes of a time-ordered DAG.  A trajectory is a path
``source -> d1 -> ... -> dn -> sink`` whose cost is

    entry + sum(alpha_i) + sum(beta_ij) + exit

and the tracker returns the set of node-disjoint paths with minimum total
cost.  It is found by successive shortest paths on the residual graph with
each detection split into an in/out pair of unit capacity, stopping as soon
as the next augmenting path would not lower the cost.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import StructureError

SOURCE = -1
SINK = -2


@dataclass(frozen=True)
class TrackingParams:
    v_max: float = 2.0
    max_gap: float = 2.0
    alpha: float = -1.0
    entry_cost: float = 2.0
    exit_cost: float = 2.0
    blind_gap: float = 5.0
    # Detections sit on cell centers.  A true step of v_max*dt can show up
    # as up to one cell diagonal longer, and the difference of two quantized
    # positions has a spread of about cell_size/sqrt(6) per axis.
    gate_slack: float = 0.36
    position_sigma: float = 0.1

    def reach(self, dt: float) -> float:
        return self.v_max * dt + self.gate_slack


@dataclass(frozen=True)
class DetectionNode:
    id: int
    t: float
    x: float
    y: float
    alpha: float = -1.0


@dataclass
class FlowGraph:
    """Detections plus admissible links ``(from_id, to_id, beta)``.

    Node ids index ``nodes``.  Every node is implicitly joined to the
    source with ``entry_cost`` and to the sink with ``exit_cost``.
    """

    nodes: list[DetectionNode]
    edges: list[tuple[int, int, float]] = field(default_factory=list)
    entry_cost: float = 2.0
    exit_cost: float = 2.0

    def topological_order(self) -> list[int]:
        n = len(self.nodes)
        indeg = [0] * n
        succ: list[list[int]] = [[] for _ in range(n)]
        for a, b, _ in self.edges:
            if not (0 <= a < n and 0 <= b < n):
                raise StructureError(f"edge ({a}, {b}) references a missing node")
            succ[a].append(b)
            indeg[b] += 1
        ready = [i for i in range(n) if indeg[i] == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            i = heapq.heappop(ready)
            order.append(i)
            for j in succ[i]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    heapq.heappush(ready, j)
        if len(order) != n:
            raise StructureError("flow graph contains a cycle")
        return order


@dataclass
class Trajectory:
    id: int
    points: np.ndarray  # (n, 3) rows of (t, x, y)
    nodes: tuple[int, ...] = ()
    labels: list[str] | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    def __len__(self):
        return len(self.points)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


@dataclass(frozen=True)
class FlowSolution:
    trajectories: list[Trajectory]
    total_cost: float
    path_costs: tuple[float, ...]
    marginal_costs: tuple[float, ...]


def transition_cost(dist: float, dt: float, v_max: float, slack: float = 0.0, position_sigma: float = 0.0) -> float:
    """Negative log density of a displacement ``dist`` over ``dt`` seconds.

    Isotropic 2D Gaussian with sigma = v_max*dt/2 (plus ``position_sigma``
    in quadrature), truncated and renormalized at radius v_max*dt + slack.
    """
    sigma = math.hypot(0.5 * v_max * dt, position_sigma)
    reach = v_max * dt + slack
    norm = 2 * math.pi * sigma**2 * (1 - math.exp(-(reach**2) / (2 * sigma**2)))
    return dist**2 / (2 * sigma**2) + math.log(norm)


def build_graph(detections: Iterable, params: TrackingParams = TrackingParams()) -> FlowGraph:
    """Link every pair of detections that passes the time and speed gate.

    ``detections`` is a sequence of ``DetectionSet`` (or any objects with
    ``timestamp`` and ``points()``).  Nodes are numbered in (t, x, y) order
    so the graph does not depend on the order detections arrive in.
    """
    raw = []
    for ds in detections:
        for x, y in ds.points():
            raw.append((float(ds.timestamp), float(x), float(y)))
    raw.sort()
    nodes = [DetectionNode(k, t, x, y, params.alpha) for k, (t, x, y) in enumerate(raw)]
    times = [n.t for n in nodes]
    xy = np.array([(n.x, n.y) for n in nodes], dtype=float).reshape(-1, 2)
    edges = []
    for a, na in enumerate(nodes):
        lo = bisect_right(times, na.t)
        hi = bisect_right(times, na.t + params.max_gap + 1e-9)
        if lo >= hi:
            continue
        dt = np.array(times[lo:hi]) - na.t
        dist = np.hypot(*(xy[lo:hi] - xy[a]).T)
        ok = (dt > 0) & (dist <= params.reach(dt) + 1e-9)
        for off in np.flatnonzero(ok):
            beta = transition_cost(float(dist[off]), float(dt[off]), params.v_max, params.gate_slack, params.position_sigma)
            edges.append((a, lo + int(off), beta))
    return FlowGraph(nodes, edges, params.entry_cost, params.exit_cost)


# -- solver ------------------------------------------------------------------


class _Residual:
    """Unit-capacity residual network over split detection nodes."""

    def __init__(self, n_vertices: int):
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(n_vertices)]

    def add(self, u: int, v: int, cost: float) -> None:
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(1)
        self.cost.append(cost)
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0)
        self.cost.append(-cost)


def _shortest_path(net: _Residual, pot: list[float], s: int) -> tuple[list[float], list[int]]:
    inf = math.inf
    n = len(net.adj)
    dist = [inf] * n
    via = [-1] * n
    dist[s] = 0.0
    heap = [(0.0, s)]
    done = [False] * n
    to, cap, cost, adj = net.to, net.cap, net.cost, net.adj
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        pu = pot[u]
        for e in adj[u]:
            if cap[e] <= 0:
                continue
            v = to[e]
            if done[v]:
                continue
            rc = cost[e] + pu - pot[v]
            if rc < 0:
                rc = 0.0  # rounding only; true reduced costs are >= 0
            nd = d + rc
            if nd < dist[v]:
                dist[v] = nd
                via[v] = e
                heapq.heappush(heap, (nd, v))
    return dist, via


def solve_flow(g: FlowGraph) -> FlowSolution:
    """Minimum-cost set of node-disjoint trajectories through ``g``."""
    order = g.topological_order()
    n = len(g.nodes)
    if n == 0:
        return FlowSolution([], 0.0, (), ())
    S, T = 0, 1

    def vin(i):
        return 2 + 2 * i

    def vout(i):
        return 3 + 2 * i

    net = _Residual(2 + 2 * n)
    for i in range(n):
        net.add(S, vin(i), g.entry_cost)
    for i, node in enumerate(g.nodes):
        net.add(vin(i), vout(i), node.alpha)
    for a, b, beta in g.edges:
        net.add(vout(a), vin(b), beta)
    for i in range(n):
        net.add(vout(i), T, g.exit_cost)

    # initial potentials: exact DAG shortest distances from the source
    pot = [math.inf] * (2 + 2 * n)
    pot[S] = 0.0
    succ: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for a, b, beta in g.edges:
        succ[a].append((b, beta))
    for i in order:
        pot[vin(i)] = min(pot[vin(i)], g.entry_cost)
        pot[vout(i)] = pot[vin(i)] + g.nodes[i].alpha
        for j, beta in succ[i]:
            pot[vin(j)] = min(pot[vin(j)], pot[vout(i)] + beta)
    pot[T] = min(pot[vout(i)] + g.exit_cost for i in range(n))

    marginals = []
    while True:
        dist, via = _shortest_path(net, pot, S)
        if math.isinf(dist[T]):
            break
        path_cost = dist[T] + pot[T] - pot[S]
        if path_cost >= 0:
            break
        marginals.append(path_cost)
        v = T
        while v != S:
            e = via[v]
            net.cap[e] -= 1
            net.cap[e ^ 1] += 1
            v = net.to[e ^ 1]
        for u in range(len(pot)):
            if not math.isinf(dist[u]):
                pot[u] += dist[u]

    # decompose the flow: forward arcs with cap 0 carry one unit
    nxt = {}
    for e in range(0, len(net.to), 2):
        if net.cap[e] == 0:
            u = net.to[e ^ 1]
            nxt.setdefault(u, []).append(net.to[e])
    paths = []
    for v0 in sorted(nxt.get(S, [])):
        path = []
        v = v0
        while v != T:
            i = (v - 2) // 2
            path.append(i)
            out = nxt[vout(i)]
            v = out[0]
        paths.append(path)

    edge_cost = {(a, b): beta for a, b, beta in g.edges}
    path_costs = [path_cost_of(g, p, edge_cost) for p in paths]
    order_idx = sorted(range(len(paths)), key=lambda k: _node_key(g, paths[k][0]) + (paths[k],))
    trajectories = []
    for tid, k in enumerate(order_idx):
        p = paths[k]
        pts = [(g.nodes[i].t, g.nodes[i].x, g.nodes[i].y) for i in p]
        trajectories.append(Trajectory(tid, np.array(pts), tuple(p)))
    costs = tuple(path_costs[k] for k in order_idx)
    return FlowSolution(trajectories, float(sum(costs)), costs, tuple(marginals))


def _node_key(g: FlowGraph, i: int) -> tuple:
    nd = g.nodes[i]
    return (nd.t, nd.x, nd.y)


def path_cost_of(g: FlowGraph, path: Sequence[int], edge_cost: dict | None = None) -> float:
    """Cost of one source-to-sink path through the listed node ids."""
    if edge_cost is None:
        edge_cost = {(a, b): beta for a, b, beta in g.edges}
    c = g.entry_cost
    for k, i in enumerate(path):
        c += g.nodes[i].alpha
        if k + 1 < len(path):
            c += edge_cost[(i, path[k + 1])]
    return c + g.exit_cost


def track(detections: Iterable, params: TrackingParams = TrackingParams()) -> list[Trajectory]:
    """Build the graph, solve it and stitch fragments across blind spots."""
    sol = solve_flow(build_graph(detections, params))
    return stitch_across_sensors(sol.trajectories, params)


def stitch_across_sensors(tracks: Sequence[Trajectory], params: TrackingParams = TrackingParams()) -> list[Trajectory]:
    """Join fragments separated by an unobserved gap of at most ``blind_gap``.

    Candidate (end, start) pairs must pass the speed gate; they are accepted
    cheapest-first, each endpoint at most once.  A joined chain keeps the id
    of its first fragment.
    """
    tracks = list(tracks)
    cands = []
    for a, ta in enumerate(tracks):
        te, xe, ye = ta.end
        for b, tb in enumerate(tracks):
            if a == b:
                continue
            ts, xs, ys = tb.start
            dt = ts - te
            dist = math.hypot(xs - xe, ys - ye)
            if 0 < dt <= params.blind_gap + 1e-9 and dist <= params.reach(dt) + 1e-9:
                cands.append((transition_cost(dist, dt, params.v_max, params.gate_slack, params.position_sigma), ta.id, tb.id, a, b))
    cands.sort()
    nxt: dict[int, int] = {}
    has_prev: set[int] = set()
    for _, _, _, a, b in cands:
        if a in nxt or b in has_prev:
            continue
        nxt[a] = b
        has_prev.add(b)
    if not nxt:
        return tracks

    out = []
    for a, ta in enumerate(tracks):
        if a in has_prev:
            continue
        parts = [ta]
        while a in nxt:
            a = nxt[a]
            parts.append(tracks[a])
        out.append(
            Trajectory(
                parts[0].id,
                np.concatenate([p.points for p in parts]),
                tuple(i for p in parts for i in p.nodes),
            )
        )
    out.sort(key=lambda tr: (tuple(tr.start), tr.id))
    return out
