"""Linear networks (metric trees) and exact geometry on them.

A linear network is a finite collection of straight segments ("edges")
glued at shared vertices, equipped with the shortest-path metric along the
segments. This package restricts attention to networks without cycles
(trees): several results used elsewhere (validity of exponential
correlation, uniqueness of paths, exact sphere counts by traversal) hold
only in that case, so cycles are rejected at construction time.

Points live *on* the network: a :class:`NetworkPoint` is an edge id plus an
offset (in micrometres) from the edge's start vertex. Points at a vertex
admit one representation per incident edge; construction canonicalises
them to the incident edge with the lowest id so that equality, hashing and
deduplication behave predictably.

All lengths and offsets are micrometres throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ValidationError

__all__ = [
    "Vertex",
    "Edge",
    "NetworkPoint",
    "LinearNetwork",
    "PointPattern",
    "SubNetwork",
    "shortest_path_distance",
    "pairwise_distances",
    "distance_matrix",
    "leaf_distances",
    "simplify_tree",
    "erode",
    "lattice",
    "sphere_count",
]

BRANCH_LABELS = ("main", "side")


@dataclass(frozen=True)
class Vertex:
    """Network vertex. Planar coordinates are optional metadata."""

    id: int | str
    x: float | None = None
    y: float | None = None


@dataclass(frozen=True)
class Edge:
    """Straight segment between two vertices.

    Offsets of points on the edge are measured from ``start``. ``branch``
    labels the edge as part of the main structure or a side structure;
    intensities are modelled per branch type.
    """

    id: int | str
    start: int | str
    end: int | str
    length: float
    branch: str = "main"


@dataclass(frozen=True)
class NetworkPoint:
    """A location on a network: an edge id and an offset from its start.

    Instances produced by :meth:`LinearNetwork.point`,
    :class:`PointPattern`, or any function in this package are canonical:
    a point sitting exactly on a vertex is expressed on the lowest-id
    incident edge. Two canonical points are equal iff they are the same
    location.
    """

    edge_id: int | str
    offset: float


class LinearNetwork:
    """A tree-shaped linear network with precomputed exact geometry.

    Parameters
    ----------
    vertices : iterable of Vertex
    edges : iterable of Edge

    Raises
    ------
    ValidationError
        If ids collide, an edge references a missing vertex, a length is
        not positive and finite, a branch label is unknown, or the network
        is disconnected or contains a cycle.
    """

    def __init__(self, vertices: Iterable[Vertex], edges: Iterable[Edge]):
        self.vertices: list[Vertex] = list(vertices)
        self.edges: list[Edge] = list(edges)
        if not self.edges:
            raise ValidationError("network must have at least one edge")

        self._vertex_index: dict = {}
        for i, v in enumerate(self.vertices):
            if v.id in self._vertex_index:
                raise ValidationError(f"duplicate vertex id {v.id!r}")
            self._vertex_index[v.id] = i
        self._edge_index: dict = {}
        for i, e in enumerate(self.edges):
            if e.id in self._edge_index:
                raise ValidationError(f"duplicate edge id {e.id!r}")
            self._edge_index[e.id] = i

        nv, ne = len(self.vertices), len(self.edges)
        start = np.empty(ne, dtype=np.intp)
        end = np.empty(ne, dtype=np.intp)
        length = np.empty(ne, dtype=np.float64)
        side = np.empty(ne, dtype=bool)
        for i, e in enumerate(self.edges):
            if e.start not in self._vertex_index:
                raise ValidationError(f"edge {e.id!r} references unknown vertex {e.start!r}")
            if e.end not in self._vertex_index:
                raise ValidationError(f"edge {e.id!r} references unknown vertex {e.end!r}")
            if e.start == e.end:
                raise ValidationError(f"edge {e.id!r} is a self-loop (cycle)")
            if not (isinstance(e.length, (int, float)) and math.isfinite(e.length) and e.length > 0):
                raise ValidationError(f"edge {e.id!r} has nonpositive or nonfinite length {e.length!r}")
            if e.branch not in BRANCH_LABELS:
                raise ValidationError(f"edge {e.id!r} has unknown branch label {e.branch!r}")
            start[i] = self._vertex_index[e.start]
            end[i] = self._vertex_index[e.end]
            length[i] = float(e.length)
            side[i] = e.branch == "side"
        self.edge_start = start
        self.edge_end = end
        self.edge_length = length
        self.edge_side = side

        # Connectivity / acyclicity. A connected graph on nv vertices with
        # ne undirected edges is a tree iff ne == nv - 1.
        adj = sparse.coo_matrix(
            (length, (start, end)), shape=(nv, nv)
        ).tocsr()
        n_comp, _ = csgraph.connected_components(adj, directed=False)
        if n_comp > 1:
            raise ValidationError(f"network is disconnected ({n_comp} components)")
        if ne != nv - 1:
            raise ValidationError("network contains a cycle; only trees are supported")

        self.vertex_distance_matrix = csgraph.shortest_path(adj, directed=False)

        self.degrees = np.zeros(nv, dtype=np.int64)
        np.add.at(self.degrees, start, 1)
        np.add.at(self.degrees, end, 1)
        self.leaf_vertices = np.nonzero(self.degrees == 1)[0]
        # Distance from each vertex to the nearest degree-1 vertex.
        self.vertex_leaf_distance = self.vertex_distance_matrix[:, self.leaf_vertices].min(axis=1)

        self._incident: list[list[int]] = [[] for _ in range(nv)]
        for i in range(ne):
            self._incident[start[i]].append(i)
            self._incident[end[i]].append(i)

        # Canonical on-edge representation of each vertex: the incident
        # edge with the lowest id, and the offset of the vertex on it.
        canon_edge = np.empty(nv, dtype=np.intp)
        canon_off = np.empty(nv, dtype=np.float64)
        for w in range(nv):
            try:
                ei = min(self._incident[w], key=lambda i: self.edges[i].id)
            except TypeError as exc:
                raise ValidationError("edge ids must be mutually orderable") from exc
            canon_edge[w] = ei
            canon_off[w] = 0.0 if start[ei] == w else length[ei]
        self._vertex_canon_edge = canon_edge
        self._vertex_canon_offset = canon_off

        self.total_length = float(length.sum())
        self.side_length = float(length[side].sum())
        self.main_length = self.total_length - self.side_length

    # -- basic queries ---------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_index(self, edge_id) -> int:
        try:
            return self._edge_index[edge_id]
        except KeyError:
            raise ValidationError(f"unknown edge id {edge_id!r}") from None

    def vertex_index(self, vertex_id) -> int:
        try:
            return self._vertex_index[vertex_id]
        except KeyError:
            raise ValidationError(f"unknown vertex id {vertex_id!r}") from None

    def incident_edges(self, vertex_id) -> list[Edge]:
        return [self.edges[i] for i in self._incident[self.vertex_index(vertex_id)]]

    def branch_length(self, branch: str) -> float:
        if branch == "main":
            return self.main_length
        if branch == "side":
            return self.side_length
        raise ValidationError(f"unknown branch label {branch!r}")

    def __repr__(self) -> str:
        return (
            f"LinearNetwork({self.n_vertices} vertices, {self.n_edges} edges, "
            f"|L|={self.total_length:.6g})"
        )

    # -- points ----------------------------------------------------------

    def point(self, edge_id, offset: float) -> NetworkPoint:
        """Construct the canonical :class:`NetworkPoint` at the location.

        Raises :class:`ValidationError` if the edge is unknown or the
        offset lies outside ``[0, length]``.
        """
        ei = self.edge_index(edge_id)
        off = float(offset)
        ln = self.edge_length[ei]
        if not (0.0 <= off <= ln):
            raise ValidationError(
                f"offset {off!r} outside [0, {ln!r}] on edge {edge_id!r}"
            )
        ei, off = self._canonicalize_scalar(ei, off)
        return NetworkPoint(self.edges[ei].id, off)

    def _canonicalize_scalar(self, ei: int, off: float) -> tuple[int, float]:
        if off == 0.0:
            w = self.edge_start[ei]
        elif off == self.edge_length[ei]:
            w = self.edge_end[ei]
        else:
            return ei, off
        return int(self._vertex_canon_edge[w]), float(self._vertex_canon_offset[w])

    def _canonicalize_arrays(
        self, eidx: np.ndarray, off: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        eidx = np.asarray(eidx, dtype=np.intp).copy()
        off = np.asarray(off, dtype=np.float64).copy()
        if eidx.size == 0:
            return eidx, off
        lo = off < 0.0
        hi = off > self.edge_length[eidx]
        if lo.any() or hi.any():
            raise ValidationError("point offset outside its edge")
        at_start = off == 0.0
        at_end = off == self.edge_length[eidx]
        vtx = np.where(at_start, self.edge_start[eidx], np.where(at_end, self.edge_end[eidx], -1))
        hit = vtx >= 0
        if hit.any():
            eidx[hit] = self._vertex_canon_edge[vtx[hit]]
            off[hit] = self._vertex_canon_offset[vtx[hit]]
        return eidx, off

    def distance(self, p: NetworkPoint, q: NetworkPoint) -> float:
        return shortest_path_distance(self, p, q)


class PointPattern:
    """A finite ordered collection of points on one network.

    Accepts :class:`NetworkPoint` instances or ``(edge_id, offset)`` pairs;
    all points are canonicalised. The pattern keeps vectorised arrays
    (``edge_indices``, ``offsets``) used by the estimators.
    """

    def __init__(self, network: LinearNetwork, points: Iterable = ()):
        pts = list(points)
        self.network = network
        eidx = np.empty(len(pts), dtype=np.intp)
        off = np.empty(len(pts), dtype=np.float64)
        for i, p in enumerate(pts):
            if isinstance(p, NetworkPoint):
                eid, o = p.edge_id, p.offset
            else:
                eid, o = p
            eidx[i] = network.edge_index(eid)
            off[i] = float(o)
        if len(pts) and not ((off >= 0.0) & (off <= network.edge_length[eidx])).all():
            raise ValidationError("point offset outside its edge")
        self.edge_indices, self.offsets = network._canonicalize_arrays(eidx, off)

    @classmethod
    def from_indices(
        cls,
        network: LinearNetwork,
        edge_indices: np.ndarray,
        offsets: np.ndarray,
    ) -> "PointPattern":
        """Fast construction from raw index/offset arrays (canonicalised)."""
        pat = cls.__new__(cls)
        pat.network = network
        pat.edge_indices, pat.offsets = network._canonicalize_arrays(
            np.asarray(edge_indices), np.asarray(offsets)
        )
        return pat

    @property
    def n(self) -> int:
        return int(self.edge_indices.size)

    @property
    def points(self) -> list[NetworkPoint]:
        ids = [self.network.edges[i].id for i in self.edge_indices]
        return [NetworkPoint(e, float(o)) for e, o in zip(ids, self.offsets)]

    def branch_counts(self) -> tuple[int, int]:
        """Number of points on (main, side) edges."""
        on_side = self.network.edge_side[self.edge_indices]
        return int((~on_side).sum()), int(on_side.sum())

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i) -> NetworkPoint:
        e = self.network.edges[self.edge_indices[i]].id
        return NetworkPoint(e, float(self.offsets[i]))

    def __repr__(self) -> str:
        return f"PointPattern({self.n} points on {self.network!r})"


@dataclass(frozen=True)
class SubNetwork:
    """A measurable subset of a network: per-edge closed intervals.

    ``edge_indices``, ``lows``, ``highs`` are parallel arrays; each row
    describes the retained interval ``[low, high]`` on that edge. Produced
    by :func:`erode`.
    """

    network: LinearNetwork
    edge_indices: np.ndarray
    lows: np.ndarray
    highs: np.ndarray

    @property
    def measure(self) -> float:
        return float((self.highs - self.lows).sum())


# -- distances -----------------------------------------------------------


def _point_arrays(net: LinearNetwork, pts) -> tuple[np.ndarray, np.ndarray]:
    """Coerce a pattern / point sequence / (eidx, off) pair to arrays."""
    if isinstance(pts, PointPattern):
        if pts.network is not net:
            raise ValidationError("pattern belongs to a different network")
        return pts.edge_indices, pts.offsets
    if (
        isinstance(pts, tuple)
        and len(pts) == 2
        and isinstance(pts[0], np.ndarray)
        and isinstance(pts[1], np.ndarray)
    ):
        return pts
    if isinstance(pts, NetworkPoint):
        pts = [pts]
    pat = PointPattern(net, pts)
    return pat.edge_indices, pat.offsets


def _pairwise_core(net, e1, o1, e2, o2) -> np.ndarray:
    D = net.vertex_distance_matrix
    s1, t1 = net.edge_start[e1], net.edge_end[e1]
    s2, t2 = net.edge_start[e2], net.edge_end[e2]
    a1, b1 = o1, net.edge_length[e1] - o1
    a2, b2 = o2, net.edge_length[e2] - o2
    out = a1[:, None] + a2[None, :] + D[np.ix_(s1, s2)]
    np.minimum(out, a1[:, None] + b2[None, :] + D[np.ix_(s1, t2)], out=out)
    np.minimum(out, b1[:, None] + a2[None, :] + D[np.ix_(t1, s2)], out=out)
    np.minimum(out, b1[:, None] + b2[None, :] + D[np.ix_(t1, t2)], out=out)
    same = e1[:, None] == e2[None, :]
    if same.any():
        # Within one edge of a tree the direct route is shortest.
        direct = np.abs(o1[:, None] - o2[None, :])
        out = np.where(same, direct, out)
    return out


def pairwise_distances(net: LinearNetwork, pts_a, pts_b=None) -> np.ndarray:
    """Matrix of shortest-path distances between two point collections.

    Distances combine each point's offsets to its edge endpoints with the
    precomputed vertex-to-vertex distances; points sharing an edge use the
    direct along-edge distance. Rows are chunked to bound memory.
    """
    e1, o1 = _point_arrays(net, pts_a)
    e2, o2 = _point_arrays(net, pts_b) if pts_b is not None else (e1, o1)
    n, m = e1.size, e2.size
    out = np.empty((n, m), dtype=np.float64)
    if n == 0 or m == 0:
        return out
    chunk = max(1, int(4_000_000 // m))
    for i0 in range(0, n, chunk):
        sl = slice(i0, min(i0 + chunk, n))
        out[sl] = _pairwise_core(net, e1[sl], o1[sl], e2, o2)
    return out


def shortest_path_distance(net: LinearNetwork, p: NetworkPoint, q: NetworkPoint) -> float:
    """Shortest-path distance between two points along the network."""
    return float(pairwise_distances(net, [p], [q])[0, 0])


def distance_matrix(pattern: PointPattern) -> np.ndarray:
    """All pairwise distances within a pattern (zero diagonal)."""
    return pairwise_distances(pattern.network, pattern)


def leaf_distances(net: LinearNetwork, pts) -> np.ndarray:
    """Distance from each point to the nearest degree-1 vertex."""
    e, o = _point_arrays(net, pts)
    ld = net.vertex_leaf_distance
    return np.minimum(
        o + ld[net.edge_start[e]],
        net.edge_length[e] - o + ld[net.edge_end[e]],
    )


# -- structure operations -------------------------------------------------


def simplify_tree(net: LinearNetwork) -> LinearNetwork:
    """Collapse chains through degree-2 vertices into single edges.

    Vertices of degree 2 whose two incident edges carry *different* branch
    labels are boundary vertices and are kept, so every collapsed chain has
    one label. Each new edge takes the lowest id among the edges it
    replaces; shortest-path distances between surviving vertices are
    unchanged.
    """
    keep = np.zeros(net.n_vertices, dtype=bool)
    for w in range(net.n_vertices):
        inc = net._incident[w]
        if len(inc) != 2:
            keep[w] = True
        elif net.edge_side[inc[0]] != net.edge_side[inc[1]]:
            keep[w] = True

    visited = np.zeros(net.n_edges, dtype=bool)
    new_edges: list[Edge] = []
    for w in np.nonzero(keep)[0]:
        for ei in net._incident[w]:
            if visited[ei]:
                continue
            chain = [ei]
            visited[ei] = True
            cur = int(net.edge_end[ei]) if net.edge_start[ei] == w else int(net.edge_start[ei])
            prev_edge = ei
            while not keep[cur]:
                nxt = [j for j in net._incident[cur] if j != prev_edge][0]
                chain.append(nxt)
                visited[nxt] = True
                cur = int(net.edge_end[nxt]) if net.edge_start[nxt] == cur else int(net.edge_start[nxt])
                prev_edge = nxt
            new_edges.append(
                Edge(
                    id=min(net.edges[j].id for j in chain),
                    start=net.vertices[w].id,
                    end=net.vertices[cur].id,
                    length=float(sum(net.edge_length[j] for j in chain)),
                    branch=net.edges[chain[0]].branch,
                )
            )
    new_vertices = [net.vertices[w] for w in np.nonzero(keep)[0]]
    return LinearNetwork(new_vertices, new_edges)


def erode(net: LinearNetwork, r: float) -> SubNetwork:
    """The subset of the network farther than ``r`` from every leaf.

    Membership is strict (``distance > r``); the returned intervals are
    the closures, which have the same measure. Every exclusion reaches in
    from an edge endpoint, so each edge retains at most one interval.
    """
    if r < 0:
        raise ValidationError(f"erosion radius must be nonnegative, got {r}")
    ld = net.vertex_leaf_distance
    lo = np.maximum(0.0, r - ld[net.edge_start])
    hi = net.edge_length - np.maximum(0.0, r - ld[net.edge_end])
    keep = hi - lo > 0.0
    idx = np.nonzero(keep)[0]
    return SubNetwork(net, idx, lo[idx], hi[idx])


def lattice(net: LinearNetwork, spacing: float) -> list[NetworkPoint]:
    """Equidistant points covering every edge, endpoints included.

    Each edge of length ``l`` carries ``ceil(l / spacing) + 1`` points
    (before deduplication), so gaps never exceed ``spacing``. Shared
    vertices appear once, in canonical form. Order: edges in input order,
    offsets increasing.
    """
    if not spacing > 0:
        raise ValidationError(f"lattice spacing must be positive, got {spacing}")
    pts: list[NetworkPoint] = []
    seen: set[tuple[int, float]] = set()
    for ei in range(net.n_edges):
        ln = net.edge_length[ei]
        nseg = max(1, math.ceil(ln / spacing))
        for j in range(nseg + 1):
            ci, co = net._canonicalize_scalar(ei, ln * (j / nseg))
            if (ci, co) not in seen:
                seen.add((ci, co))
                pts.append(NetworkPoint(net.edges[ci].id, co))
    return pts


# -- sphere counts ---------------------------------------------------------


def _sphere_count_matrix(
    net: LinearNetwork,
    e_src: np.ndarray,
    o_src: np.ndarray,
    radii: np.ndarray,
    chunk: int = 16,
) -> np.ndarray:
    """Exact sphere counts ``m(u_i, radii[i, j])`` for sources ``u_i``.

    ``radii`` has one row per source. For each edge the distance to a
    point at offset ``x`` is the lower envelope of the two routes through
    the edge endpoints; a radius ``t`` crosses that envelope at most twice
    (once if the crossings coincide at the apex). Crossings strictly
    inside edges are counted per edge; vertices at distance exactly ``t``
    are counted once each. The source's own edge is handled specially
    because the envelope formula does not apply there.
    """
    D = net.vertex_distance_matrix
    ES, ET, EL = net.edge_start, net.edge_end, net.edge_length
    n = e_src.size
    # Distance from each source to every vertex.
    dv = np.minimum(
        o_src[:, None] + D[ES[e_src]],
        (EL[e_src] - o_src)[:, None] + D[ET[e_src]],
    )
    out = np.empty(radii.shape, dtype=np.int64)
    for i0 in range(0, n, chunk):
        sl = slice(i0, min(i0 + chunk, n))
        dva = dv[sl][:, ES][:, :, None]          # (c, E, 1)
        dvb = dv[sl][:, ET][:, :, None]
        el = EL[None, :, None]
        tmeet = 0.5 * (dva + dvb + el)
        t = radii[sl][:, None, :]                # (c, 1, m)
        via_a = (dva < t) & (t <= tmeet) & (t - dva < el)
        via_b = (dvb < t) & (t <= tmeet) & (t - dvb < el)
        coincide = via_a & via_b & (t == tmeet)
        cnt = (
            via_a.sum(axis=1, dtype=np.int64)
            + via_b.sum(axis=1, dtype=np.int64)
            - coincide.sum(axis=1, dtype=np.int64)
        )
        cnt += (dv[sl][:, :, None] == radii[sl][:, None, :]).sum(axis=1, dtype=np.int64)

        # Replace the generic count on the source's own edge (the envelope
        # formula assumes the source is off-edge) by the true one.
        off = o_src[sl]
        elo = EL[e_src[sl]]
        inner = (off > 0.0) & (off < elo)
        if inner.any():
            idx = np.nonzero(inner)[0]
            ts = radii[sl][idx]
            o = off[idx][:, None]
            ln = elo[idx][:, None]
            g_a = (o < ts) & (ts <= ln) & (ts - o < ln)
            g_b = (ln - o < ts) & (ts <= ln) & (ts - (ln - o) < ln)
            g_both = g_a & g_b & (ts == ln)
            generic = (
                g_a.astype(np.int64) + g_b.astype(np.int64) - g_both.astype(np.int64)
            )
            true_own = np.where(
                ts > 0.0,
                (ts < o).astype(np.int64) + (ts < ln - o).astype(np.int64),
                np.int64(1),
            )
            cnt[idx] += true_own - generic
        out[sl] = cnt
    return out


def sphere_count(net: LinearNetwork, point: NetworkPoint, t) -> int | np.ndarray:
    """Number of network locations at distance exactly ``t`` from ``point``.

    ``t`` may be a scalar or an array; counts are exact (computed by edge
    traversal, not sampling). A leaf vertex hit exactly at distance ``t``
    counts once.
    """
    e, o = _point_arrays(net, point)
    tt = np.asarray(t, dtype=np.float64)
    m = _sphere_count_matrix(net, e, o, tt.reshape(1, -1))[0]
    if np.isscalar(t) or getattr(t, "ndim", 0) == 0:
        return int(m[0])
    return m.reshape(tt.shape)
