import numpy as np
import pytest
from scipy import sparse
from scipy.sparse import csgraph

from linnetcox import Edge, LinearNetwork, Vertex


@pytest.fixture
def path10():
    """Single segment of length 10."""
    return LinearNetwork([Vertex(0), Vertex(1)], [Edge(0, 0, 1, 10.0, "main")])


@pytest.fixture
def y_net():
    """Y-shaped tree: arms O-A of 3, O-B of 4, O-C of 5."""
    vertices = [Vertex("O"), Vertex("A"), Vertex("B"), Vertex("C")]
    edges = [
        Edge(0, "O", "A", 3.0, "main"),
        Edge(1, "O", "B", 4.0, "side"),
        Edge(2, "O", "C", 5.0, "side"),
    ]
    return LinearNetwork(vertices, edges)


def oracle_distances(net, points, to_vertices=False):
    """Shortest-path distances by explicit graph expansion.

    Each query point is inserted as a temporary node splitting its edge;
    distances then come from scipy's Dijkstra on the expanded graph,
    entirely independent of the package's own routing. With
    ``to_vertices`` the columns are the network vertices instead of the
    query points.
    """
    nv = len(net.vertices)
    per_edge = {i: [] for i in range(len(net.edges))}
    for idx, (ei, off) in enumerate(points):
        per_edge[int(ei)].append((float(off), nv + idx))
    rows, cols, data = [], [], []
    for ei in range(len(net.edges)):
        a = int(net.edge_start[ei])
        b = int(net.edge_end[ei])
        chain = [(0.0, a)] + sorted(per_edge[ei]) + [(float(net.edge_length[ei]), b)]
        for (o1, n1), (o2, n2) in zip(chain, chain[1:]):
            rows += [n1, n2]
            cols += [n2, n1]
            data += [o2 - o1, o2 - o1]
    n = nv + len(points)
    graph = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    full = csgraph.dijkstra(graph, directed=False, indices=np.arange(nv, n))
    if to_vertices:
        return full[:, :nv]
    return full[:, nv:]


def random_points(net, n, rng):
    """Uniform random points as (edge_index, offset) arrays."""
    weights = net.edge_length / net.total_length
    eidx = rng.choice(len(net.edges), size=n, p=weights)
    off = rng.uniform(0.0, net.edge_length[eidx])
    return eidx.astype(np.intp), off
