import numpy as np
import pytest
from numpy.testing import assert_allclose

from linnetcox import (
    Edge,
    LinearNetwork,
    PointPattern,
    ValidationError,
    Vertex,
    erode,
    lattice,
    leaf_distances,
    make_network,
    pairwise_distances,
    shortest_path_distance,
    simplify_tree,
    sphere_count,
)
from linnetcox.network import distance_matrix

from conftest import oracle_distances, random_points


class TestValidation:
    def test_simple_path_measure(self):
        net = LinearNetwork(
            [Vertex(0), Vertex(1), Vertex(2)],
            [Edge(0, 0, 1, 3.0, "main"), Edge(1, 1, 2, 4.0, "main")],
        )
        assert net.total_length == 7.0
        assert net.main_length == 7.0 and net.side_length == 0.0

    def test_nonpositive_length_rejected(self):
        with pytest.raises(ValidationError, match="length"):
            LinearNetwork([Vertex(0), Vertex(1)], [Edge(0, 0, 1, 0.0, "main")])

    def test_disconnected_rejected(self):
        with pytest.raises(ValidationError, match="connect"):
            LinearNetwork(
                [Vertex(0), Vertex(1), Vertex(2), Vertex(3)],
                [Edge(0, 0, 1, 1.0, "main"), Edge(1, 2, 3, 1.0, "main")],
            )

    def test_cycle_rejected(self):
        with pytest.raises(ValidationError):
            LinearNetwork(
                [Vertex(0), Vertex(1), Vertex(2)],
                [
                    Edge(0, 0, 1, 1.0, "main"),
                    Edge(1, 1, 2, 1.0, "main"),
                    Edge(2, 2, 0, 1.0, "main"),
                ],
            )

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            LinearNetwork(
                [Vertex(0), Vertex(0)], [Edge(0, 0, 0, 1.0, "main")]
            )
        with pytest.raises(ValidationError, match="duplicate"):
            LinearNetwork(
                [Vertex(0), Vertex(1), Vertex(2)],
                [Edge(5, 0, 1, 1.0, "main"), Edge(5, 1, 2, 1.0, "main")],
            )

    def test_unknown_vertex_rejected(self):
        with pytest.raises(ValidationError):
            LinearNetwork([Vertex(0), Vertex(1)], [Edge(0, 0, 9, 1.0, "main")])

    def test_bad_branch_label_rejected(self):
        with pytest.raises(ValidationError, match="branch"):
            LinearNetwork([Vertex(0), Vertex(1)], [Edge(0, 0, 1, 1.0, "stem")])

    def test_branch_measures_add_up(self, y_net):
        assert y_net.total_length == y_net.main_length + y_net.side_length
        assert y_net.main_length == 3.0
        assert y_net.side_length == 9.0


class TestCanonicalization:
    def test_junction_point_uses_lowest_edge_id(self, y_net):
        # O sits at offset 0 of all three arms; edge 0 is the canonical home.
        for eid in (0, 1, 2):
            p = y_net.point(eid, 0.0)
            assert p.edge_id == 0 and p.offset == 0.0

    def test_leaf_end_is_not_moved(self, y_net):
        p = y_net.point(1, 4.0)
        assert p.edge_id == 1 and p.offset == 4.0

    def test_same_location_same_distance_zero(self, y_net):
        p = y_net.point(1, 0.0)
        q = y_net.point(2, 0.0)
        assert shortest_path_distance(y_net, p, q) == 0.0

    def test_offset_out_of_bounds(self, y_net):
        with pytest.raises(ValidationError):
            y_net.point(0, 3.5)
        with pytest.raises(ValidationError):
            y_net.point(0, -0.1)

    def test_unorderable_edge_ids_at_junction(self):
        with pytest.raises(ValidationError, match="orderable"):
            LinearNetwork(
                [Vertex(0), Vertex(1), Vertex(2)],
                [Edge(0, 0, 1, 1.0, "main"), Edge("a", 1, 2, 1.0, "main")],
            )


class TestDistances:
    def test_same_edge(self):
        net = LinearNetwork([Vertex(0), Vertex(1)], [Edge(0, 0, 1, 4.0, "main")])
        d = shortest_path_distance(net, net.point(0, 1.0), net.point(0, 2.5))
        assert d == 1.5

    def test_y_tree_through_junction(self, y_net):
        # offsets measure from O, so the path runs 2 down one arm and 1 up
        # the other
        d = shortest_path_distance(y_net, y_net.point(0, 2.0), y_net.point(1, 1.0))
        assert d == 3.0

    def test_matches_graph_expansion_oracle(self):
        for seed in (0, 1, 2):
            rng = np.random.default_rng(seed)
            net = make_network("random-tree", seed=seed, edges=20)
            eidx, off = random_points(net, 50, rng)
            got = pairwise_distances(net, (eidx, off))
            want = oracle_distances(net, list(zip(eidx, off)))
            assert_allclose(got, want, rtol=0, atol=1e-9)

    def test_metric_axioms(self):
        net = make_network("random-tree", seed=3, edges=30)
        rng = np.random.default_rng(3)
        eidx, off = random_points(net, 1000, rng)
        pts = PointPattern.from_indices(net, eidx, off)
        d = distance_matrix(pts)
        assert_allclose(d, d.T, rtol=0, atol=1e-9)
        assert_allclose(np.diag(d), 0.0, rtol=0, atol=1e-9)
        idx = rng.integers(0, pts.n, size=(1000, 3))
        lhs = d[idx[:, 0], idx[:, 2]]
        rhs = d[idx[:, 0], idx[:, 1]] + d[idx[:, 1], idx[:, 2]]
        assert (lhs <= rhs + 1e-9).all()

    def test_rectangular_and_chunked(self):
        net = make_network("random-tree", seed=4, edges=25)
        rng = np.random.default_rng(4)
        ea, oa = random_points(net, 7, rng)
        eb, ob = random_points(net, 11, rng)
        got = pairwise_distances(net, (ea, oa), (eb, ob))
        want = oracle_distances(net, list(zip(ea, oa)) + list(zip(eb, ob)))[:7, 7:]
        assert_allclose(got, want, rtol=0, atol=1e-9)

    def test_leaf_distances(self, y_net):
        pts = PointPattern(y_net, [(0, 2.0), (1, 1.0), (2, 5.0)])
        got = leaf_distances(y_net, pts)
        assert_allclose(got, [1.0, 3.0, 0.0])

    def test_leaf_distances_against_oracle(self):
        net = make_network("random-tree", seed=5, edges=40)
        rng = np.random.default_rng(5)
        eidx, off = random_points(net, 60, rng)
        pts = PointPattern.from_indices(net, eidx, off)
        to_v = oracle_distances(net, list(zip(pts.edge_indices, pts.offsets)), to_vertices=True)
        want = to_v[:, net.leaf_vertices].min(axis=1)
        assert_allclose(leaf_distances(net, pts), want, rtol=0, atol=1e-9)


class TestSimplify:
    def test_two_edge_chain_merges(self):
        net = LinearNetwork(
            [Vertex("A"), Vertex("B"), Vertex("C")],
            [Edge(0, "A", "B", 2.0, "main"), Edge(1, "B", "C", 3.0, "main")],
        )
        out = simplify_tree(net)
        assert len(out.edges) == 1
        assert out.edges[0].length == 5.0
        assert out.total_length == net.total_length

    def test_no_degree_two_identity(self, y_net):
        out = simplify_tree(y_net)
        assert len(out.edges) == len(y_net.edges)
        assert out.total_length == y_net.total_length
        assert sorted(e.length for e in out.edges) == [3.0, 4.0, 5.0]

    def test_distances_between_surviving_vertices_preserved(self):
        net = make_network("random-tree", seed=6, edges=60)
        out = simplify_tree(net)
        keep = [v.id for v in net.vertices if net.degrees[net.vertex_index(v.id)] != 2]
        for vid in keep:
            out.vertex_index(vid)  # must survive
        before = net.vertex_distance_matrix
        after = out.vertex_distance_matrix
        for a in keep:
            for b in keep:
                ia, ib = net.vertex_index(a), net.vertex_index(b)
                ja, jb = out.vertex_index(a), out.vertex_index(b)
                assert abs(before[ia, ib] - after[ja, jb]) < 1e-12

    def test_branch_boundary_survives(self):
        # main-main-side chain: the label change pins the middle vertex.
        net = LinearNetwork(
            [Vertex(i) for i in range(4)],
            [
                Edge(0, 0, 1, 1.0, "main"),
                Edge(1, 1, 2, 2.0, "main"),
                Edge(2, 2, 3, 4.0, "side"),
            ],
        )
        out = simplify_tree(net)
        assert len(out.edges) == 2
        assert out.main_length == 3.0 and out.side_length == 4.0


class TestErode:
    def test_path_interval(self, path10):
        sub = erode(path10, 2.0)
        assert sub.measure == 6.0
        assert len(sub.edge_indices) == 1
        assert_allclose([sub.lows[0], sub.highs[0]], [2.0, 8.0])

    def test_y_tree_one_unit_per_leaf(self, y_net):
        assert erode(y_net, 1.0).measure == 9.0

    def test_total_erosion(self, y_net):
        assert erode(y_net, 100.0).measure == 0.0

    def test_zero_radius_keeps_everything(self, y_net):
        assert erode(y_net, 0.0).measure == y_net.total_length

    def test_measure_nonincreasing(self):
        net = make_network("random-tree", seed=7, edges=30)
        radii = np.linspace(0.0, 20.0, 60)
        measures = [erode(net, float(r)).measure for r in radii]
        assert all(a >= b - 1e-12 for a, b in zip(measures, measures[1:]))

    def test_measure_matches_lattice_scan(self):
        # Fraction of a fine lattice deeper than r approximates the measure.
        net = make_network("random-tree", seed=8, edges=20)
        pts = lattice(net, 0.01)
        pat = PointPattern(net, pts)
        depth = leaf_distances(net, pat)
        for r in (0.5, 2.0, 5.0):
            approx = (depth > r).mean() * net.total_length
            assert abs(erode(net, r).measure - approx) < 0.15

    def test_negative_radius_rejected(self, y_net):
        with pytest.raises(ValidationError):
            erode(y_net, -1.0)


class TestLattice:
    def test_exact_division(self, path10):
        pts = lattice(path10, 5.0)
        assert_allclose(sorted(p.offset for p in pts), [0.0, 5.0, 10.0])

    def test_rounded_up_division(self, path10):
        pts = lattice(path10, 4.0)
        assert_allclose(sorted(p.offset for p in pts), [0.0, 10 / 3, 20 / 3, 10.0])

    def test_junction_deduplicated(self, y_net):
        pts = lattice(y_net, 1.0)
        at_zero = [p for p in pts if p.offset == 0.0 and p.edge_id == 0]
        # all three arms contribute offset 0 at O, kept once
        assert len(at_zero) == 1
        assert len(pts) == len({(p.edge_id, p.offset) for p in pts})
        # 3 + 4 + 5 intervals, 4 + 5 + 6 per-edge points, minus 2 duplicate O's
        assert len(pts) == 13

    def test_spacing_validated(self, y_net):
        with pytest.raises(ValidationError):
            lattice(y_net, 0.0)


class TestSphereCount:
    def test_path_interior_two_sided(self, path10):
        assert sphere_count(path10, path10.point(0, 3.0), 2.0) == 2

    def test_path_one_side_off_network(self, path10):
        assert sphere_count(path10, path10.point(0, 3.0), 4.0) == 1

    def test_y_tree_through_junction(self, y_net):
        assert sphere_count(y_net, y_net.point(0, 2.0), 3.0) == 2

    def test_zero_radius(self, y_net):
        assert sphere_count(y_net, y_net.point(0, 2.0), 0.0) == 1

    def test_leaf_hit_counted_once(self, path10):
        assert sphere_count(path10, path10.point(0, 3.0), 7.0) == 1
        assert sphere_count(path10, path10.point(0, 3.0), 3.0) == 2

    def test_vector_of_radii(self, y_net):
        u = y_net.point(0, 2.0)
        got = sphere_count(y_net, u, np.array([0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 8.0]))
        # distances from u: A at 1, O at 2, B at 6, C at 7; at t = 2 the
        # sphere degenerates to the junction O alone
        want = np.array([1, 2, 2, 1, 2, 2, 1, 0])
        assert_allclose(got, want)

    @staticmethod
    def _oracle_count(net, dv, own_edge, own_off, t):
        """Level count from the piecewise-linear distance along each edge.

        ``dv`` holds oracle distances from the source to every vertex. On
        a tree the distance restricted to an edge is a tent
        ``min(da + s, db + (length - s))`` (a vee ``|s - o|`` on the
        source's own edge); solutions of ``d = t`` are read off piece by
        piece, with vertices and interior kinks hit exactly counted once.
        """
        count = 0
        for ei in range(len(net.edges)):
            da = dv[net.edge_start[ei]]
            db = dv[net.edge_end[ei]]
            length = net.edge_length[ei]
            if ei == own_edge:
                pieces = [(0.0, own_off, da, 0.0), (own_off, length, 0.0, db)]
                if t == 0.0 and 0.0 < own_off < length:
                    count += 1
            else:
                s_star = min(max((db - da + length) / 2.0, 0.0), length)
                peak = da + s_star
                pieces = [(0.0, s_star, da, peak), (s_star, length, peak, db)]
                if 0.0 < s_star < length and t == peak:
                    count += 1
            for s_lo, s_hi, d_lo, d_hi in pieces:
                if s_hi > s_lo and min(d_lo, d_hi) < t < max(d_lo, d_hi):
                    count += 1
        return count + int((dv == t).sum())

    def test_matches_piecewise_linear_oracle(self):
        for seed in (0, 1):
            net = make_network("random-tree", seed=seed, edges=15)
            rng = np.random.default_rng(seed + 10)
            eidx, off = random_points(net, 8, rng)
            pat = PointPattern.from_indices(net, eidx, off)
            to_v = oracle_distances(
                net, list(zip(pat.edge_indices, pat.offsets)), to_vertices=True
            )
            for i in range(pat.n):
                u = pat[i]
                for t in [0.0, 0.3, 1.7, 4.2, 9.1, 14.6]:
                    want = self._oracle_count(
                        net, to_v[i], int(pat.edge_indices[i]), float(pat.offsets[i]), t
                    )
                    assert sphere_count(net, u, t) == want


class TestSphereCountPiecewise:
    def test_constant_between_vertex_distances(self, y_net):
        u = y_net.point(0, 2.0)
        # vertex distances from u: 1 (A), 2 (O), 6 (B), 7 (C)
        for a, b in [(0.0, 1.0), (1.0, 2.0), (2.0, 6.0), (6.0, 7.0)]:
            ts = np.linspace(a + 1e-6, b - 1e-6, 7)
            counts = sphere_count(y_net, u, ts)
            assert np.all(counts == counts[0])
