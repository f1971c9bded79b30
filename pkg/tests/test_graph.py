import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairmp.errors import (
    DimensionMismatch,
    DuplicateEdge,
    EmptyEdgeSet,
    IndexOutOfRange,
    SelfLoopInInput,
    SingleGroup,
)
from fairmp.graph import (
    build_graph,
    incident_vector,
    label_homophily,
    laplacian,
    normalized_adjacency,
    read_edge_list,
    sensitive_homophily,
    spmm,
    write_edge_list,
)


def random_graph(rng, n, p=0.3):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    return build_graph(np.stack([iu[keep], ju[keep]], axis=1), n)


class TestBuildGraph:
    def test_smallest_graph(self):
        g = build_graph([(0, 1)], 2)
        assert g.num_edges == 1
        dense = g.adjacency.toarray()
        assert dense[0, 1] == 1.0 and dense[1, 0] == 1.0
        assert dense[0, 0] == 0.0

    def test_reversed_duplicate_rejected(self):
        with pytest.raises(DuplicateEdge):
            build_graph([(0, 1), (1, 0)], 2)

    def test_plain_duplicate_rejected(self):
        with pytest.raises(DuplicateEdge):
            build_graph([(0, 1), (0, 1)], 2)

    def test_path_degrees(self):
        g = build_graph([(0, 2), (1, 2)], 3)
        assert g.degrees().tolist() == [1, 1, 2]

    def test_self_loop_rejected(self):
        with pytest.raises(SelfLoopInInput):
            build_graph([(1, 1)], 2)

    def test_out_of_range_rejected(self):
        with pytest.raises(IndexOutOfRange):
            build_graph([(0, 2)], 2)

    def test_isolated_nodes_allowed(self):
        g = build_graph([], 3)
        assert g.num_edges == 0


class TestNormalization:
    def test_single_node(self):
        a = normalized_adjacency(build_graph([], 1))
        assert a.values.toarray().tolist() == [[1.0]]
        assert laplacian(a).toarray().tolist() == [[0.0]]

    def test_two_nodes_one_edge(self):
        a = normalized_adjacency(build_graph([(0, 1)], 2))
        np.testing.assert_allclose(a.values.toarray(), [[0.5, 0.5], [0.5, 0.5]])
        np.testing.assert_allclose(
            laplacian(a).toarray(), [[0.5, -0.5], [-0.5, 0.5]]
        )

    def test_path_off_diagonal(self):
        a = normalized_adjacency(build_graph([(0, 1), (1, 2)], 3))
        assert a.values[0, 1] == pytest.approx(1.0 / np.sqrt(6.0), abs=1e-15)

    def test_symmetry_and_laplacian_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(1, 40))
            g = random_graph(rng, n)
            a = normalized_adjacency(g)
            dense = a.values.toarray()
            assert np.max(np.abs(dense - dense.T)) < 1e-12
            assert np.min(np.diag(dense)) > 0.0
            resid = laplacian(a).toarray() + dense - np.eye(n)
            assert np.max(np.abs(resid)) < 1e-12


class TestSpmm:
    def test_identity_on_edgeless(self):
        a = normalized_adjacency(build_graph([], 4))
        x = np.arange(8.0).reshape(4, 2)
        np.testing.assert_array_equal(spmm(a, x), x)

    def test_two_node_hand_value(self):
        a = normalized_adjacency(build_graph([(0, 1)], 2))
        np.testing.assert_allclose(
            spmm(a, np.eye(2)), [[0.5, 0.5], [0.5, 0.5]]
        )

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(2, 51))
            g = random_graph(rng, n)
            a = normalized_adjacency(g)
            x = rng.normal(size=(n, int(rng.integers(1, 6))))
            dense = a.values.toarray() @ x
            assert np.max(np.abs(spmm(a, x) - dense)) < 1e-12

    def test_dimension_mismatch(self):
        a = normalized_adjacency(build_graph([(0, 1)], 2))
        with pytest.raises(DimensionMismatch):
            spmm(a, np.zeros((3, 2)))


class TestHomophily:
    def test_triangle_all_same(self):
        g = build_graph([(0, 1), (1, 2), (0, 2)], 3)
        assert label_homophily(g, [7, 7, 7]) == 1.0

    def test_path_half(self):
        g = build_graph([(0, 1), (1, 2)], 3)
        assert label_homophily(g, [0, 0, 1]) == 0.5

    def test_alternating_cycle_is_zero(self):
        g = build_graph([(0, 1), (1, 2), (2, 3), (0, 3)], 4)
        s = incident_vector([1, -1, 1, -1])
        assert sensitive_homophily(g, s) == 0.0

    def test_empty_edge_set(self):
        with pytest.raises(EmptyEdgeSet):
            label_homophily(build_graph([], 2), [0, 1])

    def test_invariant_under_edge_list_permutation(self):
        rng = np.random.default_rng(11)
        g = random_graph(rng, 20, p=0.3)
        y = rng.integers(0, 3, size=20)
        shuffled = g.edges[rng.permutation(g.num_edges)]
        g2 = build_graph(shuffled, 20)
        assert label_homophily(g, y) == label_homophily(g2, y)

    def test_invariant_under_relabeling(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(3, 30))
            g = random_graph(rng, n, p=0.4)
            if g.num_edges == 0:
                continue
            y = rng.integers(0, 3, size=n)
            perm = rng.permutation(n)
            remapped = perm[g.edges]
            g2 = build_graph(remapped, n)
            y2 = np.empty(n, dtype=y.dtype)
            y2[perm] = y
            h1, h2 = label_homophily(g, y), label_homophily(g2, y2)
            assert 0.0 <= h1 <= 1.0
            assert h1 == pytest.approx(h2, abs=1e-15)


class TestIncidentVector:
    def test_equal_groups(self):
        sv = incident_vector([1, 1, -1, -1])
        np.testing.assert_allclose(sv.delta, [0.5, 0.5, -0.5, -0.5])

    def test_unequal_groups(self):
        sv = incident_vector([1, -1, -1])
        np.testing.assert_allclose(sv.delta, [1.0, -0.5, -0.5])

    def test_single_group_rejected(self):
        with pytest.raises(SingleGroup):
            incident_vector([1, 1, 1])

    @given(st.lists(st.sampled_from([-1, 1]), min_size=2, max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_sums_property(self, s):
        s = np.array(s)
        if (s > 0).all() or (s < 0).all():
            with pytest.raises(SingleGroup):
                incident_vector(s)
            return
        sv = incident_vector(s)
        assert abs(sv.delta.sum()) < 1e-12
        assert abs(np.abs(sv.delta).sum() - 2.0) < 1e-12
        assert ((sv.delta > 0) == (s == 1)).all()


class TestEdgeListFile:
    def test_round_trip_with_comments(self, tmp_path):
        g = build_graph([(0, 1), (1, 2), (0, 3)], 4)
        path = tmp_path / "edges.txt"
        write_edge_list(path, g)
        text = path.read_text()
        path.write_text("# header comment\n" + text + "   \n# trailing\n")
        g2 = build_graph(read_edge_list(path), 4)
        np.testing.assert_array_equal(g.edges, g2.edges)

    def test_duplicate_in_file_rejected(self, tmp_path):
        path = tmp_path / "edges.txt"
        path.write_text("0 1\n1 0\n")
        with pytest.raises(DuplicateEdge):
            build_graph(read_edge_list(path), 2)
