import os

import numpy as np
import pytest

from slim.datasets import (
    DatasetError,
    ParseError,
    load_tu_dataset,
    make_folds,
    one_hot_features,
    save_tu_dataset,
)
from slim.synthetic import make_bundle

from conftest import write_tu_files


class TestLoader:
    def test_tiny_dataset_shapes(self, loaded_tiny):
        assert len(loaded_tiny) == 3
        assert loaded_tiny.class_count == 2
        assert loaded_tiny.node_label_count == 3
        assert [g.node_count for g in loaded_tiny.graphs] == [3, 3, 3]
        # classes densified from {-1, 1} to {0, 1}
        assert [g.class_label for g in loaded_tiny.graphs] == [0, 1, 1]

    def test_two_node_single_edge(self, tmp_path):
        root = write_tu_files(tmp_path, "PAIR", [(1, 2)], [1, 1], [1], [0, 0])
        bundle = load_tu_dataset(root, "PAIR")
        g = bundle.graphs[0]
        assert g.node_count == 2
        assert g.edge_count == 1
        np.testing.assert_array_equal(g.adjacency, [[0, 1], [1, 0]])

    def test_one_directional_edges_are_symmetrized(self, tmp_path):
        root = write_tu_files(tmp_path, "DIR", [(1, 2), (2, 3)], [1, 1, 1], [1], [0, 0, 0])
        g = load_tu_dataset(root, "DIR").graphs[0]
        np.testing.assert_array_equal(g.adjacency, g.adjacency.T)
        assert g.edge_count == 2

    def test_duplicates_and_self_loops_warn(self, tmp_path):
        edges = [(1, 2), (2, 1), (1, 2), (3, 3)]
        root = write_tu_files(tmp_path, "DUP", edges, [1, 1, 1], [1], [0, 0, 0])
        with pytest.warns(UserWarning, match="1 duplicate edge.*1 self-loop"):
            g = load_tu_dataset(root, "DUP").graphs[0]
        assert g.edge_count == 1
        assert np.all(np.diag(g.adjacency) == 0)

    def test_missing_file_names_it(self, tmp_path):
        root = write_tu_files(tmp_path, "MISS", [(1, 2)], [1, 1], [1], [0, 0])
        (tmp_path / "MISS" / "MISS_graph_labels.txt").unlink()
        with pytest.raises(DatasetError, match="MISS_graph_labels.txt"):
            load_tu_dataset(root, "MISS")

    def test_unknown_endpoint_reports_line(self, tmp_path):
        root = write_tu_files(tmp_path, "BADE", [(1, 2), (2, 9)], [1, 1], [1], [0, 0])
        with pytest.raises(ParseError, match="line 2"):
            load_tu_dataset(root, "BADE")

    def test_empty_graph_rejected(self, tmp_path):
        # two labels but every node belongs to graph 1
        root = write_tu_files(tmp_path, "EMPTY", [(1, 2)], [1, 1], [1, 2], [0, 0])
        with pytest.raises(ParseError, match="graph 2"):
            load_tu_dataset(root, "EMPTY")

    def test_degree_labels_when_file_absent(self, tmp_path):
        root = write_tu_files(tmp_path, "NOLAB", [(1, 2), (2, 3)], [1, 1, 1], [1])
        bundle = load_tu_dataset(root, "NOLAB")
        # degrees 1, 2, 1 densify to labels 0, 1, 0
        np.testing.assert_array_equal(bundle.graphs[0].node_labels, [0, 1, 0])
        assert bundle.node_label_count == 2

    def test_node_labels_densified(self, tmp_path):
        root = write_tu_files(tmp_path, "SPARSE", [(1, 2)], [1, 1], [1], [5, 9])
        bundle = load_tu_dataset(root, "SPARSE")
        np.testing.assert_array_equal(bundle.graphs[0].node_labels, [0, 1])
        assert bundle.node_label_count == 2

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DatasetError, match="NOPE"):
            load_tu_dataset(str(tmp_path), "NOPE")

    def test_non_integer_label_reports_line(self, tmp_path):
        root = write_tu_files(tmp_path, "BADLBL", [(1, 2)], [1, 1], [1], [0, 0])
        (tmp_path / "BADLBL" / "BADLBL_node_labels.txt").write_text("0, 5\n0\n")
        with pytest.raises(ParseError, match="line 1"):
            load_tu_dataset(root, "BADLBL")

    @pytest.mark.skipif(
        not os.path.isdir(os.path.join(os.environ.get("SLIM_DATA_DIR", "data"), "PROTEINS")),
        reason="PROTEINS benchmark not on disk",
    )
    def test_proteins_count(self):
        bundle = load_tu_dataset(os.environ.get("SLIM_DATA_DIR", "data"), "PROTEINS")
        assert len(bundle) == 1113


class TestRoundTrip:
    def test_synthetic_bundle_round_trips(self, tmp_path):
        bundle = make_bundle(n_graphs=12, seed=7)
        save_tu_dataset(bundle, str(tmp_path))
        again = load_tu_dataset(str(tmp_path), bundle.name)
        assert len(again) == len(bundle)
        assert again.class_count == bundle.class_count
        assert again.node_label_count == bundle.node_label_count
        for a, b in zip(bundle.graphs, again.graphs):
            np.testing.assert_array_equal(a.adjacency, b.adjacency)
            np.testing.assert_array_equal(a.node_labels, b.node_labels)
            assert a.class_label == b.class_label

    def test_loaded_bundle_round_trips(self, loaded_tiny, tmp_path):
        save_tu_dataset(loaded_tiny, str(tmp_path), name="AGAIN")
        again = load_tu_dataset(str(tmp_path), "AGAIN")
        for a, b in zip(loaded_tiny.graphs, again.graphs):
            np.testing.assert_array_equal(a.adjacency, b.adjacency)
            np.testing.assert_array_equal(a.node_labels, b.node_labels)
            assert a.class_label == b.class_label

    def test_loaded_graphs_are_symmetric(self, loaded_tiny):
        for g in loaded_tiny.graphs:
            np.testing.assert_array_equal(g.adjacency, g.adjacency.T)
            assert np.all(np.diag(g.adjacency) == 0)


class TestOneHot:
    def test_single_node_identity(self):
        from slim.datasets import Graph

        g = Graph(np.zeros((1, 1)), np.array([0]), 0)
        np.testing.assert_array_equal(one_hot_features(g, 1), [[1.0]])

    def test_two_labels(self):
        from slim.datasets import Graph

        g = Graph(np.zeros((2, 2)), np.array([0, 2]), 0)
        np.testing.assert_array_equal(
            one_hot_features(g, 3), [[1, 0, 0], [0, 0, 1]]
        )

    def test_row_sums_are_one(self, loaded_tiny):
        for g in loaded_tiny.graphs:
            x = one_hot_features(g, loaded_tiny.node_label_count)
            np.testing.assert_array_equal(x.sum(axis=1), np.ones(g.node_count))

    def test_label_out_of_range(self):
        from slim.datasets import Graph

        g = Graph(np.zeros((1, 1)), np.array([3]), 0)
        with pytest.raises(ValueError):
            one_hot_features(g, 3)


def _counts_bundle(counts_per_class):
    """Bundle of single-node graphs with the given class sizes."""
    from slim.datasets import DatasetBundle, Graph

    graphs = []
    for cls, count in enumerate(counts_per_class):
        graphs += [Graph(np.zeros((1, 1)), np.array([0]), cls) for _ in range(count)]
    return DatasetBundle("counts", graphs, 1, len(counts_per_class))


class TestFolds:
    def test_perfect_stratification(self):
        bundle = _counts_bundle([5, 5])
        plan = make_folds(bundle, fold_count=5, seed=0)
        labels = bundle.class_labels()
        for fold in range(5):
            members = plan.fold_indices(fold)
            assert len(members) == 2
            assert sorted(labels[members]) == [0, 1]

    def test_deterministic(self):
        bundle = _counts_bundle([9, 7])
        a = make_folds(bundle, 4, seed=42)
        b = make_folds(bundle, 4, seed=42)
        np.testing.assert_array_equal(a.assignments, b.assignments)
        c = make_folds(bundle, 4, seed=43)
        assert not np.array_equal(a.assignments, c.assignments)

    def test_mutag_sized_fold_arithmetic(self):
        # 188 graphs split 125/63: global fold sizes must land in {18, 19}
        bundle = _counts_bundle([125, 63])
        plan = make_folds(bundle, fold_count=10, seed=3)
        sizes = np.bincount(plan.assignments, minlength=10)
        assert set(sizes.tolist()) <= {18, 19}
        assert sizes.sum() == 188
        # per-class fold sizes differ by at most one
        labels = bundle.class_labels()
        for cls in (0, 1):
            per_fold = np.bincount(plan.assignments[labels == cls], minlength=10)
            assert per_fold.max() - per_fold.min() <= 1

    def test_partition_property(self, rng):
        bundle = _counts_bundle([13, 8, 6])
        plan = make_folds(bundle, 5, seed=9)
        all_indices = np.concatenate([plan.fold_indices(f) for f in range(5)])
        assert sorted(all_indices.tolist()) == list(range(27))

    def test_split_disjoint(self):
        bundle = _counts_bundle([10, 10])
        plan = make_folds(bundle, 4, seed=1)
        train, val = plan.split(2)
        assert set(train) & set(val) == set()
        assert len(train) + len(val) == 20

    def test_too_many_folds(self):
        bundle = _counts_bundle([2, 2])
        with pytest.raises(ValueError, match="exceeds graph count"):
            make_folds(bundle, 10, seed=0)

    def test_fold_count_minimum(self):
        bundle = _counts_bundle([4, 4])
        with pytest.raises(ValueError, match="at least 2"):
            make_folds(bundle, 1, seed=0)

    def test_small_class_relaxes_with_warning(self):
        bundle = _counts_bundle([12, 2])
        with pytest.warns(UserWarning, match="stratification relaxed"):
            plan = make_folds(bundle, 4, seed=0)
        sizes = np.bincount(plan.assignments, minlength=4)
        assert sizes.max() - sizes.min() <= 1
