import itertools
import math

import numpy as np
import pytest

from trifaststmf import network as nw
from trifaststmf.trifactor import TriFactorization

TABLE_ROWS = [
    ((65, 21, 2, 52), 84), ((57, 22, 5, 56), 81), ((57, 24, 2, 57), 81),
    ((60, 21, 2, 57), 84), ((60, 20, 4, 56), 83), ((61, 19, 2, 58), 85),
    ((57, 18, 15, 50), 76), ((52, 23, 14, 51), 74), ((67, 4, 2, 67), 96),
    ((65, 15, 2, 58), 88),
]


@pytest.fixture(scope="module")
def synthetic():
    return nw.gen_synthetic_tropical_network(45, 10, 15, 30, np.random.default_rng(0))


class TestSynthetic:
    def test_sizes(self, synthetic):
        net, truth, blocks = synthetic
        assert len(net.node_ids) == 100
        assert truth.sizes == (45, 10, 15, 30)
        xz = [e for e in net.edges if e[0] in truth.X and e[1] in truth.Z]
        assert len(xz) == 45 * 30
        assert len(net.edges) == 45 * 10 + 10 * 15 + 15 * 30 + 45 * 30

    def test_scalar_sizes(self):
        net, truth, blocks = nw.gen_synthetic_tropical_network(1, 1, 1, 1, np.random.default_rng(1))
        assert blocks.R.data[0, 0] == blocks.G1[0, 0] + blocks.S[0, 0] + blocks.G2[0, 0]

    def test_longest_paths(self):
        net, truth, _ = nw.gen_synthetic_tropical_network(3, 2, 2, 3, np.random.default_rng(2))
        for x, z in itertools.product(truth.X, truth.Z):
            best = max(net.weight(x, y) + net.weight(y, w) + net.weight(w, z)
                       for y in truth.Y for w in truth.W)
            assert net.weight(x, z) == pytest.approx(best, abs=1e-12)

    def test_true_partition_recovers_blocks(self, synthetic):
        net, truth, blocks = synthetic
        got = nw.build_matrices(net, truth, np.random.default_rng(0))
        np.testing.assert_array_equal(got.R.data, blocks.R.data)
        assert got.R.fully_observed
        for name in ("G1", "S", "G2"):
            np.testing.assert_array_equal(getattr(got, name), getattr(blocks, name))


class TestPartitions:
    def test_random(self):
        nodes = list(range(10))
        a = nw.random_partition(nodes, (4, 2, 1, 3), np.random.default_rng(5))
        b = nw.random_partition(nodes, (4, 2, 1, 3), np.random.default_rng(5))
        assert a == b and a.sizes == (4, 2, 1, 3)
        assert sorted(a.assignment) == nodes
        with pytest.raises(ValueError):
            nw.random_partition(nodes, (4, 2, 1, 4), np.random.default_rng(0))

    def test_partial(self, synthetic):
        net, truth, _ = synthetic
        for seed in range(3):
            p = nw.partially_random_partition(truth.X, truth.Z, net.node_ids, 10, 15,
                                              np.random.default_rng(seed))
            assert p.X == truth.X and p.Z == truth.Z
            assert sorted(p.Y + p.W) == sorted(truth.Y + truth.W)
        with pytest.raises(ValueError):
            nw.partially_random_partition(truth.X, truth.Z, net.node_ids, 10, 14,
                                          np.random.default_rng(0))

    def test_duplicate_node_rejected(self):
        with pytest.raises(ValueError):
            nw.FourPartition([1], [1], [2], [3])

    def test_json_round_trip(self):
        p = nw.FourPartition([1, "a"], [2], [3], [4])
        assert nw.FourPartition.from_json(p.to_json()) == p

    @pytest.mark.parametrize("sizes,want", TABLE_ROWS)
    def test_mu(self, sizes, want):
        assert nw.mu(sizes) == want

    def test_mu_trivial(self):
        assert nw.mu((1, 1, 1, 1)) == 50


def two_cliques() -> nw.WeightedNetwork:
    edges = [(u, v, 1.0) for a, b in ((0, 3), (3, 6)) for u, v in itertools.combinations(range(a, b), 2)]
    return nw.WeightedNetwork(list(range(6)), edges)


def chain_of_communities(sizes):
    """Disjoint unit-weight cliques of the given sizes; callers add linking edges."""
    nodes, edges, groups, start = [], [], [], 0
    for s in sizes:
        grp = list(range(start, start + s))
        groups.append(grp)
        nodes += grp
        edges += [(u, v, 1.0) for u, v in itertools.combinations(grp, 2)]
        start += s
    return nodes, edges, groups


class TestLouvain:
    def test_two_cliques(self):
        comms = nw.louvain_partition(two_cliques(), 1.0, seed=0)
        assert sorted(map(sorted, comms)) == [[0, 1, 2], [3, 4, 5]]

    def test_single_node(self):
        assert nw.louvain_partition(nw.WeightedNetwork([7], []), 1.0) == [[7]]

    def test_select_roles_by_size(self):
        nodes, edges, groups = chain_of_communities([21, 65, 2, 52])
        small, big, tiny, mid = groups
        edges += [(big[0], small[0], 0.1), (small[0], tiny[0], 0.1), (tiny[0], mid[0], 0.1)]
        net = nw.WeightedNetwork(nodes, edges)
        part = nw.select_four_partition(groups, net)
        assert part.sizes == (65, 21, 2, 52)
        assert nw.mu(part) == 84

    def test_select_requires_four(self):
        with pytest.raises(nw.PartitionError):
            nw.select_four_partition([[0, 1, 2], [3, 4, 5]], two_cliques())

    def test_select_requires_connected_blocks(self):
        nodes, edges, groups = chain_of_communities([3, 3, 3, 3])
        with pytest.raises(nw.PartitionError):
            nw.select_four_partition(groups, nw.WeightedNetwork(nodes, edges))

    def test_equal_sizes_tie_break(self):
        nodes, edges, groups = chain_of_communities([2, 2, 2, 2])
        edges += [(0, 4, 1.0), (4, 6, 1.0), (6, 2, 1.0)]
        net = nw.WeightedNetwork(nodes, edges)
        part = nw.select_four_partition(list(reversed(groups)), net)
        assert (part.X, part.Z, part.Y, part.W) == ([0, 1], [2, 3], [4, 5], [6, 7])


class TestBuildMatrices:
    def test_fill_from_observed_factor_entries(self):
        part = nw.FourPartition([0], [1], [2], [3])
        net = nw.WeightedNetwork([0, 1, 2, 3], [(0, 1, 4.0), (2, 3, 6.0), (0, 3, 9.0)])
        blocks = nw.build_matrices(net, part, np.random.default_rng(0))
        assert blocks.S[0, 0] in (4.0, 6.0)
        assert not blocks.S_observed[0, 0]

    def test_masks_missing_and_zeros(self):
        part = nw.FourPartition([0, 1], [2], [3], [4, 5])
        edges = [(0, 2, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (3, 5, 1.0),
                 (0, 4, 3.0), (1, 5, 0.0)]
        net = nw.WeightedNetwork(list(range(6)), edges)
        b = nw.build_matrices(net, part, np.random.default_rng(0))
        np.testing.assert_array_equal(b.R.observed, [[True, False], [False, True]])
        bz = nw.build_matrices(net, part, np.random.default_rng(0), mask_zeros=True)
        np.testing.assert_array_equal(bz.R.observed, [[True, False], [False, False]])

    def test_partition_must_cover(self):
        with pytest.raises(ValueError):
            nw.build_matrices(two_cliques(), nw.FourPartition([0], [1], [2], [3]),
                              np.random.default_rng(0))


class TestSampling:
    def test_missing_fraction_bound(self, synthetic):
        net = synthetic[0]
        samples = nw.sample_networks(net, 4, 0.2, np.random.default_rng(0))
        assert len(samples) == 4
        for kept, held in samples:
            assert len(held) <= math.floor(0.2 * len(net.edges))
            assert len(kept.edges) + len(held) == len(net.edges)
            kept_pairs = {nw._pair(u, v) for u, v, _ in kept.edges}
            assert not kept_pairs & {nw._pair(u, v) for u, v, _ in held}

    def test_bad_args(self, synthetic):
        with pytest.raises(ValueError):
            nw.sample_networks(synthetic[0], 0, 0.2, np.random.default_rng(0))


class TestPrediction:
    def test_blocks_and_keys(self):
        part = nw.FourPartition([0], [1], [2], [3])
        fac = TriFactorization([[1.0]], [[2.0]], [[3.0]])
        pred = nw.predict_whole_network(fac, part)
        assert pred == {(0, 1): 1.0, (1, 2): 2.0, (2, 3): 3.0, (0, 2): 3.0, (1, 3): 5.0, (0, 3): 6.0}

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nw.predict_whole_network(TriFactorization([[1.0]], [[2.0]], [[3.0]]),
                                     nw.FourPartition([0, 4], [1], [2], [3]))

    def test_products_within_factor_bounds(self):
        rng = np.random.default_rng(0)
        fac = TriFactorization(rng.uniform(-3, 5, (4, 2)), rng.uniform(0, 5, (2, 3)),
                               rng.uniform(1, 2, (3, 5)))
        blocks = nw.predicted_blocks(fac)
        parts = {"G1": fac.G1, "S": fac.S, "G2": fac.G2}
        uses = {("X", "Y"): ["G1"], ("Y", "W"): ["S"], ("W", "Z"): ["G2"],
                ("X", "W"): ["G1", "S"], ("Y", "Z"): ["S", "G2"], ("X", "Z"): ["G1", "S", "G2"]}
        for key, mat in blocks.items():
            lo = sum(parts[n].min() for n in uses[key])
            hi = sum(parts[n].max() for n in uses[key])
            assert lo - 1e-12 <= mat.min() and mat.max() <= hi + 1e-12


class TestIngest:
    def write(self, tmp_path):
        path = tmp_path / "ants.txt"
        path.write_text("% comment\n# also\n1 2 3 1\n2 1 1 1\n1 1 5 1\n1 3 2 2\n2 3 4 3\nq 1 1 3\n")
        return path

    def test_parse(self, tmp_path):
        t = nw.ingest_interactions(self.write(tmp_path))
        rows = {(r.u, r.v, r.day): r.weight for r in t.itertuples()}
        assert rows[(1, 2, 1)] == 4.0
        assert (1, 1, 1) not in rows
        assert rows[(1, "q", 3)] == 1.0

    def test_day_group_average(self, tmp_path):
        t = nw.ingest_interactions(self.write(tmp_path))
        net = nw.day_group_network(t[t["u"] != "q"].assign(u=lambda d: d["u"].astype(int)), (1, 2))
        assert net.weight(1, 2) == 2.0 and net.weight(1, 3) == 1.0
        assert net.weight(2, 3) is None and sorted(net.node_ids) == [1, 2, 3]

    def test_malformed(self, tmp_path):
        (tmp_path / "bad.txt").write_text("1 2\n")
        with pytest.raises(ValueError):
            nw.ingest_interactions(tmp_path / "bad.txt")

    def test_pair_day_matrix_and_kmeans(self, tmp_path):
        t = nw.ingest_interactions(self.write(tmp_path))
        t = t[t["u"] != "q"]
        H, pairs, days = nw.pair_day_matrix(t, [1, 2, 3])
        assert pairs == [(1, 2), (1, 3), (2, 3)] and days == [1, 2, 3]
        np.testing.assert_array_equal(H, [[4, 0, 0], [0, 2, 0], [0, 0, 4]])
        centroids, labels, history = nw.kmeans_rows(H, 3, np.random.default_rng(0))
        assert len(set(labels)) == 3 and history[-1] == 0.0

    def test_kmeans_two_blobs(self):
        rng = np.random.default_rng(1)
        H = np.vstack([rng.normal(0, 0.1, (20, 2)), rng.normal(5, 0.1, (20, 2))])
        _, labels, history = nw.kmeans_rows(H, 2, rng)
        assert len(set(labels[:20])) == 1 and len(set(labels[20:])) == 1 and labels[0] != labels[-1]
        assert all(a >= b - 1e-9 for a, b in zip(history, history[1:]))

    def test_edge_list_round_trip(self, tmp_path):
        edges = [(0, 1, 0.1 + 0.2), (1, 2, 3.0)]
        nw.write_edge_list(tmp_path / "e.txt", edges, "u v weight")
        net = nw.read_edge_list(tmp_path / "e.txt")
        assert net.edges == edges


class TestNetwork:
    def test_density(self):
        net = two_cliques()
        assert net.density() == 6 / 15

    def test_unknown_node(self):
        with pytest.raises(ValueError):
            nw.WeightedNetwork([0], [(0, 1, 1.0)])

    def test_orientation_free_weight(self):
        net = nw.WeightedNetwork([0, 1], [(1, 0, 2.0)])
        assert net.weight(0, 1) == 2.0
