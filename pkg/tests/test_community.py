import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msssbm.community import (
    MultilayerEnsemble,
    association_consensus,
    association_matrix,
    canonical_labels,
    insertion_gain,
    louvain,
    louvain_layers,
    louvain_trace,
    modularity,
    modularity_gain,
    multilayer_louvain,
    multilayer_modularity,
    spectral_clustering,
)
from msssbm.errors import EmptyGraph, EmptyLayer, KTooLarge, LayerMismatch, LengthMismatch, NonConsensus
from msssbm.metrics import adjusted_rand_index
from msssbm.synth import planted_static

from .conftest import random_graph, two_triangles


def q_oracle(W, g, gamma=1.0):
    N = len(g)
    k = W.sum(axis=1)
    two_L = k.sum()
    total = 0.0
    for i in range(N):
        for j in range(N):
            if g[i] == g[j]:
                total += W[i, j] - gamma * k[i] * k[j] / two_L
    return total / two_L


def qms_oracle(layers, G, gamma, C):
    R, N = G.shape
    k = layers.sum(axis=2)
    two_L = k.sum(axis=1)
    total = 0.0
    for r in range(R):
        for s in range(R):
            for i in range(N):
                for j in range(N):
                    if G[r, i] != G[s, j]:
                        continue
                    if r == s:
                        total += layers[r, i, j] - gamma * k[r, i] * k[r, j] / two_L[r]
                    elif i == j:
                        total += C
    two_mu = two_L.sum() + C * N * R * (R - 1)
    return total / two_mu


def graph_and_labels(seed, N=None):
    rng = np.random.default_rng(seed)
    N = N or int(rng.integers(4, 30))
    W = random_graph(rng, N, rng.uniform(0.1, 0.6))
    if W.sum() == 0:
        W[0, 1] = W[1, 0] = 1
    return rng, W, rng.integers(1, 5, N)


class TestModularity:
    def test_one_community_is_zero(self, rng):
        W = random_graph(rng, 10, 0.4)
        assert modularity(W, np.ones(10)) == pytest.approx(0.0, abs=1e-15)

    def test_two_triangles(self):
        assert modularity(two_triangles(), [1, 1, 1, 2, 2, 2]) == pytest.approx(0.5)

    @given(st.integers(0, 100_000))
    def test_double_sum_oracle(self, seed):
        _, W, g = graph_and_labels(seed)
        assert modularity(W, g) == pytest.approx(q_oracle(W, g), abs=1e-12)

    @given(st.integers(0, 100_000), st.permutations([1, 2, 3, 4]))
    def test_label_permutation(self, seed, perm):
        _, W, g = graph_and_labels(seed)
        g2 = np.array(perm)[g - 1]
        assert modularity(W, g2) == pytest.approx(modularity(W, g), abs=1e-14)

    @given(st.integers(0, 100_000))
    def test_range(self, seed):
        _, W, g = graph_and_labels(seed)
        assert -0.5 - 1e-12 <= modularity(W, g) <= 1.0

    def test_empty(self):
        with pytest.raises(EmptyGraph):
            modularity(np.zeros((3, 3)), [1, 2, 3])


class TestGain:
    @given(st.integers(0, 100_000))
    def test_gain_equals_difference(self, seed):
        rng, W, g = graph_and_labels(seed)
        node = int(rng.integers(len(g)))
        target = int(rng.integers(1, 6))  # 5 may be a fresh community
        after = g.copy()
        after[node] = target
        dq = modularity_gain(W, g, node, target)
        assert dq == pytest.approx(modularity(W, after) - modularity(W, g), abs=1e-10)

    def test_insertion_into_empty_community(self):
        assert insertion_gain(0.0, 0.0, 3.0, 0.0, 10.0) == pytest.approx(0.0)


class TestLouvain:
    def test_two_triangles(self):
        assert louvain(two_triangles(), seed=0).tolist() == [1, 1, 1, 2, 2, 2]

    def test_complete_graph(self):
        assert set(louvain(1 - np.eye(7), seed=3).tolist()) == {1}

    def test_planted_five_blocks(self):
        ps = planted_static(100, 5, 1, alpha=0.8, lam=0.9, eps_range=0.0, seed=4)
        assert adjusted_rand_index(louvain(ps.ensemble[0], seed=1), ps.g_true) >= 0.9

    @given(st.integers(0, 100_000))
    def test_history_monotone(self, seed):
        _, W, _ = graph_and_labels(seed)
        hist = louvain_trace(W, seed=seed).q_history
        assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))
        labels = louvain_trace(W, seed=seed).labels
        assert modularity(W, labels) == pytest.approx(hist[-1], abs=1e-10)

    @given(st.integers(0, 100_000))
    def test_seeded_reproducible_and_canonical(self, seed):
        _, W, _ = graph_and_labels(seed)
        a, b = louvain(W, seed), louvain(W, seed)
        assert np.array_equal(a, b)
        assert np.array_equal(a, canonical_labels(a))
        assert a[0] == 1 and set(a.tolist()) == set(range(1, a.max() + 1))

    def test_empty(self):
        with pytest.raises(EmptyGraph):
            louvain(np.zeros((4, 4)))


class TestMultilayerModularity:
    def test_r1_reduces(self, rng):
        for seed in range(20):
            _, W, g = graph_and_labels(seed)
            ens = MultilayerEnsemble(W[None], coupling=1.0)
            assert multilayer_modularity(ens, g[None]) == pytest.approx(modularity(W, g), abs=1e-12)

    def test_c0_identical_partitions(self, rng):
        layers = np.stack([random_graph(rng, 9, 0.4) for _ in range(3)])
        g = rng.integers(1, 4, 9)
        ens = MultilayerEnsemble(layers, coupling=0.0)
        two_L = layers.sum(axis=(1, 2))
        expect = sum(modularity(layers[r], g) * two_L[r] for r in range(3)) / two_L.sum()
        assert multilayer_modularity(ens, np.tile(g, (3, 1))) == pytest.approx(expect, abs=1e-12)

    @given(st.integers(0, 100_000), st.floats(0.0, 2.0), st.floats(0.5, 1.5))
    def test_quadruple_sum_toy(self, seed, C, gamma):
        rng = np.random.default_rng(seed)
        layers = np.stack([random_graph(rng, 4, 0.6) for _ in range(3)])
        for r in range(3):
            if layers[r].sum() == 0:
                layers[r, 0, 1] = layers[r, 1, 0] = 1
        G = rng.integers(1, 3, (3, 4))
        ens = MultilayerEnsemble(layers, gamma=gamma, coupling=C)
        assert multilayer_modularity(ens, G) == pytest.approx(qms_oracle(layers, G, gamma, C), abs=1e-12)

    def test_label_permutation(self, rng):
        layers = np.stack([random_graph(rng, 8, 0.5) for _ in range(2)])
        G = rng.integers(1, 4, (2, 8))
        ens = MultilayerEnsemble(layers)
        perm = np.array([3, 1, 2])
        assert multilayer_modularity(ens, perm[G - 1]) == pytest.approx(multilayer_modularity(ens, G))

    def test_layer_mismatch(self, rng):
        ens = MultilayerEnsemble(np.stack([random_graph(rng, 5, 0.6)] * 2))
        with pytest.raises(LayerMismatch):
            multilayer_modularity(ens, np.ones((3, 5), dtype=int))

    def test_empty_layer(self, rng):
        layers = np.stack([random_graph(rng, 5, 0.8), np.zeros((5, 5), dtype=np.uint8)])
        with pytest.raises(EmptyLayer):
            multilayer_modularity(MultilayerEnsemble(layers), np.ones((2, 5), dtype=int))
        with pytest.raises(EmptyLayer):
            multilayer_louvain(MultilayerEnsemble(layers, coupling=0.0))


class TestMultilayerLouvain:
    @pytest.mark.parametrize("C", [0.0, 0.5, 1.0, 3.0])
    def test_identical_layers_match_single(self, C):
        ps = planted_static(60, 4, 1, eps_range=0.0, seed=2)
        layers = np.repeat(ps.ensemble, 4, axis=0)
        part = multilayer_louvain(MultilayerEnsemble(layers, coupling=C), seed=5)
        single = louvain(ps.ensemble[0], seed=5)
        assert part.agreed
        assert adjusted_rand_index(part.consensus, single) == 1.0

    def test_c0_equals_per_layer_louvain(self, rng):
        layers = np.stack([random_graph(rng, 25, 0.2) for _ in range(5)])
        part = multilayer_louvain(MultilayerEnsemble(layers, coupling=0.0), seed=11)
        assert np.array_equal(part.per_layer, louvain_layers(layers, seed=11))

    def test_planted_recovery(self):
        ps = planted_static(120, 8, 20, seed=0)
        part = multilayer_louvain(MultilayerEnsemble(ps.ensemble), seed=0)
        assert np.mean([adjusted_rand_index(p, ps.g_true) for p in part.per_layer]) >= 0.95

    def test_quality_history_matches_objective(self, rng):
        ps = planted_static(30, 3, 4, seed=6)
        ens = MultilayerEnsemble(ps.ensemble)
        part = multilayer_louvain(ens, seed=1)
        assert all(b >= a - 1e-12 for a, b in zip(part.q_history, part.q_history[1:]))
        assert multilayer_modularity(ens, part.per_layer) == pytest.approx(part.q_history[-1], abs=1e-10)

    def test_non_consensus(self, rng):
        a, b = two_triangles(), two_triangles()[[0, 3, 1, 4, 2, 5]][:, [0, 3, 1, 4, 2, 5]]
        ens = MultilayerEnsemble(np.stack([a, b]), coupling=0.0)
        part = multilayer_louvain(ens, seed=0)
        assert not part.agreed
        with pytest.raises(NonConsensus):
            multilayer_louvain(ens, seed=0, require_consensus=True)

    def test_reproducible(self):
        ps = planted_static(40, 4, 5, alpha=0.4, seed=8)
        ens = MultilayerEnsemble(ps.ensemble)
        assert np.array_equal(multilayer_louvain(ens, 3).per_layer, multilayer_louvain(ens, 3).per_layer)


class TestSpectral:
    def test_two_triangles(self):
        assert spectral_clustering(two_triangles(), 2, seed=0).tolist() == [1, 1, 1, 2, 2, 2]

    def test_k1(self, rng):
        assert set(spectral_clustering(random_graph(rng, 8, 0.5), 1).tolist()) == {1}

    def test_planted(self):
        ps = planted_static(150, 5, 1, eps_range=0.0, seed=1)
        assert adjusted_rand_index(spectral_clustering(ps.ensemble[0], 5, seed=0), ps.g_true) >= 0.8

    def test_k_too_large(self):
        with pytest.raises(KTooLarge):
            spectral_clustering(two_triangles(), 7)


class TestAssociation:
    def test_identical_memberships(self, rng):
        g = rng.integers(1, 4, 10)
        P = association_consensus(np.tile(g, (6, 1))).P
        off = ~np.eye(10, dtype=bool)
        assert set(np.unique(P[off]).tolist()) <= {0, 6}
        assert np.all(np.diag(P) == 6)

    def test_single_subject(self):
        g = [1, 2, 1, 3]
        P = association_consensus([g]).P
        assert P.tolist() == [[1, 0, 1, 0], [0, 1, 0, 0], [1, 0, 1, 0], [0, 0, 0, 1]]

    def test_double_loop_oracle(self, rng):
        M = rng.integers(1, 4, (5, 12))
        P = association_matrix(M)
        for i in range(12):
            for j in range(12):
                assert P[i, j] == sum(M[r, i] == M[r, j] for r in range(5))

    def test_top_pairs(self, rng):
        M = rng.integers(1, 3, (4, 20))
        cons = association_consensus(M, top_fraction=0.05)
        assert len(cons.pairs) == 10  # ceil(0.05 * 190)
        P = cons.P
        kept = [P[i, j] for i, j in cons.pairs]
        rest = [P[i, j] for i in range(20) for j in range(i + 1, 20) if (i, j) not in cons.pairs]
        assert min(kept) >= max(rest)
        assert kept == sorted(kept, reverse=True)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            association_consensus([[1, 2, 3], [1, 2]])
