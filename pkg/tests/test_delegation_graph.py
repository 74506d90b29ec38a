import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluiddem import (
    AffineInY,
    ConfidenceBased,
    ConstantQ,
    GeneralContinuous,
    TabulatedPhi,
    Uniform,
    Upward,
    compute_weights,
    sample,
    substream,
)
from fluiddem.delegation_graph import (
    NO_EDGE,
    DelegationGraph,
    component_sizes,
    from_edge_csv,
    sample_graph,
    stats,
    to_edge_csv,
)


def graph_of(*out):
    return DelegationGraph(len(out), np.array(out, dtype=np.int64))


def naive_profile(out):
    """O(n^2) reference: forward walks for nullification, then ancestor counts."""
    n = len(out)
    reaches_cycle = []
    for s in range(n):
        seen = {s}
        v = s
        hit = False
        while out[v] >= 0:
            v = out[v]
            if v in seen:
                hit = True
                break
            seen.add(v)
        reaches_cycle.append(hit)
    dels = [0] * n
    for s in range(n):
        if reaches_cycle[s]:
            continue
        v = s
        while out[v] >= 0:
            v = out[v]
            dels[v] += 1
    weight = [
        0 if (reaches_cycle[i] or out[i] >= 0) else 1 + dels[i] for i in range(n)
    ]
    nullified = [i for i in range(n) if reaches_cycle[i]]
    return dels, weight, nullified


def random_functional_graphs(count, max_n, rng):
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        out = rng.integers(-1, n, size=n)
        out[out == np.arange(n)] = NO_EDGE
        yield DelegationGraph(n, out.astype(np.int64))


# ---------------------------------------------------------------------------
# compute_weights and stats


def test_no_edges():
    profile = compute_weights(graph_of(NO_EDGE, NO_EDGE, NO_EDGE, NO_EDGE, NO_EDGE))
    assert profile.weight.tolist() == [1, 1, 1, 1, 1]
    assert profile.total_weight == 5
    assert profile.max_weight == 1
    assert len(profile.nullified) == 0


def test_chain():
    # 0 -> 1 -> 2, voter 2 votes directly
    profile = compute_weights(graph_of(1, 2, NO_EDGE))
    assert profile.dels[2] == 2
    assert profile.weight.tolist() == [0, 0, 3]
    assert profile.total_weight == 3


def test_two_cycle_with_feeder():
    # 0 <-> 1, and 2 -> 0: everyone nullified
    profile = compute_weights(graph_of(1, 0, 0))
    assert profile.nullified.tolist() == [0, 1, 2]
    assert profile.total_weight == 0
    assert profile.max_weight == 0


def test_stats_examples():
    assert stats(compute_weights(graph_of(NO_EDGE, NO_EDGE, NO_EDGE, NO_EDGE))) == (1, 4, 0)
    assert stats(compute_weights(graph_of(NO_EDGE, 0, 0, 0))) == (4, 4, 0)
    assert stats(compute_weights(graph_of(1, 0))) == (0, 0, 2)


def test_matches_naive_oracle_on_random_graphs():
    rng = substream(42)
    for graph in random_functional_graphs(300, 50, rng):
        dels, weight, nullified = naive_profile(graph.out.tolist())
        profile = compute_weights(graph)
        assert profile.dels.tolist() == dels
        assert profile.weight.tolist() == weight
        assert profile.nullified.tolist() == nullified
        assert profile.total_weight + len(profile.nullified) == graph.n


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_weight_conservation(data):
    n = data.draw(st.integers(1, 40))
    out = data.draw(st.lists(st.integers(-1, n - 1), min_size=n, max_size=n))
    out = [NO_EDGE if t == i else t for i, t in enumerate(out)]
    profile = compute_weights(graph_of(*out))
    assert profile.total_weight + len(profile.nullified) == n
    assert profile.total_weight == profile.weight.sum() <= n
    # positive weight only on non-delegating voters
    for i in range(n):
        if profile.weight[i] > 0:
            assert out[i] == NO_EDGE


def test_graph_validation():
    with pytest.raises(ValueError):
        graph_of(0)  # self-delegation
    with pytest.raises(ValueError):
        graph_of(5, NO_EDGE)  # out of range
    with pytest.raises(ValueError):
        DelegationGraph(0, np.array([], dtype=np.int64))


# ---------------------------------------------------------------------------
# sampling


def test_no_delegation_mechanism_yields_empty_graph():
    rng = substream(1)
    p_vec = sample(Uniform(0.0, 1.0), rng, size=200)
    graph = sample_graph(ConfidenceBased(ConstantQ(0.0)), p_vec, rng)
    assert np.all(graph.out == NO_EDGE)


def test_upward_max_competence_never_delegates():
    rng = substream(2)
    for _ in range(200):
        p_vec = sample(Uniform(0.0, 1.0), rng, size=30)
        graph = sample_graph(Upward(0.9), p_vec, rng)
        assert graph.out[int(np.argmax(p_vec))] == NO_EDGE


def test_upward_edges_point_upward_and_acyclic():
    rng = substream(3)
    for _ in range(300):
        p_vec = sample(Uniform(0.0, 1.0), rng, size=100)
        graph = sample_graph(Upward(0.5), p_vec, rng)
        delegators = np.where(graph.out != NO_EDGE)[0]
        assert np.all(p_vec[graph.out[delegators]] > p_vec[delegators])
        assert len(compute_weights(graph).nullified) == 0


def test_confidence_based_targets_uniform():
    rng = substream(4)
    n_samples = 100_000
    counts = np.zeros((3, 3))
    p_vec = np.array([0.2, 0.5, 0.8])
    mech = ConfidenceBased(ConstantQ(1.0))
    for _ in range(n_samples):
        graph = sample_graph(mech, p_vec, rng)
        assert np.all(graph.out != NO_EDGE)
        for i in range(3):
            counts[i, graph.out[i]] += 1
    for i in range(3):
        others = [j for j in range(3) if j != i]
        freq = counts[i, others] / n_samples
        sigma = np.sqrt(0.25 / n_samples)
        assert np.all(np.abs(freq - 0.5) < 3 * sigma)


def test_general_continuous_fast_path_matches_row_path():
    # bilinear grid ((1,3),(1,3)) interpolates to exactly 1 + 2y
    affine = GeneralContinuous(0.999, AffineInY(1.0, 2.0))
    tabulated = GeneralContinuous(0.999, TabulatedPhi(((1.0, 3.0), (1.0, 3.0))))
    p_vec = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    reps = 40_000
    counts = np.zeros((2, 5))
    for k, mech in enumerate((affine, tabulated)):
        rng = substream(50 + k)
        for _ in range(reps):
            graph = sample_graph(mech, p_vec, rng)
            t = graph.out[0]
            if t != NO_EDGE:
                counts[k, t] += 1
    freq = counts[:, 1:] / counts.sum(axis=1, keepdims=True)
    # both samplers draw target ~ (1 + 2 p_j) among j != 0
    weights = 1.0 + 2.0 * p_vec[1:]
    expected = weights / weights.sum()
    for k in range(2):
        assert np.all(np.abs(freq[k] - expected) < 4 * np.sqrt(expected * (1 - expected) / reps))


def test_degenerate_pair_weights_vote_directly():
    # the sole positive-weight target of every voter is itself: nobody delegates
    p_vec = np.array([0.5])
    graph = sample_graph(GeneralContinuous(0.9, AffineInY(1.0, 1.0)), p_vec, substream(7))
    assert graph.out.tolist() == [NO_EDGE]


def test_sample_graph_rejects_empty():
    with pytest.raises(ValueError):
        sample_graph(Upward(0.5), np.array([]), substream(8))


def test_component_sizes_partition_voters():
    rng = substream(9)
    p_vec = sample(Uniform(0.0, 1.0), rng, size=500)
    graph = sample_graph(Upward(0.5), p_vec, rng)
    sizes = component_sizes(compute_weights(graph))
    assert sizes.sum() == 500
    assert np.all(sizes >= 1)


# ---------------------------------------------------------------------------
# CSV export


def test_edge_csv_roundtrip(tmp_path):
    graph = graph_of(2, NO_EDGE, 1, NO_EDGE)
    path = tmp_path / "edges.csv"
    to_edge_csv(graph, path)
    text = path.read_text().splitlines()
    assert text[0] == "voter,target"
    assert text[1] == "0,2"
    assert text[2] == "1,"
    loaded = from_edge_csv(path)
    assert loaded.n == graph.n
    assert np.array_equal(loaded.out, graph.out)
