import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_graph
from tagcbm.graphcore import (
    EgoNetwork,
    GraphInputError,
    GraphMLError,
    TextAttributedGraph,
    ego_network,
    from_graphml,
    khop_ball,
    to_graphml,
)


def path_graph():
    # A-B-C-D
    return TextAttributedGraph.build(["A", "B", "C", "D"], [(0, 1), (1, 2), (2, 3)])


def dense_ball(g: TextAttributedGraph, center: int, k: int) -> set[int]:
    n = g.num_nodes
    A = np.zeros((n, n), dtype=np.int64)
    for u, v in g.edges:
        A[u, v] = A[v, u] = 1
    reach = np.zeros(n, dtype=bool)
    reach[center] = True
    frontier = reach.copy()
    for _ in range(k):
        frontier = (A[frontier].sum(axis=0) > 0) & ~reach
        reach |= frontier
    return set(np.flatnonzero(reach).tolist())


def test_path_one_hop():
    ego = ego_network(path_graph(), 1, k=1, max_neighbors=20)
    assert ego.nodes == {0, 1, 2}
    assert ego.edges == {(0, 1), (1, 2)}


def test_zero_radius():
    ego = ego_network(path_graph(), 2, k=0)
    assert ego.nodes == {2} and not ego.edges


def test_star_cap_matches_seeded_sampler():
    g = TextAttributedGraph.build([f"v{i}" for i in range(26)], [(0, i) for i in range(1, 26)])
    ego = ego_network(g, 0, k=1, max_neighbors=20, seed=7)
    assert len(ego.nodes) == 21
    leaves = np.arange(1, 26)
    expected = set(np.random.default_rng(7).choice(leaves, size=20, replace=False).tolist()) | {0}
    assert ego.nodes == expected


def test_cap_not_binding_keeps_everything():
    g = TextAttributedGraph.build([f"v{i}" for i in range(6)], [(0, i) for i in range(1, 6)])
    assert ego_network(g, 0, 1, max_neighbors=5).nodes == set(range(6))


@pytest.mark.parametrize("bad", [-1, 4, 2.0, True, "1"])
def test_invalid_center(bad):
    with pytest.raises(GraphInputError):
        ego_network(path_graph(), bad, 1)


def test_negative_radius_and_cap():
    with pytest.raises(GraphInputError):
        ego_network(path_graph(), 0, -1)
    with pytest.raises(GraphInputError):
        ego_network(path_graph(), 0, 1, max_neighbors=-1)


def test_graph_invariants():
    with pytest.raises(GraphInputError):
        TextAttributedGraph.build(["a", "b"], [(0, 0)])
    with pytest.raises(GraphInputError):
        TextAttributedGraph.build(["a", "b"], [(0, 2)])
    with pytest.raises(GraphInputError):
        TextAttributedGraph.build(["a", "b"], [], labels=[0, 1], class_names=["x"])
    with pytest.raises(GraphInputError):
        TextAttributedGraph.build(["a", None], [])
    g = TextAttributedGraph.build(["", "b"], [(1, 0), (0, 1)])
    assert g.edges == {(0, 1)}
    assert g.texts == ("", "b")


def test_ego_invariants_enforced():
    with pytest.raises(GraphInputError):
        EgoNetwork(0, frozenset({1, 2}), frozenset())
    with pytest.raises(GraphInputError):
        EgoNetwork(0, frozenset({0, 1}), frozenset({(0, 2)}))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 50), st.floats(0.0, 0.3), st.integers(0, 4), st.integers(0, 10**6))
def test_ball_matches_dense_bfs(n, p, k, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p)
    center = int(rng.integers(n))
    expected = dense_ball(g, center, k)
    assert set(khop_ball(g, center, k).tolist()) == expected
    ego = ego_network(g, center, k, max_neighbors=None)
    assert ego.nodes == expected
    assert ego.edges == {e for e in g.edges if e[0] in expected and e[1] in expected}


def test_ego_deterministic(rng):
    g = random_graph(rng, 40, 0.3)
    a = ego_network(g, 3, 2, max_neighbors=5, seed=11)
    b = ego_network(g, 3, 2, max_neighbors=5, seed=11)
    assert a == b and a.edges == b.edges


def test_graphml_single_empty_node():
    doc = to_graphml(EgoNetwork(0, frozenset({0}), frozenset()), [""])
    assert doc.count("<node ") == 1 and "<edge " not in doc
    ego, texts = from_graphml(doc)
    assert ego.nodes == {0} and texts == {0: ""}


def test_graphml_deterministic():
    ego = EgoNetwork(0, frozenset({0, 1}), frozenset({(0, 1)}), 1)
    texts = {0: "x", 1: "y"}
    assert to_graphml(ego, texts) == to_graphml(ego, texts)


def test_graphml_missing_text():
    ego = EgoNetwork(0, frozenset({0, 1}), frozenset({(0, 1)}), 1)
    with pytest.raises(GraphInputError):
        to_graphml(ego, {0: "x"})


def test_graphml_round_trip_random():
    rng = np.random.default_rng(3)
    alphabet = list("ab <>&\"'\té\n\r") + ["  ", "中"]
    for _ in range(100):
        g = random_graph(rng, int(rng.integers(1, 12)), 0.35)
        texts = ["".join(rng.choice(alphabet, size=int(rng.integers(0, 8)))) for _ in range(g.num_nodes)]
        center = int(rng.integers(g.num_nodes))
        ego = ego_network(g, center, 2, max_neighbors=None)
        back, got = from_graphml(to_graphml(ego, texts))
        assert back.center == center
        assert back.nodes == ego.nodes
        assert back.edges == ego.edges
        assert got == {u: texts[u] for u in ego.nodes}


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_graphml_injective(data):
    def triple():
        n = data.draw(st.integers(1, 4))
        pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
        edges = frozenset(data.draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else [])
        texts = {u: data.draw(st.text(alphabet="ab <&", max_size=3)) for u in range(n)}
        return EgoNetwork(0, frozenset(range(n)), edges, 0), texts

    (e1, t1), (e2, t2) = triple(), triple()
    same = e1.nodes == e2.nodes and e1.edges == e2.edges and t1 == t2
    assert (to_graphml(e1, t1) == to_graphml(e2, t2)) == same


@pytest.mark.parametrize("doc,line", [
    ('<?xml version="1.0"?>\n<graphml>\n  <graph id="ego_n0" edgedefault="undirected">\n    <node id="n0">\n',
     5),
    ('<graphml>\n<graph id="ego_n0" edgedefault="directed"></graph></graphml>', 2),
    ('<graphml>\n<graph id="ego_n0" edgedefault="undirected">\n<node id="x1"/></graph></graphml>', 3),
])
def test_graphml_malformed_reports_position(doc, line):
    with pytest.raises(GraphMLError) as err:
        from_graphml(doc)
    assert err.value.line == line
    assert err.value.column >= 1
    assert f"line {line}" in str(err.value)


def test_graphml_rejects_unrepresentable_text():
    ego = EgoNetwork(0, frozenset({0}), frozenset())
    with pytest.raises(GraphInputError):
        to_graphml(ego, ["bell\x07"])


def test_json_round_trip(tmp_path, rng):
    g = random_graph(rng, 15, 0.3, labels=3)
    path = tmp_path / "g.json"
    g.save(path)
    back = TextAttributedGraph.load(path)
    assert back == g
    assert json.loads(path.read_text())["class_names"] == ["c0", "c1", "c2"]


def test_json_malformed():
    with pytest.raises(GraphInputError):
        TextAttributedGraph.from_json({"edges": []})
