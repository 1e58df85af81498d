import itertools
import json

import networkx as nx
import pytest
from hypothesis import given, strategies as st

from ipsmrf.exceptions import InputError
from ipsmrf.graph import (MarkedGraph, alpha_separates, ball, closure, cycle_graph,
                          erdos_renyi_graph, grid_graph, load_graph, neighborhood, path_graph,
                          save_graph, tree_graph)


def brute_separates(g, s, a, b, alpha):
    """Every simple a-b path has alpha consecutive vertices in s."""
    s = set(s)
    nxg = g.to_networkx()
    for u, w in itertools.product(a, b):
        for path in nx.all_simple_paths(nxg, u, w):
            run = best = 0
            for x in path:
                run = run + 1 if x in s else 0
                best = max(best, run)
            if best < alpha:
                return False
    return True


graphs = st.builds(lambda n, p, seed: erdos_renyi_graph(n, p, seed=seed),
                   st.integers(2, 8), st.floats(0.1, 0.7), st.integers(0, 10_000))


def test_neighborhood_examples():
    g = path_graph(5, start=1)
    assert neighborhood(g, [1], 1) == {2}
    assert neighborhood(g, [1], 2) == {2, 3}
    assert neighborhood(g, g.vertices, 3) == set()


def test_closure_examples():
    assert closure(path_graph(3, start=1), [2]) == {1, 2, 3}
    assert closure(MarkedGraph.from_edges([7], []), [7]) == {7}
    assert closure(cycle_graph(3, start=1), [1]) == {1, 2, 3}


def test_ball_examples():
    g = path_graph(5, start=1)
    assert ball(g, 3, 0) == {3}
    assert ball(g, 3, 1) == {2, 3, 4}
    two = MarkedGraph.from_edges(range(5), [(0, 1), (1, 2), (3, 4)])
    assert ball(two, 0, 10) == {0, 1, 2}


def test_alpha_separation_examples():
    p = path_graph(5, start=1)
    assert alpha_separates(p, [2, 3], [1], [4, 5], 2)
    assert not alpha_separates(p, [3], [1], [5], 2)
    assert alpha_separates(cycle_graph(6, start=1), [2, 6], [1], [4], 1)


def test_alpha_separation_needs_simple_paths():
    # a walk a-s1-v-x-v-w-b escapes, yet the only simple path a-s1-v-w-b is separated
    a, s1, v, x, w, b = range(6)
    g = MarkedGraph.from_edges(range(6), [(a, s1), (s1, v), (v, x), (v, w), (w, b)])
    assert brute_separates(g, [s1, v, w], [a], [b], 3)
    assert alpha_separates(g, [s1, v, w], [a], [b], 3)


def test_unknown_vertices_and_overlap_rejected():
    g = path_graph(3)
    with pytest.raises(InputError):
        neighborhood(g, [9], 1)
    with pytest.raises(InputError):
        closure(g, [9])
    with pytest.raises(InputError):
        ball(g, 9, 1)
    with pytest.raises(InputError):
        alpha_separates(g, [1], [1], [2], 1)


@given(graphs, st.integers(1, 4), st.data())
def test_neighborhood_invariants(g, alpha, data):
    u = data.draw(st.sets(st.sampled_from(g.vertices), min_size=1))
    n1 = neighborhood(g, u, alpha)
    assert not n1 & u
    assert n1 <= neighborhood(g, u, alpha + 1)
    dist = nx.multi_source_dijkstra_path_length(g.to_networkx(), u)
    assert n1 == {v for v, d in dist.items() if 0 < d <= alpha}


@given(graphs, st.integers(1, 3), st.data())
def test_neighborhood_separates_complement(g, alpha, data):
    a = data.draw(st.sets(st.sampled_from(g.vertices), min_size=1))
    s = neighborhood(g, a, alpha)
    b = set(g.vertices) - a - s
    if b:
        assert alpha_separates(g, s, a, b, alpha)


@given(graphs, st.integers(1, 3), st.data())
def test_alpha_separation_matches_enumeration(g, alpha, data):
    verts = list(g.vertices)
    labels = data.draw(st.lists(st.sampled_from("asb"), min_size=len(verts),
                                max_size=len(verts)))
    a = [v for v, lab in zip(verts, labels) if lab == "a"]
    b = [v for v, lab in zip(verts, labels) if lab == "b"]
    s = [v for v, lab in zip(verts, labels) if lab == "s"]
    if a and b:
        assert alpha_separates(g, s, a, b, alpha) == brute_separates(g, s, a, b, alpha)


@given(graphs, st.integers(1, 4), st.data())
def test_ball_recursion(g, n, data):
    r = data.draw(st.sampled_from(g.vertices))
    prev = ball(g, r, n - 1)
    assert ball(g, r, n) == prev | neighborhood(g, prev, 1)


def test_json_round_trip(tmp_path):
    g = grid_graph(2, 3, marks={v: v * 10 for v in range(6)})
    path = tmp_path / "g.json"
    save_graph(g, path)
    assert load_graph(path) == g
    assert MarkedGraph.from_json(json.loads(path.read_text())) == g


@pytest.mark.parametrize("data", [
    {"vertices": [{"id": 0, "mark": 0}, {"id": 0, "mark": 1}], "edges": []},
    {"vertices": [{"id": 0, "mark": 0}], "edges": [[0, 0]]},
    {"vertices": [{"id": 0, "mark": 0}, {"id": 1, "mark": 0}], "edges": [[0, 1], [1, 0]]},
    {"vertices": [{"id": 0, "mark": 0}], "edges": [[0, 5]]},
])
def test_json_rejects_invalid(data):
    with pytest.raises(InputError):
        MarkedGraph.from_json(data)


def test_builders():
    assert len(tree_graph(2, 2)) == 7
    assert len(grid_graph(3, 3).edges) == 12
    assert cycle_graph(5).degree(0) == 2
