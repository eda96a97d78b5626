import itertools
import math

import numpy as np
import pytest

from topicflow.dcm import DcmParams
from topicflow.errors import EmptyAlignment, NonSquare
from topicflow.metrics import (
    DoiParams,
    compose_doc_alignment,
    doi_baseline_cut,
    fitness,
    hungarian,
    smoothness_dist,
    smoothness_map,
    smoothness_nmi,
)
from topicflow.model import (
    Focus,
    FocusSet,
    TreeMapping,
    build_tree_from_edges,
    enumerate_cuts,
    make_cut,
)
from topicflow.treecut import CutParams, cut_log_likelihood, energy_e1
from tests.conftest import random_tree

PARAMS = CutParams()


def unit(*xs):
    v = np.array(xs, dtype=float)
    return v / np.linalg.norm(v)


def test_fitness_single_cut_node_identical_centroids(rng):
    tree, vectors = random_tree(rng, max_nodes=8)
    same = unit(*np.ones(20))
    tree = build_tree_from_edges(
        0,
        tree.root,
        {nid: list(n.children) for nid, n in tree.nodes.items() if n.children},
        {nid: sorted(n.doc_ids) for nid, n in tree.nodes.items() if not n.children},
        centroids={nid: same for nid in tree.nodes},
    )
    cut = make_cut(tree, {tree.root})
    dcm = DcmParams.symmetric(20, 0.01)
    foci = FocusSet((Focus(0, "f", frozenset(sorted(tree.nodes[tree.root].doc_ids)[:4])),))
    got = fitness(tree, cut, foci, vectors, dcm, PARAMS)
    expect = cut_log_likelihood(tree, cut, foci, vectors, dcm)  # E1 = 0
    assert got == pytest.approx(expect, abs=1e-9)
    # lambda never enters F
    assert fitness(tree, cut, foci, vectors, dcm, CutParams(lam=25.0)) == pytest.approx(got)


def test_fitness_ordering_matches_hand_enumeration(rng):
    tree, vectors = random_tree(rng, max_nodes=3)
    dcm = DcmParams.symmetric(20, 0.01)
    foci = FocusSet((Focus(0, "f", frozenset(sorted(tree.nodes[tree.root].doc_ids)[:3])),))
    cuts = list(enumerate_cuts(tree, 100))
    vals = [fitness(tree, c, foci, vectors, dcm, PARAMS) for c in cuts]
    hand = [
        -energy_e1(tree, c, PARAMS) + cut_log_likelihood(tree, c, foci, vectors, dcm)
        for c in cuts
    ]
    assert np.argsort(vals).tolist() == np.argsort(hand).tolist()


def two_cuts_with_mapping():
    t0 = build_tree_from_edges(
        0, "t0:0", {"t0:0": ["t0:0.0", "t0:0.1"]}, {"t0:0.0": ["a"], "t0:0.1": ["b"]}
    )
    t1 = build_tree_from_edges(
        1, "t1:0", {"t1:0": ["t1:0.0", "t1:0.1"]}, {"t1:0.0": ["c"], "t1:0.1": ["d"]}
    )
    return t0, t1


def test_smoothness_map_cases():
    t0, t1 = two_cuts_with_mapping()
    leaf0 = make_cut(t0, {"t0:0.0", "t0:0.1"})
    leaf1 = make_cut(t1, {"t1:0.0", "t1:0.1"})
    identity = TreeMapping(
        0, 1, (("t1:0", "t0:0", 1.0), ("t1:0.0", "t0:0.0", 1.0), ("t1:0.1", "t0:0.1", 1.0)), ()
    )
    assert smoothness_map(leaf1, leaf0, identity) == 0.0
    root1 = make_cut(t1, {"t1:0"})
    single = TreeMapping(0, 1, (("t1:0.0", "t0:0.0", 0.8),), ())
    # previous labels the leaf 0; the root cut labels t1:0.0 as 0 too -> 0
    assert smoothness_map(root1, leaf0, single) == 0.0
    # differing labels on the single mapped pair
    root0 = make_cut(t0, {"t0:0"})
    leaf_pair = TreeMapping(0, 1, (("t1:0", "t0:0", 0.8),), ())
    assert smoothness_map(leaf1, root0, leaf_pair) == pytest.approx(-0.8)
    assert smoothness_map(leaf1, leaf0, TreeMapping(0, 1, (), ())) == 0.0


def test_hungarian_identity():
    m = np.ones((4, 4)) - np.eye(4)
    perm, cost = hungarian(m)
    assert perm == (0, 1, 2, 3)
    assert cost == 0.0


def test_hungarian_hand_case():
    perm, cost = hungarian([[1, 2], [2, 4]])
    assert perm == (1, 0)
    assert cost == 4.0


def test_hungarian_rejects_non_square():
    with pytest.raises(NonSquare):
        hungarian(np.zeros((2, 3)))


def test_hungarian_lexicographic_tie_break():
    perm, cost = hungarian(np.zeros((3, 3)))
    assert perm == (0, 1, 2)
    assert cost == 0.0
    # two optima: (0,1) and (1,0) both cost 2 -> pick (0,1)
    perm, _ = hungarian([[1, 1], [1, 1]])
    assert perm == (0, 1)


def brute_force_assignment(mat):
    n = len(mat)
    best = None
    for perm in itertools.permutations(range(n)):
        c = sum(mat[i][perm[i]] for i in range(n))
        if best is None or c < best[1] - 1e-12 or (abs(c - best[1]) <= 1e-12 and perm < best[0]):
            best = (perm, c)
    return best


def test_hungarian_matches_bruteforce_small(rng):
    for _ in range(60):
        n = int(rng.integers(1, 8))
        mat = rng.uniform(0, 10, size=(n, n))
        perm, cost = hungarian(mat)
        want_perm, want_cost = brute_force_assignment(mat.tolist())
        assert cost == pytest.approx(want_cost, abs=1e-9)
        assert perm == want_perm


def test_hungarian_beats_random_permutations(rng):
    mat = rng.uniform(0, 5, size=(9, 9))
    _, cost = hungarian(mat)
    for _ in range(100):
        perm = rng.permutation(9)
        assert cost <= sum(mat[i][perm[i]] for i in range(9)) + 1e-9


def nmi_fixture(groups_k, groups_t):
    def tree_of(time, groups):
        kids = [f"t{time}:0.{i}" for i in range(len(groups))]
        leaf_docs = {k: g for k, g in zip(kids, groups)}
        return build_tree_from_edges(time, f"t{time}:0", {f"t{time}:0": kids}, leaf_docs)

    tk = tree_of(0, groups_k)
    tt = tree_of(1, groups_t)
    cut_k = make_cut(tk, set(tk.nodes[tk.root].children))
    cut_t = make_cut(tt, set(tt.nodes[tt.root].children))
    return tt, cut_t, tk, cut_k


def test_nmi_identical_partitions():
    tt, cut_t, tk, cut_k = nmi_fixture([["1", "2"], ["3", "4"]], [["1", "2"], ["3", "4"]])
    align = [(d, d) for d in "1234"]
    assert smoothness_nmi(cut_t, tt, cut_k, tk, align) == pytest.approx(1.0)


def test_nmi_independent_2x2():
    tt, cut_t, tk, cut_k = nmi_fixture([["1", "2"], ["3", "4"]], [["1", "3"], ["2", "4"]])
    align = [(d, d) for d in "1234"]
    assert smoothness_nmi(cut_t, tt, cut_k, tk, align) == pytest.approx(0.0, abs=1e-12)


def test_nmi_single_cluster_convention():
    tt, cut_t, tk, cut_k = nmi_fixture([["1", "2", "3", "4"]], [["1", "3"], ["2", "4"]])
    align = [(d, d) for d in "1234"]
    assert smoothness_nmi(cut_t, tt, cut_k, tk, align) == 0.0


def test_nmi_symmetry_and_range(rng):
    for _ in range(20):
        docs = [str(i) for i in range(8)]
        split_a = [list(docs[:4]), list(docs[4:])]
        k = int(rng.integers(1, 7))
        split_b = [list(docs[:k]), list(docs[k:])]
        tt, cut_t, tk, cut_k = nmi_fixture(split_a, split_b)
        align = [(d, d) for d in docs]
        v = smoothness_nmi(cut_t, tt, cut_k, tk, align)
        swapped = smoothness_nmi(cut_k, tk, cut_t, tt, [(b, a) for a, b in align])
        assert v == pytest.approx(swapped, abs=1e-12)
        assert 0.0 <= v <= 1.0


def test_nmi_empty_alignment():
    tt, cut_t, tk, cut_k = nmi_fixture([["1"]], [["2"]])
    with pytest.raises(EmptyAlignment):
        smoothness_nmi(cut_t, tt, cut_k, tk, [("zz", "yy")])


def test_compose_alignment_joins_steps():
    m01 = TreeMapping(0, 1, (), (("a0", "a1", 0.9), ("b0", "b1", 0.8)))
    m12 = TreeMapping(1, 2, (), (("a1", "a2", 0.9),))
    assert compose_doc_alignment([m01, m12], 0, 1) == [("a0", "a1"), ("b0", "b1")]
    assert compose_doc_alignment([m01, m12], 0, 2) == [("a0", "a2")]


def chain_tree(time, depth_docs):
    # root with two subtrees of depth 2 to give varied pair distances
    t = f"t{time}"
    children = {
        f"{t}:0": [f"{t}:0.0", f"{t}:0.1"],
        f"{t}:0.0": [f"{t}:0.0.0", f"{t}:0.0.1"],
        f"{t}:0.1": [f"{t}:0.1.0", f"{t}:0.1.1"],
    }
    leaves = [f"{t}:0.0.0", f"{t}:0.0.1", f"{t}:0.1.0", f"{t}:0.1.1"]
    leaf_docs = {leaf: [f"{t}d{i}"] for i, leaf in enumerate(leaves)}
    return build_tree_from_edges(time, f"{t}:0", children, leaf_docs)


def test_smoothness_dist_identity():
    t0 = chain_tree(0, 1)
    t1 = chain_tree(1, 1)
    pairs = tuple(
        (nid.replace("t0:", "t1:"), nid, 1.0) for nid in sorted(t0.nodes)
    )
    mapping = TreeMapping(0, 1, pairs, ())
    cut0 = make_cut(t0, {"t0:0.0", "t0:0.1"})
    cut1 = make_cut(t1, {"t1:0.0", "t1:0.1"})
    assert smoothness_dist(cut1, cut0, t1, t0, [mapping]) == pytest.approx(0.0)


def test_smoothness_dist_hand_case():
    # two cut nodes at distance 2 in tree t, mapped to nodes at distance 4 in tree k
    tk = build_tree_from_edges(
        0,
        "t0:0",
        {
            "t0:0": ["t0:0.0", "t0:0.1"],
            "t0:0.0": ["t0:0.0.0", "t0:0.0.1"],
            "t0:0.1": ["t0:0.1.0", "t0:0.1.1"],
        },
        {
            "t0:0.0.0": ["k1"],
            "t0:0.0.1": ["k2"],
            "t0:0.1.0": ["k3"],
            "t0:0.1.1": ["k4"],
        },
    )
    tt = build_tree_from_edges(
        1,
        "t1:0",
        {"t1:0": ["t1:0.0", "t1:0.1"]},
        {"t1:0.0": ["x1"], "t1:0.1": ["x2"]},
    )
    cut_t = make_cut(tt, {"t1:0.0", "t1:0.1"})  # distance 2 at t
    # all four leaves form the cut; only two are mapped, so the pair average
    # runs over the single mapped pair at distance 4
    cut_k = make_cut(tk, {"t0:0.0.0", "t0:0.0.1", "t0:0.1.0", "t0:0.1.1"})
    mapping = TreeMapping(
        0,
        1,
        (("t1:0.0", "t0:0.0.0", 1.0), ("t1:0.1", "t0:0.1.0", 1.0)),
        (),
    )
    got = smoothness_dist(cut_t, cut_k, tt, tk, [mapping])
    assert got == pytest.approx(-4.0)


def test_smoothness_dist_single_node_cuts():
    t0 = chain_tree(0, 1)
    t1 = chain_tree(1, 1)
    mapping = TreeMapping(1 - 1, 1, (("t1:0", "t0:0", 1.0),), ())
    cut0 = make_cut(t0, {"t0:0"})
    cut1 = make_cut(t1, {"t1:0"})
    assert smoothness_dist(cut1, cut0, t1, t0, [mapping]) == 0.0


def test_smoothness_dist_never_positive(rng):
    for _ in range(10):
        t0 = chain_tree(0, 1)
        t1 = chain_tree(1, 1)
        ids0 = sorted(t0.nodes)
        ids1 = sorted(t1.nodes)
        pairs = tuple(
            (ids1[int(rng.integers(0, len(ids1)))], ids0[int(rng.integers(0, len(ids0)))], float(rng.uniform(0.1, 1)))
            for _ in range(6)
        )
        mapping = TreeMapping(0, 1, pairs, ())
        for cut0 in enumerate_cuts(t0, 50):
            for cut1 in enumerate_cuts(t1, 50):
                assert smoothness_dist(cut1, cut0, t1, t0, [mapping]) <= 1e-12


def doi_tree():
    cents = {
        "r": unit(1, 1, 0, 0),
        "a": unit(1, 0, 0, 0),
        "b": unit(0, 1, 0, 0),
    }
    return build_tree_from_edges(
        0, "r", {"r": ["a", "b"]}, {"a": ["d1"], "b": ["d2"]}, centroids=cents
    )


def test_doi_focus_leaf_selected():
    tree = doi_tree()
    params = DoiParams(tree_decay=0.1, time_decay=0.5, budget_lambda=0.0)
    cut, doi = doi_baseline_cut(tree, None, [unit(1, 0, 0, 0)], None, params)
    assert "a" in cut.cut_nodes
    assert doi["a"] == pytest.approx(1.0)


def test_doi_large_budget_collapses_to_root():
    tree = doi_tree()
    params = DoiParams(budget_lambda=100.0)
    cut, _ = doi_baseline_cut(tree, None, [unit(1, 0, 0, 0)], None, params)
    assert cut.cut_nodes == frozenset({"r"})


def test_doi_uniform_zero_budget_prefers_leaves():
    tree = doi_tree()
    params = DoiParams(budget_lambda=0.0)
    same = unit(1, 1, 0, 0)
    cents = {nid: same for nid in tree.nodes}
    tree2 = build_tree_from_edges(
        0, "r", {"r": ["a", "b"]}, {"a": ["d1"], "b": ["d2"]}, centroids=cents
    )
    cut, doi = doi_baseline_cut(tree2, None, [same], None, params)
    assert cut.cut_nodes == frozenset({"a", "b"})
    assert doi["a"] == pytest.approx(doi["b"])


def test_doi_temporal_lift():
    tree0 = doi_tree()
    params = DoiParams(tree_decay=0.5, time_decay=0.5, budget_lambda=0.0)
    _, doi0 = doi_baseline_cut(tree0, None, [unit(1, 0, 0, 0)], None, params)
    tree1 = build_tree_from_edges(
        1,
        "r1",
        {"r1": ["a1", "b1"]},
        {"a1": ["e1"], "b1": ["e2"]},
        centroids={"r1": unit(0, 0, 1, 1), "a1": unit(0, 0, 1, 0), "b1": unit(0, 0, 0, 1)},
    )
    mapping = TreeMapping(0, 1, (("a1", "a", 1.0),), ())
    _, doi1 = doi_baseline_cut(tree1, doi0, [unit(1, 0, 0, 0)], mapping, params)
    # a1 has zero focus similarity but inherits 0.5 * doi0[a]
    assert doi1["a1"] == pytest.approx(0.5 * doi0["a"])
