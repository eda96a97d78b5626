import math

import numpy as np
import pytest

from topicflow.model import build_tree_from_edges, make_cut
from topicflow.postprocess import (
    DisplayGroup,
    PostParams,
    auto_focus,
    group_cut_nodes,
    window_from_similarity,
    window_size,
)

P = PostParams()


def unit(*xs):
    v = np.array(xs, dtype=float)
    return v / np.linalg.norm(v)


def test_window_threshold_branch():
    assert window_from_similarity(0.7, P) == 0.0
    assert window_from_similarity(0.6, P) == 0.0


def test_window_hand_value():
    assert window_from_similarity(0.3, P) == pytest.approx((0.6 - 0.3) * 0.8 / 0.6)
    assert window_from_similarity(0.3, P) == pytest.approx(0.4)


def test_window_boundary_zero_similarity():
    assert window_from_similarity(0.0, P) == pytest.approx(P.w_max)


def test_window_size_max_over_foci():
    c = unit(1, 0, 0)
    foci = [unit(0, 1, 0), unit(1, 0, 0)]
    assert window_size(c, foci, P) == 0.0  # second focus matches exactly


def sibling_tree(centroids, n_children):
    kids = [f"t0:0.{i}" for i in range(n_children)]
    leaf_docs = {k: [f"d{i}"] for i, k in enumerate(kids)}
    cents = {"t0:0": unit(1, 1, 1, 1)}
    cents.update({k: centroids[i] for i, k in enumerate(kids)})
    return build_tree_from_edges(0, "t0:0", {"t0:0": kids}, leaf_docs, centroids=cents)


def test_identical_siblings_one_group():
    c = unit(1, 1, 0, 0)
    tree = sibling_tree([c, c, c], 3)
    cut = make_cut(tree, set(tree.nodes[tree.root].children))
    focus = [unit(0, 0, 0, 1)]  # similarity 0 < gamma for everyone
    groups = group_cut_nodes(tree, cut, focus, None, P)
    assert len(groups) == 1
    assert groups[0].member_cut_nodes == ("t0:0.0", "t0:0.1", "t0:0.2")


def test_focus_similar_node_stays_singleton():
    c = unit(1, 1, 0, 0)
    tree = sibling_tree([c, c, unit(1, 0, 0, 0)], 3)
    cut = make_cut(tree, set(tree.nodes[tree.root].children))
    focus = [unit(1, 0, 0, 0)]  # third child has similarity 1 >= gamma
    groups = group_cut_nodes(tree, cut, focus, None, P)
    singles = [g for g in groups if g.member_cut_nodes == ("t0:0.2",)]
    assert len(singles) == 1


def test_distant_sibling_pairs_two_groups():
    # two tight pairs at cosine distance ~0.9 > window 0.4 apart
    a = unit(1.0, 0.05, 0, 0)
    b = unit(0.1, 1.0, 0, 0)
    tree = sibling_tree([a, a, b, b], 4)
    cut = make_cut(tree, set(tree.nodes[tree.root].children))
    focus = [unit(0, 0, 0, 1)]
    params = PostParams(gamma=0.6, w_max=0.8)  # window = 0.8 at s=0... keep < pair gap
    assert 1 - np.dot(a, b) > 0.8
    groups = group_cut_nodes(tree, cut, focus, None, params)
    members = sorted(g.member_cut_nodes for g in groups)
    assert members == [("t0:0.0", "t0:0.1"), ("t0:0.2", "t0:0.3")]


def test_groups_partition_and_parent_purity(rng):
    from tests.conftest import random_tree
    from topicflow.model import enumerate_cuts

    for _ in range(10):
        tree, _ = random_tree(rng, max_nodes=12)
        focus = [unit(*np.ones(20))]
        for cut in list(enumerate_cuts(tree, 100))[:10]:
            groups = group_cut_nodes(tree, cut, focus, None, P)
            all_members = [n for g in groups for n in g.member_cut_nodes]
            assert sorted(all_members) == sorted(cut.cut_nodes)
            parents = tree.parents
            for g in groups:
                ps = {parents.get(n) for n in g.member_cut_nodes}
                assert len(ps) == 1


def test_carry_over_stability():
    c1 = unit(1, 0.2, 0, 0)
    c2 = unit(0.2, 1, 0, 0)
    tree = sibling_tree([c1, c1, c2], 3)
    cut = make_cut(tree, set(tree.nodes[tree.root].children))
    focus = [unit(0, 0, 0, 1)]
    first = group_cut_nodes(tree, cut, focus, None, P)
    second = group_cut_nodes(tree, cut, focus, first, P)
    assert [g.member_cut_nodes for g in first] == [g.member_cut_nodes for g in second]
    assert any(g.carried_from is not None for g in second)


def test_determinism():
    c1 = unit(1, 0.3, 0.1, 0)
    c2 = unit(0.2, 1, 0.4, 0)
    tree = sibling_tree([c1, c2, c1, c2], 4)
    cut = make_cut(tree, set(tree.nodes[tree.root].children))
    focus = [unit(0, 0, 0, 1)]
    a = group_cut_nodes(tree, cut, focus, None, P)
    b = group_cut_nodes(tree, cut, focus, None, P)
    assert [(g.id, g.member_cut_nodes) for g in a] == [(g.id, g.member_cut_nodes) for g in b]


def first_level_tree(centroids):
    kids = [f"t0:0.{i}" for i in range(len(centroids))]
    leaf_docs = {k: [f"d{i}"] for i, k in enumerate(kids)}
    cents = {"t0:0": unit(*np.ones(len(centroids[0])))}
    cents.update({k: c for k, c in zip(kids, centroids)})
    return build_tree_from_edges(0, "t0:0", {"t0:0": kids}, leaf_docs, centroids=cents)


def test_auto_focus_single_child():
    tree = first_level_tree([unit(1, 0, 0, 0)])
    assert auto_focus(tree, P) == ["t0:0.0"]


def test_auto_focus_four_separated_clusters():
    base = np.eye(8)
    cents = []
    for c in range(4):
        for j in (0, 1):
            v = base[2 * c] + 0.15 * base[2 * c + 1] * (1 if j else -1)
            cents.append(v / np.linalg.norm(v))
    tree = first_level_tree(cents)
    got = auto_focus(tree, P)
    assert len(got) == 4
    # one representative per orthogonal block
    blocks = {int(np.argmax(tree.nodes[n].centroid)) // 2 for n in got}
    assert len(blocks) == 4


def test_auto_focus_identical_children():
    c = unit(1, 1, 0, 0)
    tree = first_level_tree([c, c, c])
    got = auto_focus(tree, P)
    assert got == ["t0:0.0"]
