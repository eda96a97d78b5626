import math

import numpy as np
import pytest

from topicflow.dcm import DcmParams, log_predictive
from topicflow.model import (
    FocusSet,
    Focus,
    TreeMapping,
    build_tree_from_edges,
    enumerate_cuts,
    make_cut,
    with_centroids,
)
from topicflow.treecut import (
    CutParams,
    CutScorer,
    cosine,
    cut_log_likelihood,
    energy_e1,
    energy_e2,
    log_posterior,
    objective,
    project_cut,
    solve_exact,
    solve_stream,
)
from tests.conftest import random_tree


PARAMS = CutParams(lam=1.0, rng_seed=0)


def unit(*xs):
    v = np.array(xs, dtype=float)
    return v / np.linalg.norm(v)


def test_cosine_identity_and_clamp():
    a = unit(1, 0)
    assert cosine(a, a) == pytest.approx(1.0)
    assert cosine(unit(1, 0), unit(0, 1)) == pytest.approx(1e-6)
    assert cosine(unit(1, 0), unit(1, 1)) == pytest.approx(math.sqrt(0.5), abs=1e-12)


def three_node_tree(sim_bc):
    # root A over leaves B, C with S(B, C) = sim_bc
    b = np.array([1.0, 0.0, 0.0])
    c = np.array([sim_bc, math.sqrt(max(0.0, 1 - sim_bc**2)), 0.0])
    cents = {"t0:0": unit(1, 1, 1), "t0:0.0": b, "t0:0.1": c}
    return build_tree_from_edges(
        0,
        "t0:0",
        {"t0:0": ["t0:0.0", "t0:0.1"]},
        {"t0:0.0": ["d1"], "t0:0.1": ["d2"]},
        centroids=cents,
    )


def test_energy_e1_identical_centroids_zero(rng):
    tree, _ = random_tree(rng, max_nodes=7)
    same = unit(1, 2, 3)
    tree = build_tree_from_edges(
        0,
        tree.root,
        {nid: list(n.children) for nid, n in tree.nodes.items() if n.children},
        {nid: sorted(n.doc_ids) for nid, n in tree.nodes.items() if not n.children},
        centroids={nid: same for nid in tree.nodes},
    )
    for cut in enumerate_cuts(tree, 1000):
        assert energy_e1(tree, cut, PARAMS) == pytest.approx(0.0, abs=1e-12)


def test_energy_e1_hand_value():
    tree = three_node_tree(0.5)
    cut = make_cut(tree, {"t0:0.0", "t0:0.1"})  # labels: root 1, leaves 0
    assert energy_e1(tree, cut, PARAMS) == pytest.approx(2 * -math.log(0.5), abs=1e-9)


def test_energy_e1_clamped():
    tree = three_node_tree(0.0)
    cut = make_cut(tree, {"t0:0.0", "t0:0.1"})
    assert energy_e1(tree, cut, PARAMS) == pytest.approx(2 * -math.log(1e-6), abs=1e-6)


def test_energy_e1_matches_bruteforce(rng):
    """Independent per-node min loop vs the vectorized implementation."""
    for _ in range(20):
        tree, _ = random_tree(rng, max_nodes=10)
        for cut in enumerate_cuts(tree, 1000):
            expect = 0.0
            for r in tree.nodes.values():
                peers = [
                    s
                    for s in tree.nodes.values()
                    if s.id != r.id and cut.labels[s.id] == cut.labels[r.id]
                ]
                if peers:
                    expect += min(-math.log(cosine(r.centroid, s.centroid)) for s in peers)
            assert energy_e1(tree, cut, PARAMS) == pytest.approx(expect, abs=1e-9)


def two_step_trees():
    t0 = three_node_tree(0.5)
    t1 = build_tree_from_edges(
        1,
        "t1:0",
        {"t1:0": ["t1:0.0", "t1:0.1"]},
        {"t1:0.0": ["e1"], "t1:0.1": ["e2"]},
        centroids={k: unit(1, 0, 0) for k in ["t1:0", "t1:0.0", "t1:0.1"]},
    )
    return t0, t1


def test_energy_e2_cases():
    t0, t1 = two_step_trees()
    cut0 = make_cut(t0, {"t0:0.0", "t0:0.1"})
    cut1 = make_cut(t1, {"t1:0.0", "t1:0.1"})
    identity = TreeMapping(
        0, 1, (("t1:0", "t0:0", 1.0), ("t1:0.0", "t0:0.0", 1.0), ("t1:0.1", "t0:0.1", 1.0)), ()
    )
    assert energy_e2(cut1, cut0, identity) == 0.0
    # one pair with differing labels
    m = TreeMapping(0, 1, (("t1:0.0", "t0:0", 0.8),), ())
    # t1:0.0 is a cut node (label 0); t0:0 has label 1 under the leaf cut
    assert energy_e2(cut1, cut0, m) == pytest.approx(0.8)
    empty = TreeMapping(0, 1, (), ())
    assert energy_e2(cut1, cut0, empty) == 0.0
    # invariant to pair order
    pairs = (("t1:0.0", "t0:0", 0.8), ("t1:0.1", "t0:0.1", 0.3), ("t1:0", "t0:0.0", 0.4))
    a = energy_e2(cut1, cut0, TreeMapping(0, 1, pairs, ()))
    b = energy_e2(cut1, cut0, TreeMapping(0, 1, tuple(reversed(pairs)), ()))
    assert a == pytest.approx(b, abs=1e-12)


def focus_of(ids, vectors, time_index=0, node="f"):
    return FocusSet((Focus(time_index, node, frozenset(ids)),))


def test_cut_log_likelihood_root_cut(rng):
    tree, vectors = random_tree(rng, max_nodes=9)
    dcm = DcmParams.symmetric(20, 0.01)
    root_cut = make_cut(tree, {tree.root})
    focus_ids = sorted(tree.nodes[tree.root].doc_ids)[:5]
    foci = focus_of(focus_ids, vectors)
    got = cut_log_likelihood(tree, root_cut, foci, vectors, dcm)
    union = set(focus_ids) | set(tree.nodes[tree.root].doc_ids)
    from topicflow.dcm import log_marginal

    expect = log_marginal([vectors[d] for d in sorted(union)], dcm) - log_marginal(
        [vectors[d] for d in sorted(tree.nodes[tree.root].doc_ids)], dcm
    )
    assert got == pytest.approx(expect, abs=1e-9)


def test_cut_log_likelihood_omega_weights():
    # two cut nodes holding 1 and 3 docs: omega = (0.25, 0.75)
    vectors = {f"d{i}": {i % 3: 1 + i} for i in range(4)}
    vectors["f"] = {0: 2, 1: 1}
    tree = build_tree_from_edges(
        0,
        "r",
        {"r": ["a", "b"]},
        {"a": ["d0"], "b": ["d1", "d2", "d3"]},
    )
    tree = with_centroids(tree, vectors, 4)
    dcm = DcmParams.symmetric(4, 0.01)
    cut = make_cut(tree, {"a", "b"})
    foci = focus_of(["f"], vectors)
    got = cut_log_likelihood(tree, cut, foci, vectors, dcm)
    pa = log_predictive([vectors["f"]], [vectors["d0"]], dcm)
    pb = log_predictive([vectors["f"]], [vectors["d1"], vectors["d2"], vectors["d3"]], dcm)
    expect = math.log(0.25 * math.exp(pa) + 0.75 * math.exp(pb))
    assert got == pytest.approx(expect, abs=1e-9)
    # two identical foci double the value
    foci2 = FocusSet((foci.foci[0], Focus(0, "f2", frozenset(["f"]))))
    assert cut_log_likelihood(tree, cut, foci2, vectors, dcm) == pytest.approx(2 * got, abs=1e-9)


def test_log_posterior_prior(rng):
    tree, vectors = random_tree(rng, max_nodes=9)
    dcm = DcmParams.symmetric(20, 0.01)
    cut = next(iter(enumerate_cuts(tree, 1000)))
    foci = focus_of(sorted(tree.nodes[tree.root].doc_ids)[:3], vectors)
    ll = cut_log_likelihood(tree, cut, foci, vectors, dcm)
    assert log_posterior(tree, cut, foci, vectors, dcm, CutParams(lam=0.0)) == pytest.approx(ll)
    got = log_posterior(tree, cut, foci, vectors, dcm, CutParams(lam=1.0))
    assert got == pytest.approx(ll - len(cut.cut_nodes), abs=1e-12)


def test_objective_decomposition(rng):
    dcm = DcmParams.symmetric(20, 0.01)
    for _ in range(5):
        tree, vectors = random_tree(rng, max_nodes=10)
        foci = focus_of(sorted(tree.nodes[tree.root].doc_ids)[:4], vectors)
        for cut in enumerate_cuts(tree, 200):
            score = objective(tree, cut, None, None, foci, vectors, dcm, PARAMS)
            assert score.total == pytest.approx(
                score.log_fit + score.log_smooth + score.log_likelihood + score.log_prior,
                abs=1e-12,
            )
            assert score.log_smooth == 0.0  # first step drops the smoothness factor


def brute_force_argmax(tree, prev_cut, mapping, foci, vectors, dcm, params):
    best = None
    for cut in enumerate_cuts(tree, params.max_enumeration):
        score = objective(tree, cut, prev_cut, mapping, foci, vectors, dcm, params)
        key = (len(cut.cut_nodes), tuple(sorted(cut.cut_nodes)))
        if best is None or score.total > best[1].total or (
            score.total == best[1].total
            and key < (len(best[0].cut_nodes), tuple(sorted(best[0].cut_nodes)))
        ):
            best = (cut, score)
    return best


def test_solve_exact_matches_bruteforce(rng):
    dcm = DcmParams.symmetric(20, 0.01)
    for trial in range(15):
        tree, vectors = random_tree(rng, max_nodes=12)
        docs = sorted(tree.nodes[tree.root].doc_ids)
        foci = focus_of(docs[: 1 + trial % 4], vectors)
        got_cut, got_score = solve_exact(tree, None, None, foci, vectors, dcm, PARAMS)
        want_cut, want_score = brute_force_argmax(tree, None, None, foci, vectors, dcm, PARAMS)
        assert got_cut.cut_nodes == want_cut.cut_nodes
        assert got_score.total == pytest.approx(want_score.total, abs=1e-9)


def copied_focus(vectors, doc_ids, prefix="fcopy"):
    """Content-identical copies under fresh ids (a user's exemplar documents)."""
    new_ids = []
    for i, d in enumerate(sorted(doc_ids)):
        nid = f"{prefix}{i}"
        vectors[nid] = dict(vectors[d])
        new_ids.append(nid)
    return new_ids


def concentration_tree():
    vectors = {
        "a1": {0: 3, 1: 2},
        "a2": {0: 2, 1: 3},
        "b1": {5: 3, 6: 2},
        "b2": {6: 3, 7: 2},
    }
    same = unit(1, 1, 1, 1, 1, 1, 1, 1)
    tree = build_tree_from_edges(
        0,
        "r",
        {"r": ["a", "b"]},
        {"a": ["a1", "a2"], "b": ["b1", "b2"]},
        centroids={"r": same, "a": same, "b": same},
    )
    return tree, vectors


def test_solve_exact_focus_concentration_and_prior():
    tree, vectors = concentration_tree()
    dcm = DcmParams.symmetric(8, 0.01)
    ids = copied_focus(vectors, ["a1", "a2"])
    foci = focus_of(ids, vectors)
    cut0, _ = solve_exact(tree, None, None, foci, vectors, dcm, CutParams(lam=0.0))
    assert cut0.cut_nodes == frozenset({"a", "b"})
    cut10, _ = solve_exact(tree, None, None, foci, vectors, dcm, CutParams(lam=10.0))
    assert cut10.cut_nodes == frozenset({"r"})


def test_monotone_lambda_nonincreasing_cut_size(rng):
    dcm = DcmParams.symmetric(20, 0.01)
    for _ in range(8):
        tree, vectors = random_tree(rng, max_nodes=10)
        foci = focus_of(sorted(tree.nodes[tree.root].doc_ids)[:3], vectors)
        sizes = []
        for lam in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0]:
            cut, _ = solve_exact(tree, None, None, foci, vectors, dcm, CutParams(lam=lam))
            sizes.append(len(cut.cut_nodes))
        assert sizes == sorted(sizes, reverse=True)


def identity_mapping(tree_a, tree_b):
    pairs = []
    for nid in sorted(tree_a.nodes):
        other = nid.replace(f"t{tree_a.time_index}:", f"t{tree_b.time_index}:")
        if other in tree_b.nodes:
            pairs.append((other, nid, 1.0))
    return TreeMapping(tree_a.time_index, tree_b.time_index, tuple(pairs), ())


def shifted_copy(tree, new_time):
    ren = lambda nid: nid.replace(f"t{tree.time_index}:", f"t{new_time}:")
    children = {
        ren(nid): [ren(c) for c in n.children] for nid, n in tree.nodes.items() if n.children
    }
    leaf_docs = {ren(nid): sorted(n.doc_ids) for nid, n in tree.nodes.items() if not n.children}
    cents = {ren(nid): n.centroid for nid, n in tree.nodes.items()}
    return build_tree_from_edges(new_time, ren(tree.root), children, leaf_docs, centroids=cents)


def test_project_cut_identity_and_fallback(rng):
    tree, vectors = random_tree(rng, max_nodes=12)
    t1 = shifted_copy(tree, 1)
    mapping = identity_mapping(tree, t1)
    for cut in enumerate_cuts(tree, 500):
        projected = project_cut(cut, mapping, t1)
        expect = {nid.replace("t0:", "t1:") for nid in cut.cut_nodes}
        assert projected.cut_nodes == frozenset(expect)
    empty = TreeMapping(0, 1, (), ())
    some_cut = next(iter(enumerate_cuts(tree, 500)))
    assert project_cut(some_cut, empty, t1).cut_nodes == frozenset({t1.root})


def test_project_cut_repair_descent():
    # 6-node tree: root -> A, B; A -> g, g2. Marked node is only the grandchild g.
    t1 = build_tree_from_edges(
        1,
        "t1:0",
        {"t1:0": ["t1:0.0", "t1:0.1"], "t1:0.0": ["t1:0.0.0", "t1:0.0.1"]},
        {"t1:0.0.0": ["x1"], "t1:0.0.1": ["x2"], "t1:0.1": ["x3"]},
    )
    t0 = build_tree_from_edges(0, "t0:0", {}, {"t0:0": ["d"]})
    prev = make_cut(t0, {"t0:0"})
    mapping = TreeMapping(0, 1, (("t1:0.0.0", "t0:0", 0.9),), ())
    got = project_cut(prev, mapping, t1)
    assert got.cut_nodes == frozenset({"t1:0.0.0", "t1:0.0.1", "t1:0.1"})


def test_solve_stream_delegates_when_enumerable(rng):
    dcm = DcmParams.symmetric(20, 0.01)
    tree, vectors = random_tree(rng, max_nodes=12)
    foci = focus_of(sorted(tree.nodes[tree.root].doc_ids)[:3], vectors)
    exact = solve_exact(tree, None, None, foci, vectors, dcm, PARAMS)
    stream = solve_stream(tree, None, None, foci, vectors, dcm, PARAMS)
    assert stream[0].cut_nodes == exact[0].cut_nodes


def test_solve_stream_heuristic_quality_gate(rng):
    """Forced-heuristic runs reach the exact optimum in >= 90 of 100 trials."""
    dcm = DcmParams.symmetric(20, 0.01)
    heuristic_params = CutParams(lam=1.0, max_enumeration=0, restarts=5, rng_seed=9)
    hits = 0
    for trial in range(100):
        tree, vectors = random_tree(rng, max_nodes=12, docs_per_slice=20)
        foci = focus_of(sorted(tree.nodes[tree.root].doc_ids)[: 1 + trial % 3], vectors)
        _, h_score = solve_stream(tree, None, None, foci, vectors, dcm, heuristic_params)
        _, e_score = solve_exact(tree, None, None, foci, vectors, dcm, PARAMS)
        if h_score.total >= e_score.total - 1e-9:
            hits += 1
    assert hits >= 90


def test_solve_stream_deterministic(rng):
    dcm = DcmParams.symmetric(20, 0.01)
    tree, vectors = random_tree(rng, max_nodes=14)
    foci = focus_of(sorted(tree.nodes[tree.root].doc_ids)[:2], vectors)
    params = CutParams(lam=1.0, max_enumeration=0, restarts=4, rng_seed=42)
    a = solve_stream(tree, None, None, foci, vectors, dcm, params)
    b = solve_stream(tree, None, None, foci, vectors, dcm, params)
    assert a[0].cut_nodes == b[0].cut_nodes
    assert a[1].total == b[1].total


def test_scorer_matches_standalone_objective(rng):
    dcm = DcmParams.symmetric(20, 0.01)
    tree, vectors = random_tree(rng, max_nodes=12)
    t1 = shifted_copy(tree, 1)
    mapping = identity_mapping(tree, t1)
    prev = next(iter(enumerate_cuts(tree, 500)))
    vecs = dict(vectors)
    foci = focus_of(sorted(tree.nodes[tree.root].doc_ids)[:3], vecs)
    scorer = CutScorer(t1, prev, mapping, foci, vecs, dcm, PARAMS)
    for cut in enumerate_cuts(t1, 300):
        fast = scorer.score(cut.cut_nodes)
        slow = objective(t1, cut, prev, mapping, foci, vecs, dcm, PARAMS)
        assert fast.total == pytest.approx(slow.total, abs=1e-9)
        assert fast.log_fit == pytest.approx(slow.log_fit, abs=1e-9)
        assert fast.log_smooth == pytest.approx(slow.log_smooth, abs=1e-9)
        assert fast.log_likelihood == pytest.approx(slow.log_likelihood, abs=1e-9)


def test_e1_flip_delta_matches_full(rng):
    dcm = DcmParams.symmetric(20, 0.01)
    for _ in range(10):
        tree, vectors = random_tree(rng, max_nodes=12)
        foci = focus_of(sorted(tree.nodes[tree.root].doc_ids)[:2], vectors)
        scorer = CutScorer(tree, None, None, foci, vectors, dcm, PARAMS)
        for cut in list(enumerate_cuts(tree, 60))[:20]:
            labels = scorer.labels_array(cut.cut_nodes)
            state = scorer.e1_state(labels)
            for v in range(labels.size):
                flipped = labels.copy()
                flipped[v] = 1 - flipped[v]
                want, _, _ = scorer.e1_state(flipped)
                got = scorer.e1_after_flip(labels, state, v)
                assert got == pytest.approx(want, abs=1e-9)
