"""Streaming tree-cut optimizer.

The score of a candidate cut decomposes in log domain into four parts:
content fit of the labeling (-E1), smoothness against the previous cut under
the tree mapping (-E2), the focus-set predictive log-likelihood, and a node
count prior -lambda*|C|. Exact mode enumerates every valid cut under a
budget; streaming mode runs steepest-ascent local search (EXPAND/COLLAPSE
moves) from a projection of the previous cut, with seeded random restarts.

Determinism rules: every reduction over an unordered set iterates in sorted
order, and every argmax tie breaks by fewer cut nodes, then by the
lexicographically smallest sorted node-id list.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dcm import DcmParams, DocSetMarginals
from .errors import LimitExceeded
from .model import (
    FocusSet,
    SparseVec,
    TopicTree,
    TreeCut,
    TreeMapping,
    count_cuts,
    derive_labels,
    enumerate_cuts,
    make_cut,
)

SIM_FLOOR_DEFAULT = 1e-6


@dataclass(frozen=True)
class CutParams:
    lam: float = 1.0
    sim_floor: float = SIM_FLOOR_DEFAULT
    max_enumeration: int = 100_000
    restarts: int = 5
    rng_seed: int = 0
    max_perturb_steps: int = 10

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not (0 < self.sim_floor < 1):
            raise ValueError("sim_floor must lie in (0, 1)")


@dataclass(frozen=True)
class CutScore:
    log_fit: float  # -E1
    log_smooth: float  # -E2
    log_likelihood: float
    log_prior: float  # -lambda * |C|

    @property
    def total(self) -> float:
        return self.log_fit + self.log_smooth + self.log_likelihood + self.log_prior


def cosine(a: Optional[np.ndarray], b: Optional[np.ndarray], sim_floor: float = SIM_FLOOR_DEFAULT) -> float:
    """Dot product of unit vectors, clamped to [sim_floor, 1] for log use."""
    if a is None or b is None:
        return sim_floor
    return float(min(1.0, max(sim_floor, float(np.dot(a, b)))))


def _centroid_matrix(tree: TopicTree, ids: Sequence[str]) -> np.ndarray:
    dim = 0
    for nid in ids:
        c = tree.nodes[nid].centroid
        if c is not None:
            dim = c.size
            break
    mat = np.zeros((len(ids), dim if dim else 1))
    for i, nid in enumerate(ids):
        c = tree.nodes[nid].centroid
        if c is not None:
            mat[i, : c.size] = c
    return mat


def _neglog_similarity(tree: TopicTree, ids: Sequence[str], sim_floor: float) -> np.ndarray:
    cm = _centroid_matrix(tree, ids)
    sims = np.clip(cm @ cm.T, sim_floor, 1.0)
    neglog = -np.log(sims)
    np.fill_diagonal(neglog, np.inf)
    return neglog


def _e1_from_neglog(neglog: np.ndarray, order: np.ndarray, labels: np.ndarray):
    """E1 plus per-row (min, argmin) over same-label peers; lone nodes give 0.

    `order` is argsort of each neglog row. The label-1 group is small in
    practice, so its rows are solved by submatrix; label-0 rows walk their
    sorted neighbor lists until they hit a same-label peer.
    """
    n = labels.size
    row_min = np.zeros(n)
    row_arg = np.full(n, -1, dtype=np.int64)

    ones = np.flatnonzero(labels == 1)
    if ones.size >= 2:
        sub = neglog[np.ix_(ones, ones)]
        k = sub.argmin(axis=1)
        row_min[ones] = sub[np.arange(ones.size), k]
        row_arg[ones] = ones[k]

    zeros = np.flatnonzero(labels == 0)
    if zeros.size >= 2:
        unresolved = zeros
        col = 0
        zero_mask = labels == 0
        while unresolved.size and col < n:
            nb = order[unresolved, col]
            hit = zero_mask[nb] & (nb != unresolved)
            found = unresolved[hit]
            row_min[found] = neglog[found, nb[hit]]
            row_arg[found] = nb[hit]
            unresolved = unresolved[~hit]
            col += 1
    return float(row_min.sum()), row_min, row_arg


def energy_e1(tree: TopicTree, cut: TreeCut, params: CutParams) -> float:
    """Sum over all nodes of the min -log similarity to a same-label peer."""
    ids = sorted(tree.nodes)
    labels = np.array([cut.labels[nid] for nid in ids], dtype=np.int8)
    neglog = _neglog_similarity(tree, ids, params.sim_floor)
    order = np.argsort(neglog, axis=1, kind="stable")
    e1, _, _ = _e1_from_neglog(neglog, order, labels)
    return e1


def energy_e2(cut_t: TreeCut, cut_prev: TreeCut, mapping: TreeMapping) -> float:
    """Sum over topic pairs of |l_r - l_s| times the mapping weight."""
    acc = 0.0
    for r, s, w in mapping.topic_pairs:
        acc += abs(cut_t.labels.get(r, 0) - cut_prev.labels.get(s, 0)) * w
    return acc


def _logsumexp(values: Sequence[float]) -> float:
    vals = [v for v in values if v != -math.inf]
    if not vals:
        return -math.inf
    top = max(vals)
    return top + math.log(sum(math.exp(v - top) for v in vals))


def cut_log_likelihood(
    tree: TopicTree,
    cut: TreeCut,
    foci: FocusSet,
    vectors: Mapping[str, SparseVec],
    dcm: DcmParams,
) -> float:
    """Sum over foci of log sum_{s in C} omega_s p(D_f|D_s), omega_s = |D_s|/|D_a|."""
    marg = DocSetMarginals(vectors, dcm)
    return _likelihood_with(marg, tree, sorted(cut.cut_nodes), foci)


def _likelihood_with(
    marg: DocSetMarginals, tree: TopicTree, cut_nodes: Sequence[str], foci: FocusSet
) -> float:
    total_docs = tree.doc_total
    acc = 0.0
    for focus in foci.foci:
        terms = []
        for nid in cut_nodes:
            nd = len(tree.nodes[nid].doc_ids)
            if nd == 0:
                continue
            pred = marg.log_predictive_ids(focus.doc_ids, tree.nodes[nid].doc_ids)
            terms.append(math.log(nd / total_docs) + pred)
        acc += _logsumexp(terms)
    return acc


def log_posterior(
    tree: TopicTree,
    cut: TreeCut,
    foci: FocusSet,
    vectors: Mapping[str, SparseVec],
    dcm: DcmParams,
    params: CutParams,
) -> float:
    return cut_log_likelihood(tree, cut, foci, vectors, dcm) - params.lam * len(cut.cut_nodes)


def objective(
    tree: TopicTree,
    cut: TreeCut,
    prev_cut: Optional[TreeCut],
    mapping: Optional[TreeMapping],
    foci: Optional[FocusSet],
    vectors: Mapping[str, SparseVec],
    dcm: DcmParams,
    params: CutParams,
) -> CutScore:
    """Full decomposed score; the smoothness part is 0 at the first step."""
    if (prev_cut is None) != (mapping is None):
        raise ValueError("prev_cut and mapping must both be present or both absent")
    e1 = energy_e1(tree, cut, params)
    e2 = energy_e2(cut, prev_cut, mapping) if prev_cut is not None else 0.0
    ll = cut_log_likelihood(tree, cut, foci, vectors, dcm) if foci is not None else 0.0
    return CutScore(
        log_fit=-e1,
        log_smooth=-e2,
        log_likelihood=ll,
        log_prior=-params.lam * len(cut.cut_nodes),
    )


def _cut_key(cut_nodes) -> Tuple[int, Tuple[str, ...]]:
    return (len(cut_nodes), tuple(sorted(cut_nodes)))


def _better(total_a: float, key_a, total_b: float, key_b) -> bool:
    """True when (total_a, key_a) wins: higher total, then fewer nodes, then lexicographic."""
    if total_a != total_b:
        return total_a > total_b
    return key_a < key_b


class CutScorer:
    """Caches everything reusable across candidate cuts of one tree.

    Holds the pairwise -log similarity matrix with per-row sorted neighbor
    order, per-node likelihood aggregates, and the mapping pairs indexed by
    the later tree's nodes. score() is the authoritative full evaluation;
    flip_total() prices a single-label-flip move against a prepared state.
    """

    def __init__(
        self,
        tree: TopicTree,
        prev_cut: Optional[TreeCut],
        mapping: Optional[TreeMapping],
        foci: Optional[FocusSet],
        vectors: Mapping[str, SparseVec],
        dcm: DcmParams,
        params: CutParams,
    ):
        if (prev_cut is None) != (mapping is None):
            raise ValueError("prev_cut and mapping must both be present or both absent")
        self.tree = tree
        self.foci = foci
        self.params = params
        self.ids = sorted(tree.nodes)
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        self.neglog = _neglog_similarity(tree, self.ids, params.sim_floor)
        self.order = np.argsort(self.neglog, axis=1, kind="stable")

        self.pair_r: Dict[int, List[Tuple[float, int]]] = {}
        self._e2_const = 0.0  # pairs whose later node is unknown keep label 0
        if mapping is not None and prev_cut is not None:
            r_idx, weights, lprev = [], [], []
            for r, s, w in mapping.topic_pairs:
                i = self.index.get(r)
                lp = prev_cut.labels.get(s, 0)
                if i is None:
                    self._e2_const += abs(0 - lp) * w
                    continue
                r_idx.append(i)
                weights.append(w)
                lprev.append(lp)
                self.pair_r.setdefault(i, []).append((w, lp))
            self._pair_r_idx = np.array(r_idx, dtype=np.int64)
            self._pair_w = np.array(weights)
            self._pair_lprev = np.array(lprev, dtype=np.int8)
        else:
            self._pair_r_idx = np.zeros(0, dtype=np.int64)
            self._pair_w = np.zeros(0)
            self._pair_lprev = np.zeros(0, dtype=np.int8)

        self.marg = DocSetMarginals(vectors, dcm)
        self._pred: Dict[Tuple[int, str], float] = {}
        self._log_omega: Dict[str, float] = {}
        total = tree.doc_total
        for nid in self.ids:
            nd = len(tree.nodes[nid].doc_ids)
            self._log_omega[nid] = math.log(nd / total) if nd else -math.inf
        self.smooth_active = mapping is not None

    # -- full evaluation ----------------------------------------------------

    def labels_array(self, cut_nodes) -> np.ndarray:
        labels = derive_labels(self.tree, frozenset(cut_nodes))
        return np.array([labels[nid] for nid in self.ids], dtype=np.int8)

    def node_term(self, focus_i: int, nid: str) -> float:
        """log omega_s + log predictive of focus i against node nid."""
        key = (focus_i, nid)
        val = self._pred.get(key)
        if val is None:
            pred = self.marg.log_predictive_ids(
                self.foci.foci[focus_i].doc_ids, self.tree.nodes[nid].doc_ids
            )
            val = self._log_omega[nid] + pred
            self._pred[key] = val
        return val

    def log_likelihood(self, cut_nodes) -> float:
        if self.foci is None:
            return 0.0
        nodes = sorted(cut_nodes)
        acc = 0.0
        for i in range(self.foci.m):
            acc += _logsumexp([self.node_term(i, nid) for nid in nodes])
        return acc

    def e2_from_labels(self, labels: np.ndarray) -> float:
        if self._pair_r_idx.size == 0:
            return self._e2_const
        return self._e2_const + float(
            np.abs(labels[self._pair_r_idx] - self._pair_lprev) @ self._pair_w
        )

    def score(self, cut_nodes) -> CutScore:
        labels = self.labels_array(cut_nodes)
        e1, _, _ = _e1_from_neglog(self.neglog, self.order, labels)
        e2 = self.e2_from_labels(labels) if self.smooth_active else 0.0
        return CutScore(
            log_fit=-e1,
            log_smooth=-e2,
            log_likelihood=self.log_likelihood(cut_nodes),
            log_prior=-self.params.lam * len(cut_nodes),
        )

    # -- single-flip fast path ----------------------------------------------

    def e1_state(self, labels: np.ndarray):
        return _e1_from_neglog(self.neglog, self.order, labels)

    def e1_after_flip(self, labels: np.ndarray, state, v: int) -> float:
        """E1 after flipping node v's label, priced against (e1, min, argmin)."""
        e1, row_min, row_arg = state
        old = labels[v]
        new = 1 - old
        out = e1 - row_min[v]

        # v's own term inside its new group
        new_mask = labels == new
        new_term = 0.0
        if np.count_nonzero(new_mask) >= 1:
            for col in range(labels.size):
                s = self.order[v, col]
                if new_mask[s]:
                    new_term = float(self.neglog[v, s])
                    break
            else:
                new_term = 0.0
        out += new_term

        # rows v joins: min can only shrink toward neglog[r, v]
        col_v = self.neglog[:, v]
        join = new_mask & (col_v < row_min)
        join[v] = False
        if np.any(join):
            out += float((col_v[join] - row_min[join]).sum())

        # lone-node rule: if v was the only peer candidate... rows in v's new
        # group that previously had no peer (arg -1) now gain v as their min
        lonely = new_mask & (row_arg == -1)
        lonely[v] = False
        if np.any(lonely):
            out += float(col_v[lonely].sum())

        # rows v leaves: any row whose argmin was v must re-minimize
        leave = np.flatnonzero((labels == old) & (row_arg == v))
        old_mask = labels == old
        for r in leave:
            best = 0.0
            for col in range(labels.size):
                s = self.order[r, col]
                if s != v and s != r and old_mask[s]:
                    best = float(self.neglog[r, s])
                    break
            out += best - row_min[r]
        return out


def solve_exact(
    tree: TopicTree,
    prev_cut: Optional[TreeCut],
    mapping: Optional[TreeMapping],
    foci: Optional[FocusSet],
    vectors: Mapping[str, SparseVec],
    dcm: DcmParams,
    params: CutParams,
) -> Tuple[TreeCut, CutScore]:
    """Argmax of the objective over every valid cut; raises LimitExceeded."""
    scorer = CutScorer(tree, prev_cut, mapping, foci, vectors, dcm, params)
    best = None
    for cut in enumerate_cuts(tree, params.max_enumeration):
        score = scorer.score(cut.cut_nodes)
        key = _cut_key(cut.cut_nodes)
        if best is None or _better(score.total, key, best[1].total, _cut_key(best[0].cut_nodes)):
            best = (cut, score)
    assert best is not None
    return best


def project_cut(prev_cut: TreeCut, mapping: TreeMapping, tree: TopicTree) -> TreeCut:
    """Warm-start cut: carry each previous cut node to its best-mapped node,
    then repair the marked set into a valid cut by root descent."""
    best_for_prev: Dict[str, Tuple[float, str]] = {}
    for r, s, w in mapping.topic_pairs:
        if s in prev_cut.cut_nodes and r in tree.nodes:
            cur = best_for_prev.get(s)
            if cur is None or w > cur[0] or (w == cur[0] and r < cur[1]):
                best_for_prev[s] = (w, r)
    marked = {r for _, r in best_for_prev.values()}

    has_marked_desc: Dict[str, bool] = {}
    for nid in sorted(tree.nodes, key=lambda x: -tree.nodes[x].depth):
        node = tree.nodes[nid]
        has_marked_desc[nid] = any(
            c in marked or has_marked_desc[c] for c in node.children
        )

    cut_nodes: List[str] = []

    def descend(nid: str) -> None:
        node = tree.nodes[nid]
        if nid in marked or node.is_leaf or not has_marked_desc[nid]:
            cut_nodes.append(nid)
            return
        for c in node.children:
            descend(c)

    descend(tree.root)
    return make_cut(tree, cut_nodes)


def _expand_moves(tree: TopicTree, cut_nodes) -> List[Tuple[str, frozenset]]:
    out = []
    for nid in sorted(cut_nodes):
        node = tree.nodes[nid]
        if node.children:
            out.append((nid, frozenset(cut_nodes) - {nid} | set(node.children)))
    return out


def _collapse_moves(tree: TopicTree, cut_nodes) -> List[Tuple[str, frozenset]]:
    parents = tree.parent_map()
    cut = frozenset(cut_nodes)
    seen = set()
    out = []
    for nid in sorted(cut_nodes):
        p = parents.get(nid)
        if p is None or p in seen:
            continue
        seen.add(p)
        kids = set(tree.nodes[p].children)
        if kids <= cut:
            out.append((p, cut - kids | {p}))
    return out


def _hill_climb(scorer: CutScorer, start_nodes: frozenset) -> Tuple[frozenset, CutScore]:
    tree = scorer.tree
    cur = frozenset(start_nodes)
    cur_score = scorer.score(cur)
    while True:
        labels = scorer.labels_array(cur)
        state = scorer.e1_state(labels)
        e2_cur = scorer.e2_from_labels(labels) if scorer.smooth_active else 0.0
        m = scorer.foci.m if scorer.foci is not None else 0
        focus_terms = [
            {nid: scorer.node_term(i, nid) for nid in cur} for i in range(m)
        ]

        # EXPAND flips the expanded node 0->1; COLLAPSE flips the parent 1->0.
        candidates: List[Tuple[float, Tuple[int, Tuple[str, ...]], frozenset]] = []
        for flip, nxt in _expand_moves(tree, cur) + _collapse_moves(tree, cur):
            v = scorer.index[flip]
            e1_new = scorer.e1_after_flip(labels, state, v)
            if scorer.smooth_active:
                lv = labels[v]
                delta = sum(
                    w * (abs((1 - lv) - lp) - abs(lv - lp))
                    for w, lp in scorer.pair_r.get(v, ())
                )
                e2_new = e2_cur + delta
            else:
                e2_new = 0.0
            ll_new = 0.0
            for i in range(m):
                terms = dict(focus_terms[i])
                for gone in cur - nxt:
                    terms.pop(gone, None)
                for added in nxt - cur:
                    terms[added] = scorer.node_term(i, added)
                ll_new += _logsumexp(sorted(terms.values()))
            total = -e1_new - e2_new + ll_new - scorer.params.lam * len(nxt)
            candidates.append((total, _cut_key(nxt), nxt))

        best_move = None
        for total, key, nxt in candidates:
            if best_move is None or _better(total, key, best_move[0], best_move[1]):
                best_move = (total, key, nxt)
        if best_move is None or best_move[0] <= cur_score.total:
            return cur, cur_score
        # authoritative re-evaluation guards against fast-path float drift
        nxt_score = scorer.score(best_move[2])
        if nxt_score.total <= cur_score.total:
            return cur, cur_score
        cur, cur_score = best_move[2], nxt_score


def _random_expansion(tree: TopicTree, rng: np.random.Generator, max_steps: int) -> frozenset:
    cut = frozenset({tree.root})
    steps = int(rng.integers(1, max_steps + 1))
    for _ in range(steps):
        expandable = sorted(n for n in cut if tree.nodes[n].children)
        if not expandable:
            break
        pick = expandable[int(rng.integers(0, len(expandable)))]
        cut = cut - {pick} | set(tree.nodes[pick].children)
    return cut


def solve_stream(
    tree: TopicTree,
    prev_cut: Optional[TreeCut],
    mapping: Optional[TreeMapping],
    foci: Optional[FocusSet],
    vectors: Mapping[str, SparseVec],
    dcm: DcmParams,
    params: CutParams,
) -> Tuple[TreeCut, CutScore]:
    """Exact when enumerable, otherwise seeded steepest-ascent local search."""
    if count_cuts(tree) <= params.max_enumeration:
        return solve_exact(tree, prev_cut, mapping, foci, vectors, dcm, params)

    scorer = CutScorer(tree, prev_cut, mapping, foci, vectors, dcm, params)
    if prev_cut is not None and mapping is not None:
        warm = project_cut(prev_cut, mapping, tree).cut_nodes
    else:
        warm = frozenset({tree.root})

    rng = np.random.default_rng(params.rng_seed)
    starts = [warm]
    for _ in range(params.restarts):
        starts.append(_random_expansion(tree, rng, params.max_perturb_steps))

    best: Optional[Tuple[frozenset, CutScore]] = None
    for start in starts:
        nodes, score = _hill_climb(scorer, start)
        if best is None or _better(
            score.total, _cut_key(nodes), best[1].total, _cut_key(best[0])
        ):
            best = (nodes, score)
    assert best is not None
    return make_cut(tree, best[0]), best[1]
