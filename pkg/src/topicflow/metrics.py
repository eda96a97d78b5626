"""Evaluation measures for cut sequences and the interest-propagation baseline.

Fitness is the log of the cut's content fit times its focus likelihood;
smoothness comes in three flavors: the mapping energy, normalized mutual
information over aligned documents, and a tree-distance distortion. The
baseline cut generator scores nodes by propagated focus interest and picks
the budgeted argmax cut by dynamic programming.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dcm import DcmParams
from .errors import EmptyAlignment, NonSquare
from .model import FocusSet, SparseVec, TopicTree, TreeCut, TreeMapping, make_cut
from .treecut import CutParams, cut_log_likelihood, energy_e1, energy_e2


@dataclass(frozen=True)
class DoiParams:
    tree_decay: float = 0.7
    time_decay: float = 0.5
    budget_lambda: float = 1.0

    def __post_init__(self):
        if not (0 < self.tree_decay <= 1) or not (0 < self.time_decay <= 1):
            raise ValueError("decays must lie in (0, 1]")


def fitness(
    tree: TopicTree,
    cut: TreeCut,
    foci: FocusSet,
    vectors: Mapping[str, SparseVec],
    dcm: DcmParams,
    params: CutParams,
) -> float:
    """log F = -E1 + focus log-likelihood; the node-count prior is excluded."""
    return -energy_e1(tree, cut, params) + cut_log_likelihood(tree, cut, foci, vectors, dcm)


def smoothness_map(cut_t: TreeCut, cut_prev: TreeCut, mapping: TreeMapping) -> float:
    return -energy_e2(cut_t, cut_prev, mapping)


# ---------------------------------------------------------------------------
# Hungarian assignment


def _assignment_cost(cost: np.ndarray) -> Tuple[List[int], float]:
    """O(n^3) potentials method; returns (row -> column, total cost)."""
    n = cost.shape[0]
    INF = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: row matched to column j (1-indexed, 0 = free)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = [0] * n
    for j in range(1, n + 1):
        if p[j]:
            assign[p[j] - 1] = j - 1
    total = float(sum(cost[i][assign[i]] for i in range(n)))
    return assign, total


def hungarian(cost) -> Tuple[Tuple[int, ...], float]:
    """Minimum-cost perfect assignment on a square matrix.

    Among cost-optimal assignments, returns the lexicographically smallest
    permutation (row 0's column first), found by greedy column fixing with
    optimal completions.
    """
    mat = np.asarray(cost, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise NonSquare(f"expected square matrix, got {mat.shape}")
    if mat.size == 0:
        return (), 0.0
    if not np.all(np.isfinite(mat)):
        raise ValueError("cost entries must be finite")
    n = mat.shape[0]
    _, best = _assignment_cost(mat)
    tol = 1e-9 * max(1.0, abs(best))

    perm: List[int] = []
    rows = list(range(n))
    cols = list(range(n))
    fixed_cost = 0.0
    for i in rows:
        for c in sorted(cols):
            trial = fixed_cost + mat[i][c]
            rest_rows = [r for r in rows if r > i]
            rest_cols = [x for x in cols if x != c]
            if rest_rows:
                _, sub = _assignment_cost(mat[np.ix_(rest_rows, rest_cols)])
                trial += sub
            if trial <= best + tol:
                perm.append(c)
                cols.remove(c)
                fixed_cost += mat[i][c]
                break
    total = float(sum(mat[i][perm[i]] for i in range(n)))
    return tuple(perm), total


# ---------------------------------------------------------------------------
# NMI smoothness


def _doc_cluster_map(tree: TopicTree, cut: TreeCut) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for nid in sorted(cut.cut_nodes):
        for d in tree.nodes[nid].doc_ids:
            out[d] = nid
    return out


def smoothness_nmi(
    cut_t: TreeCut,
    tree_t: TopicTree,
    cut_k: TreeCut,
    tree_k: TopicTree,
    doc_alignment: Sequence[Tuple[str, str]],
) -> float:
    """NMI between the two cuts' document partitions over aligned documents.

    doc_alignment pairs are (doc at the earlier time k, doc at time t). By
    convention NMI is 1 when both partitions are trivial and 0 when exactly
    one is.
    """
    at_k = _doc_cluster_map(tree_k, cut_k)
    at_t = _doc_cluster_map(tree_t, cut_t)
    pairs = [(a, b) for a, b in doc_alignment if a in at_k and b in at_t]
    if not pairs:
        raise EmptyAlignment("no aligned documents between the two cuts")

    counts: Dict[Tuple[str, str], int] = {}
    for a, b in pairs:
        key = (at_k[a], at_t[b])
        counts[key] = counts.get(key, 0) + 1
    n = len(pairs)
    row: Dict[str, int] = {}
    col: Dict[str, int] = {}
    for (ca, cb), c in counts.items():
        row[ca] = row.get(ca, 0) + c
        col[cb] = col.get(cb, 0) + c

    def entropy(marg: Dict[str, int]) -> float:
        return -sum((c / n) * math.log(c / n) for c in marg.values() if c)

    h_a, h_b = entropy(row), entropy(col)
    if h_a == 0 and h_b == 0:
        return 1.0
    if h_a == 0 or h_b == 0:
        return 0.0
    mi = 0.0
    for (ca, cb), c in counts.items():
        p = c / n
        mi += p * math.log(p * n * n / (row[ca] * col[cb]))
    val = mi / math.sqrt(h_a * h_b)
    return float(min(1.0, max(0.0, val)))


def compose_doc_alignment(
    mappings: Sequence[TreeMapping], k: int, t: int
) -> List[Tuple[str, str]]:
    """Chain per-step doc pairs into (doc@k, doc@t) pairs, k < t.

    mappings[i] must connect time i to i+1; doc pairs are functional in the
    left argument so the composition is a relational join.
    """
    if not k < t:
        raise ValueError("k must precede t")
    chain = {a: a for m in [mappings[k]] for a, _, _ in m.doc_pairs}
    for step in range(k, t):
        step_map = {a: b for a, b, _ in mappings[step].doc_pairs}
        chain = {
            origin: step_map[cur]
            for origin, cur in chain.items()
            if cur in step_map
        }
    return sorted(chain.items())


# ---------------------------------------------------------------------------
# Tree-distance smoothness


def _tree_distance(tree: TopicTree, a: str, b: str) -> int:
    if a == b:
        return 0
    anc_a = [a] + tree.ancestors(a)
    depth_a = {nid: tree.nodes[nid].depth for nid in anc_a}
    cur = b
    while cur not in depth_a:
        cur = tree.parents[cur]
    lca = cur
    return (
        tree.nodes[a].depth + tree.nodes[b].depth - 2 * tree.nodes[lca].depth
    )


def _best_counterpart_forward(mapping: TreeMapping) -> Dict[str, str]:
    """earlier node -> best-weight later node (ties to the smaller id)."""
    best: Dict[str, Tuple[float, str]] = {}
    for r, s, w in mapping.topic_pairs:
        cur = best.get(s)
        if cur is None or w > cur[0] or (w == cur[0] and r < cur[1]):
            best[s] = (w, r)
    return {s: r for s, (w, r) in best.items()}


def _best_counterpart_backward(mapping: TreeMapping) -> Dict[str, str]:
    """later node -> best-weight earlier node (ties to the smaller id)."""
    best: Dict[str, Tuple[float, str]] = {}
    for r, s, w in mapping.topic_pairs:
        cur = best.get(r)
        if cur is None or w > cur[0] or (w == cur[0] and s < cur[1]):
            best[r] = (w, s)
    return {r: s for r, (w, s) in best.items()}


def _chain_map(
    mappings: Sequence[TreeMapping], start: int, end: int
) -> Dict[str, str]:
    """Best-weight topic chains from time `start` to time `end`."""
    if start == end:
        return {}
    out: Optional[Dict[str, str]] = None
    if start < end:
        for step in range(start, end):
            hop = _best_counterpart_forward(mappings[step])
            out = hop if out is None else {
                o: hop[c] for o, c in out.items() if c in hop
            }
    else:
        for step in range(start - 1, end - 1, -1):
            hop = _best_counterpart_backward(mappings[step])
            out = hop if out is None else {
                o: hop[c] for o, c in out.items() if c in hop
            }
    return out or {}


def smoothness_dist(
    cut_t: TreeCut,
    cut_k: TreeCut,
    tree_t: TopicTree,
    tree_k: TopicTree,
    mappings: Sequence[TreeMapping],
) -> float:
    """Negated mean squared distortion of pairwise cut-node tree distances.

    Cut nodes are carried to the other tree along highest-weight topic-pair
    chains; unmappable nodes drop out of the pair averages, and a cut with
    fewer than two usable nodes contributes an average of 0.
    """
    to_k = _chain_map(mappings, tree_t.time_index, tree_k.time_index)
    to_t = _chain_map(mappings, tree_k.time_index, tree_t.time_index)

    def side(cut_a, tree_a, tree_b, carry) -> float:
        nodes = [n for n in sorted(cut_a.cut_nodes) if carry.get(n) in tree_b.nodes]
        if len(nodes) < 2:
            return 0.0
        acc = 0.0
        cnt = 0
        for i in range(len(nodes)):
            for j in range(i + 1, len(nodes)):
                da = _tree_distance(tree_a, nodes[i], nodes[j])
                db = _tree_distance(tree_b, carry[nodes[i]], carry[nodes[j]])
                acc += (da - db) ** 2
                cnt += 1
        return acc / cnt

    return -(side(cut_t, tree_t, tree_k, to_k) + side(cut_k, tree_k, tree_t, to_t)) / 2


# ---------------------------------------------------------------------------
# Interest-propagation baseline


def doi_scores(
    tree: TopicTree,
    prev_doi: Optional[Mapping[str, float]],
    focus_vectors: Sequence[np.ndarray],
    mapping: Optional[TreeMapping],
    params: DoiParams,
) -> Dict[str, float]:
    """Seed interest by focus similarity, diffuse along tree edges with decay,
    then lift by decayed interest of temporally mapped predecessors."""
    doi: Dict[str, float] = {}
    for nid in sorted(tree.nodes):
        c = tree.nodes[nid].centroid
        best = 0.0
        for f in focus_vectors:
            if c is not None and f is not None:
                best = max(best, float(np.clip(np.dot(c, f), 0.0, 1.0)))
        doi[nid] = best

    edges = [(p, c) for p in sorted(tree.nodes) for c in tree.nodes[p].children]
    for _ in range(len(tree.nodes)):
        changed = False
        for p, c in edges:
            up = params.tree_decay * doi[c]
            down = params.tree_decay * doi[p]
            if up > doi[p] + 1e-15:
                doi[p] = up
                changed = True
            if down > doi[c] + 1e-15:
                doi[c] = down
                changed = True
        if not changed:
            break

    if prev_doi and mapping is not None:
        lift: Dict[str, float] = {}
        for r, s, w in mapping.topic_pairs:
            if r in doi and s in prev_doi:
                lift[r] = max(lift.get(r, 0.0), params.time_decay * prev_doi[s])
        for nid, v in lift.items():
            doi[nid] = max(doi[nid], v)
    return doi


def doi_baseline_cut(
    tree: TopicTree,
    prev_doi: Optional[Mapping[str, float]],
    focus_vectors: Sequence[np.ndarray],
    mapping: Optional[TreeMapping],
    params: DoiParams,
) -> Tuple[TreeCut, Dict[str, float]]:
    """Cut maximizing sum of node interest minus a per-node budget.

    The objective is additive over cut nodes, so the argmax is found exactly
    by bottom-up dynamic programming; ties prefer fewer nodes, then the
    lexicographically smaller node list.
    """
    doi = doi_scores(tree, prev_doi, focus_vectors, mapping, params)

    def best(nid: str) -> Tuple[float, int, Tuple[str, ...]]:
        take = (doi[nid] - params.budget_lambda, 1, (nid,))
        node = tree.nodes[nid]
        if node.is_leaf:
            return take
        score, count, nodes = 0.0, 0, ()
        for c in node.children:
            s, k, ns = best(c)
            score += s
            count += k
            nodes = nodes + ns
        split = (score, count, tuple(sorted(nodes)))
        if take[0] != split[0]:
            return take if take[0] > split[0] else split
        if take[1] != split[1]:
            return take if take[1] < split[1] else split
        return take if take[2] <= split[2] else split

    _, _, nodes = best(tree.root)
    return make_cut(tree, nodes), doi


# ---------------------------------------------------------------------------
# Report


@dataclass
class MetricRow:
    time_index: int
    fitness: float
    s_map: Optional[float]
    s_nmi: Dict[int, Optional[float]]
    s_dist: Dict[int, Optional[float]]


@dataclass
class MetricReport:
    rows: List[MetricRow]

    COLUMNS = [
        "t",
        "F",
        "S_map",
        "S_NMI@1",
        "S_NMI@2",
        "S_NMI@3",
        "S_dist@1",
        "S_dist@2",
        "S_dist@3",
    ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow(
                [r.time_index, f"{r.fitness:.6f}"]
                + [_fmt(r.s_map)]
                + [_fmt(r.s_nmi.get(k)) for k in (1, 2, 3)]
                + [_fmt(r.s_dist.get(k)) for k in (1, 2, 3)]
            )
        return buf.getvalue()

    def to_json(self) -> List[dict]:
        return [
            {
                "t": r.time_index,
                "F": r.fitness,
                "S_map": r.s_map,
                "S_NMI": {str(k): v for k, v in sorted(r.s_nmi.items())},
                "S_dist": {str(k): v for k, v in sorted(r.s_dist.items())},
            }
            for r in self.rows
        ]


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.6f}"


def compute_report(
    trees: Sequence[TopicTree],
    cuts: Sequence[TreeCut],
    mappings: Sequence[TreeMapping],
    foci: FocusSet,
    vectors: Mapping[str, SparseVec],
    dcm: DcmParams,
    params: CutParams,
) -> MetricReport:
    rows = []
    for t, (tree, cut) in enumerate(zip(trees, cuts)):
        f = fitness(tree, cut, foci, vectors, dcm, params)
        s_map = smoothness_map(cuts[t], cuts[t - 1], mappings[t - 1]) if t >= 1 else None
        s_nmis: Dict[int, Optional[float]] = {}
        s_dists: Dict[int, Optional[float]] = {}
        for k_back in (1, 2, 3):
            k = t - k_back
            if k < 0:
                s_nmis[k_back] = None
                s_dists[k_back] = None
                continue
            try:
                align = compose_doc_alignment(mappings, k, t)
                s_nmis[k_back] = smoothness_nmi(cuts[t], trees[t], cuts[k], trees[k], align)
            except EmptyAlignment:
                s_nmis[k_back] = None
            s_dists[k_back] = smoothness_dist(cuts[t], cuts[k], trees[t], trees[k], mappings)
        rows.append(MetricRow(t, f, s_map, s_nmis, s_dists))
    return MetricReport(rows)
