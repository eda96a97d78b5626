"""Display grouping of cut nodes and automatic focus selection.

Sibling cut nodes are merged for display with mean-shift in centroid space
(flat kernel, cosine distance). Each clustering center gets an adaptive
window that shrinks to zero as the center approaches a focus topic, so
focus-related nodes never merge; previous group centers seed the walkers to
keep consecutive steps stable.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import TopicTree, TreeCut


@dataclass(frozen=True)
class PostParams:
    gamma: float = 0.6
    w_max: float = 0.8  # cosine-distance units
    meanshift_iters: int = 50
    converge_tol: float = 1e-4
    focus_bandwidth: float = 0.5

    def __post_init__(self):
        if not (0 < self.gamma < 1):
            raise ValueError("gamma must lie in (0, 1)")
        if self.w_max <= 0:
            raise ValueError("w_max must be positive")


@dataclass(frozen=True)
class DisplayGroup:
    id: str
    member_cut_nodes: Tuple[str, ...]  # sorted node ids sharing one parent
    center: Optional[np.ndarray]
    carried_from: Optional[str] = None


def _cos(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> float:
    if a is None or b is None:
        return 0.0
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def _cos_dist(a, b) -> float:
    return 1.0 - _cos(a, b)


def window_from_similarity(s: float, params: PostParams) -> float:
    """0 above the similarity threshold, else (gamma - s) * w_max / gamma."""
    if s >= params.gamma:
        return 0.0
    return (params.gamma - s) * params.w_max / params.gamma


def window_size(
    center_vector: Optional[np.ndarray],
    focus_vectors: Sequence[np.ndarray],
    params: PostParams,
) -> float:
    """Adaptive window for a clustering center; similarity is the max over foci."""
    s = max((_cos(center_vector, f) for f in focus_vectors), default=0.0)
    return window_from_similarity(s, params)


def _normalized_mean(points: Sequence[np.ndarray]) -> Optional[np.ndarray]:
    acc = np.sum(points, axis=0)
    norm = np.linalg.norm(acc)
    if norm == 0:
        return None
    return acc / norm


def _mean_shift(
    ids: Sequence[str],
    points: Dict[str, Optional[np.ndarray]],
    starts: Dict[str, Optional[np.ndarray]],
    window_of,
    iters: int,
    tol: float,
) -> Dict[str, Optional[np.ndarray]]:
    """Flat-kernel mean shift; window_of(center) may be 0 to freeze a walker."""
    centers = dict(starts)
    active = [i for i in ids if window_of(centers[i]) > 0]
    for _ in range(iters):
        if not active:
            break
        moved = []
        for i in active:
            w = window_of(centers[i])
            if w <= 0:
                continue
            inside = [points[j] for j in ids if _cos_dist(centers[i], points[j]) <= w]
            new = _normalized_mean([p for p in inside if p is not None]) if inside else None
            if new is None:
                continue
            if _cos_dist(centers[i], new) >= tol:
                moved.append(i)
            centers[i] = new
        active = moved
    return centers


def group_cut_nodes(
    tree: TopicTree,
    cut: TreeCut,
    focus_vectors: Sequence[np.ndarray],
    prev_groups: Optional[Sequence[DisplayGroup]],
    params: PostParams,
) -> List[DisplayGroup]:
    """Partition the cut nodes into display groups, one sibling set at a time.

    A node whose focus similarity reaches gamma is frozen into a singleton;
    the rest run mean-shift and merge when their walkers converge to the same
    mode. Previous group centers seed walkers when one lies within w_max.
    """
    parents = tree.parents
    sibling_sets: Dict[Optional[str], List[str]] = {}
    for nid in sorted(cut.cut_nodes):
        sibling_sets.setdefault(parents.get(nid), []).append(nid)

    prev = list(prev_groups) if prev_groups else []
    groups: List[Tuple[Tuple[str, ...], Optional[np.ndarray], Optional[str]]] = []

    for parent in sorted(sibling_sets, key=lambda p: (p is None, p)):
        members = sibling_sets[parent]
        cents = {nid: tree.nodes[nid].centroid for nid in members}

        frozen = [
            nid
            for nid in members
            if window_size(cents[nid], focus_vectors, params) == 0.0
        ]
        mobile = [nid for nid in members if nid not in frozen]
        for nid in frozen:
            groups.append(((nid,), cents[nid], None))
        if not mobile:
            continue

        starts: Dict[str, Optional[np.ndarray]] = {}
        carried: Dict[str, Optional[str]] = {}
        for nid in mobile:
            best = None
            for g in prev:
                d = _cos_dist(cents[nid], g.center)
                if d <= params.w_max and (best is None or d < best[0] or (d == best[0] and g.id < best[1])):
                    best = (d, g.id, g.center)
            if best is not None:
                starts[nid] = best[2]
                carried[nid] = best[1]
            else:
                starts[nid] = cents[nid]
                carried[nid] = None

        final = _mean_shift(
            mobile,
            cents,
            starts,
            lambda c: window_size(c, focus_vectors, params),
            params.meanshift_iters,
            params.converge_tol,
        )

        modes: List[Tuple[Optional[np.ndarray], List[str]]] = []
        for nid in mobile:
            placed = False
            for center, bucket in modes:
                if _cos_dist(final[nid], center) <= params.converge_tol:
                    bucket.append(nid)
                    placed = True
                    break
            if not placed:
                modes.append((final[nid], [nid]))
        for center, bucket in modes:
            carries = sorted({carried[n] for n in bucket if carried[n] is not None})
            groups.append((tuple(sorted(bucket)), center, carries[0] if carries else None))

    groups.sort(key=lambda g: g[0])
    return [
        DisplayGroup(
            id=f"g{cut.time_index}:{i}",
            member_cut_nodes=members,
            center=center,
            carried_from=carry,
        )
        for i, (members, center, carry) in enumerate(groups)
    ]


def auto_focus(tree: TopicTree, params: PostParams) -> List[str]:
    """Cluster the first-level topics and return one representative per cluster.

    Fixed-bandwidth mean-shift over the root's child centroids; each cluster
    contributes the member closest to its mean, ties to the smaller id.
    """
    first_level = sorted(tree.nodes[tree.root].children)
    if not first_level:
        return [tree.root]
    cents = {nid: tree.nodes[nid].centroid for nid in first_level}
    final = _mean_shift(
        first_level,
        cents,
        dict(cents),
        lambda c: params.focus_bandwidth,
        params.meanshift_iters,
        params.converge_tol,
    )
    clusters: List[Tuple[Optional[np.ndarray], List[str]]] = []
    for nid in first_level:
        placed = False
        for center, bucket in clusters:
            if _cos_dist(final[nid], center) <= max(params.converge_tol, 1e-9):
                bucket.append(nid)
                placed = True
                break
        if not placed:
            clusters.append((final[nid], [nid]))

    out = []
    for _, bucket in clusters:
        mean = _normalized_mean([cents[n] for n in sorted(bucket) if cents[n] is not None])
        best = min(sorted(bucket), key=lambda n: (_cos_dist(cents[n], mean), n))
        out.append(best)
    return sorted(out)


def groups_to_json(groups: Sequence[DisplayGroup]) -> List[dict]:
    return [
        {"members": list(g.member_cut_nodes), "carried_from": g.carried_from}
        for g in groups
    ]
