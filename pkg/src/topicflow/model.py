"""Core domain types and structural operations on topic trees, cuts, and mappings.

A topic tree is a per-time-slice multi-branch hierarchy whose nodes own
document sets; a tree cut picks exactly one node on every root-leaf path and
induces a 0/1 labeling (strict ancestors of cut nodes are 1, everything else
0). Everything here is an immutable value after construction; operations are
pure.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidCut, LimitExceeded, ParseError

# Sparse term-count vector: term index -> count.
SparseVec = Dict[int, int]


@dataclass(frozen=True)
class Document:
    id: str
    timestamp: int
    source: str  # "news" | "tweet"
    title: str
    text: str
    vector: SparseVec = field(default_factory=dict)


@dataclass(frozen=True)
class Vocabulary:
    terms: Tuple[str, ...]

    def __post_init__(self):
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("vocabulary contains duplicate terms")
        if len(self.terms) < 1:
            raise ValueError("vocabulary must hold at least one term")

    @property
    def size(self) -> int:
        return len(self.terms)

    def index(self) -> Dict[str, int]:
        return {t: i for i, t in enumerate(self.terms)}


@dataclass(frozen=True)
class TopicNode:
    id: str
    children: Tuple[str, ...]
    doc_ids: FrozenSet[str]
    centroid: Optional[np.ndarray]  # dense unit-L2 vector; None when doc set empty
    depth: int

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class TopicTree:
    time_index: int
    root: str
    nodes: Mapping[str, TopicNode]

    @property
    def doc_total(self) -> int:
        return len(self.nodes[self.root].doc_ids)

    @cached_property
    def parents(self) -> Dict[str, str]:
        return {c: n.id for n in self.nodes.values() for c in n.children}

    def parent_map(self) -> Dict[str, str]:
        return self.parents

    def leaves(self) -> List[str]:
        return [n.id for n in self.nodes.values() if n.is_leaf]

    def ancestors(self, node_id: str) -> List[str]:
        """Strict ancestors of node_id, nearest first."""
        parents = self.parents
        out = []
        cur = node_id
        while cur in parents:
            cur = parents[cur]
            out.append(cur)
        return out

    def subtree_ids(self, node_id: str) -> List[str]:
        """node_id plus all descendants, depth-first in stored child order."""
        out = []
        stack = [node_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(reversed(self.nodes[nid].children))
        return out


@dataclass(frozen=True)
class TreeMapping:
    """Correspondences between the trees at from_time and to_time = from_time+1.

    topic_pairs entries are (later_node, earlier_node, weight): the first id
    lives in the to_time tree, the second in the from_time tree. doc_pairs
    entries are (doc_at_from_time, doc_at_to_time, cosine).
    """

    from_time: int
    to_time: int
    topic_pairs: Tuple[Tuple[str, str, float], ...]
    doc_pairs: Tuple[Tuple[str, str, float], ...]

    def __post_init__(self):
        if self.to_time - self.from_time != 1:
            raise ValueError("mapping must connect consecutive time indices")


@dataclass(frozen=True)
class TreeCut:
    time_index: int
    cut_nodes: FrozenSet[str]
    labels: Mapping[str, int]


@dataclass(frozen=True)
class Focus:
    time_index: int
    node_id: str
    doc_ids: FrozenSet[str]


@dataclass(frozen=True)
class FocusSet:
    foci: Tuple[Focus, ...]

    def __post_init__(self):
        if len(self.foci) < 1:
            raise ValueError("focus set must hold at least one focus")
        for f in self.foci:
            if not f.doc_ids:
                raise ValueError(f"focus {f.node_id} has an empty document set")

    @property
    def m(self) -> int:
        return len(self.foci)


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_tree(tree: TopicTree) -> ValidationReport:
    """Check structural invariants; returns a report instead of raising.

    Detected kinds: unknown-child, multi-parent, cycle, unreachable,
    doc-union, bad-depth.
    """
    out: List[Violation] = []
    parent: Dict[str, str] = {}
    for node in tree.nodes.values():
        for c in node.children:
            if c not in tree.nodes:
                out.append(Violation("unknown-child", f"{node.id} -> {c}"))
            elif c in parent:
                out.append(Violation("multi-parent", f"{c} under {parent[c]} and {node.id}"))
            else:
                parent[c] = node.id
    if tree.root not in tree.nodes:
        out.append(Violation("unknown-child", f"root {tree.root} missing"))
        return ValidationReport(tuple(out))
    if tree.root in parent:
        out.append(Violation("cycle", f"root {tree.root} has a parent"))

    seen = set()
    stack = [(tree.root, 0)]
    while stack:
        nid, depth = stack.pop()
        if nid in seen:
            out.append(Violation("cycle", f"revisited {nid}"))
            continue
        seen.add(nid)
        node = tree.nodes.get(nid)
        if node is None:
            continue
        if node.depth != depth:
            out.append(Violation("bad-depth", f"{nid} stored {node.depth}, actual {depth}"))
        if node.children:
            union = frozenset().union(
                *(tree.nodes[c].doc_ids for c in node.children if c in tree.nodes)
            )
            if union != node.doc_ids:
                out.append(Violation("doc-union", nid))
        for c in node.children:
            if c in tree.nodes:
                stack.append((c, depth + 1))
    for nid in tree.nodes:
        if nid not in seen:
            out.append(Violation("unreachable", nid))
    return ValidationReport(tuple(out))


def derive_labels(tree: TopicTree, cut_nodes: FrozenSet[str]) -> Dict[str, int]:
    """Label strict ancestors of cut nodes 1, cut nodes and descendants 0."""
    labels = {nid: 0 for nid in tree.nodes}
    for cn in cut_nodes:
        for anc in tree.ancestors(cn):
            labels[anc] = 1
    return labels


def make_cut(tree: TopicTree, cut_nodes) -> TreeCut:
    """Build a TreeCut, verifying every root-leaf path meets the set exactly once."""
    cut = frozenset(cut_nodes)
    unknown = cut - set(tree.nodes)
    if unknown:
        raise InvalidCut(f"cut references unknown nodes: {sorted(unknown)}")

    def check(nid: str, hits: int) -> None:
        hits += 1 if nid in cut else 0
        if hits > 1:
            raise InvalidCut(f"path through {nid} crosses the cut more than once")
        node = tree.nodes[nid]
        if node.is_leaf:
            if hits == 0:
                raise InvalidCut(f"path to leaf {nid} never crosses the cut")
            return
        for c in node.children:
            check(c, hits)

    check(tree.root, 0)
    return TreeCut(tree.time_index, cut, derive_labels(tree, cut))


def count_cuts(tree: TopicTree) -> int:
    """Number of valid cuts; cuts(v) = 1 + prod(cuts(child)), cuts(leaf) = 1."""

    def rec(nid: str) -> int:
        node = tree.nodes[nid]
        if node.is_leaf:
            return 1
        prod = 1
        for c in node.children:
            prod *= rec(c)
        return 1 + prod

    return rec(tree.root)


def enumerate_cuts(tree: TopicTree, limit: int) -> Iterator[TreeCut]:
    """Yield every valid cut exactly once, depth-first in stored child order.

    The cut {v} of each subtree precedes the combinations drawn from its
    children, so {root} always comes first.
    """
    total = count_cuts(tree)
    if total > limit:
        raise LimitExceeded(f"{total} cuts exceed limit {limit}")

    def rec(nid: str) -> Iterator[Tuple[str, ...]]:
        node = tree.nodes[nid]
        yield (nid,)
        if node.is_leaf:
            return
        for combo in itertools.product(*(list(rec(c)) for c in node.children)):
            yield tuple(itertools.chain.from_iterable(combo))

    for nodes in rec(tree.root):
        cut = frozenset(nodes)
        yield TreeCut(tree.time_index, cut, derive_labels(tree, cut))


# ---------------------------------------------------------------------------
# Construction helpers


def build_tree_from_edges(
    time_index: int,
    root: str,
    children: Mapping[str, Sequence[str]],
    leaf_docs: Mapping[str, Sequence[str]],
    centroids: Optional[Mapping[str, np.ndarray]] = None,
) -> TopicTree:
    """Assemble a TopicTree from parent->children edges and per-leaf doc sets.

    Internal doc sets are unioned bottom-up; depths derived from the root.
    Centroids default to None unless supplied.
    """
    depth: Dict[str, int] = {root: 0}
    order: List[str] = []
    stack = [root]
    while stack:
        nid = stack.pop()
        order.append(nid)
        for c in children.get(nid, ()):  # stored order
            depth[c] = depth[nid] + 1
            stack.append(c)

    docs: Dict[str, FrozenSet[str]] = {}
    for nid in reversed(order):
        kids = children.get(nid, ())
        if kids:
            docs[nid] = frozenset().union(*(docs[c] for c in kids))
        else:
            docs[nid] = frozenset(leaf_docs.get(nid, ()))

    nodes = {
        nid: TopicNode(
            id=nid,
            children=tuple(children.get(nid, ())),
            doc_ids=docs[nid],
            centroid=None if centroids is None else centroids.get(nid),
            depth=depth[nid],
        )
        for nid in order
    }
    return TopicTree(time_index=time_index, root=root, nodes=nodes)


def unit_vector(sparse_sum: Mapping[int, float], size: int) -> Optional[np.ndarray]:
    """Dense L2-normalized vector from a sparse sum; None for an all-zero sum."""
    v = np.zeros(size)
    for idx, c in sparse_sum.items():
        v[idx] = c
    norm = np.linalg.norm(v)
    if norm == 0:
        return None
    return v / norm


def sum_sparse(vectors: Sequence[SparseVec]) -> Dict[int, int]:
    out: Dict[int, int] = {}
    for vec in vectors:
        for idx, c in vec.items():
            out[idx] = out.get(idx, 0) + c
    return out


def doc_centroid(doc_ids, vectors: Mapping[str, SparseVec], size: int) -> Optional[np.ndarray]:
    return unit_vector(sum_sparse([vectors[d] for d in sorted(doc_ids)]), size)


# ---------------------------------------------------------------------------
# JSON wire formats (exact field names are part of the file contract)


def tree_to_json(tree: TopicTree, vocabulary_ref: str = "vocabulary.json") -> dict:
    parents = tree.parent_map()
    nodes = [
        {
            "id": nid,
            "parent": parents.get(nid),
            "doc_ids": sorted(tree.nodes[nid].doc_ids) if tree.nodes[nid].is_leaf else [],
        }
        for nid in sorted(tree.nodes)
    ]
    return {"time_index": tree.time_index, "vocabulary_ref": vocabulary_ref, "nodes": nodes}


def tree_from_json(
    data: dict,
    vectors: Optional[Mapping[str, SparseVec]] = None,
    vocab_size: Optional[int] = None,
) -> TopicTree:
    try:
        time_index = data["time_index"]
        entries = data["nodes"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed tree object: missing {exc}") from exc
    children: Dict[str, List[str]] = {}
    leaf_docs: Dict[str, List[str]] = {}
    root = None
    for e in entries:
        if e.get("parent") is None:
            root = e["id"]
        else:
            children.setdefault(e["parent"], []).append(e["id"])
        if e.get("doc_ids"):
            leaf_docs[e["id"]] = list(e["doc_ids"])
    if root is None:
        raise ParseError("tree object has no root node")
    for kids in children.values():
        kids.sort()
    tree = build_tree_from_edges(time_index, root, children, leaf_docs)
    if vectors is not None and vocab_size is not None:
        tree = with_centroids(tree, vectors, vocab_size)
    return tree


def with_centroids(
    tree: TopicTree, vectors: Mapping[str, SparseVec], vocab_size: int
) -> TopicTree:
    nodes = {
        nid: TopicNode(
            id=n.id,
            children=n.children,
            doc_ids=n.doc_ids,
            centroid=doc_centroid(n.doc_ids, vectors, vocab_size),
            depth=n.depth,
        )
        for nid, n in tree.nodes.items()
    }
    return TopicTree(time_index=tree.time_index, root=tree.root, nodes=nodes)


def mapping_to_json(mapping: TreeMapping) -> dict:
    return {
        "from_time": mapping.from_time,
        "to_time": mapping.to_time,
        "topic_pairs": [[r, s, w] for r, s, w in mapping.topic_pairs],
        "doc_pairs": [[a, b, c] for a, b, c in mapping.doc_pairs],
    }


def mapping_from_json(data: dict) -> TreeMapping:
    try:
        return TreeMapping(
            from_time=data["from_time"],
            to_time=data["to_time"],
            topic_pairs=tuple((r, s, float(w)) for r, s, w in data["topic_pairs"]),
            doc_pairs=tuple((a, b, float(c)) for a, b, c in data["doc_pairs"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed mapping object: {exc}") from exc


def cut_to_json(cut: TreeCut, score=None) -> dict:
    out = {"time_index": cut.time_index, "cut_nodes": sorted(cut.cut_nodes)}
    if score is not None:
        out["score"] = {
            "log_fit": score.log_fit,
            "log_smooth": score.log_smooth,
            "log_likelihood": score.log_likelihood,
            "log_prior": score.log_prior,
            "total": score.total,
        }
    return out


def canonical_json(obj) -> str:
    """Deterministic serialization: sorted keys, floats rounded to 9 places."""

    def clean(x):
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, float):
            r = round(x, 9)
            return 0.0 if r == 0 else r
        if isinstance(x, (np.floating, np.integer)):
            return clean(x.item())
        return x

    return json.dumps(clean(obj), sort_keys=True, separators=(",", ":"))
