"""Corpus loading, vectorization, per-slice tree building, and tree linking.

Trees are built per time slice with a deterministic two-stage pipeline:
seeded k-means into micro-clusters, then greedy agglomeration of the cluster
forest by the DCM merge log-odds log f(A u B) - log f(A) - log f(B), with
absorption into an existing parent producing multi-branch nodes. Adjacent
trees are linked by top-1 cosine document pairs and the topic-pair weights
they induce.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dcm import DcmParams, doc_log_coefficient, log_delta_shift
from .errors import DuplicateId, EmptyVocabulary, ParseError
from .model import (
    Document,
    SparseVec,
    TopicTree,
    TreeMapping,
    Vocabulary,
    build_tree_from_edges,
    with_centroids,
)

SECONDS_PER_DAY = 86_400

STOPWORDS = frozenset(
    """a about above after again all also am an and any are as at be because been
    before being below between both but by can did do does doing down during each
    few for from further had has have having he her here hers him his how i if in
    into is it its just me more most my no nor not of off on once only or other
    our ours out over own same she should so some such than that the their theirs
    them then there these they this those through to too under until up very was
    we were what when where which while who whom why will with you your yours""".split()
)


@dataclass(frozen=True)
class CorpusSlice:
    time_index: int
    documents: Tuple[Document, ...]

    def __post_init__(self):
        if not self.documents:
            raise ValueError("slice must hold at least one document")


@dataclass(frozen=True)
class VocabParams:
    min_df: int = 2
    min_token_len: int = 3


@dataclass(frozen=True)
class BuildParams:
    micro_k: Optional[int] = None  # default ceil(sqrt(n))
    max_children: int = 8
    min_subtree_docs: int = 2
    link_threshold: float = 0.3
    seed: int = 0
    kmeans_iters: int = 50

    def __post_init__(self):
        if self.micro_k is not None and self.micro_k < 1:
            raise ValueError("micro_k must be >= 1")
        if self.max_children < 2:
            raise ValueError("max_children must be >= 2")


def load_corpus(path, window_days: int = 7) -> List[CorpusSlice]:
    """Read a JSONL corpus and bucket documents into consecutive time slices.

    Each line needs id, timestamp, source, title, text. Empty buckets are
    dropped and the remaining slices renumbered consecutively.
    """
    docs: List[Document] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            try:
                doc = Document(
                    id=str(raw["id"]),
                    timestamp=int(raw["timestamp"]),
                    source=str(raw["source"]),
                    title=str(raw["title"]),
                    text=str(raw["text"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad document: {exc!r}", line=lineno) from exc
            if doc.id in seen:
                raise DuplicateId(doc.id)
            seen.add(doc.id)
            docs.append(doc)
    if not docs:
        return []
    window = window_days * SECONDS_PER_DAY
    t0 = min(d.timestamp for d in docs)
    buckets: Dict[int, List[Document]] = {}
    for d in docs:
        buckets.setdefault((d.timestamp - t0) // window, []).append(d)
    slices = []
    for i, key in enumerate(sorted(buckets)):
        members = tuple(sorted(buckets[key], key=lambda d: (d.timestamp, d.id)))
        slices.append(CorpusSlice(time_index=i, documents=members))
    return slices


_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def tokenize(text: str, min_len: int = 3) -> List[str]:
    return [
        tok
        for tok in _TOKEN_SPLIT.split(text.lower())
        if len(tok) >= min_len and tok not in STOPWORDS
    ]


def vectorize(
    slices: Sequence[CorpusSlice], params: VocabParams = VocabParams()
) -> Tuple[Vocabulary, Dict[str, SparseVec]]:
    """Token counts per document over the document-frequency-filtered vocabulary."""
    doc_tokens: Dict[str, List[str]] = {}
    df: Dict[str, int] = {}
    for sl in slices:
        for d in sl.documents:
            toks = tokenize(d.title + " " + d.text, params.min_token_len)
            doc_tokens[d.id] = toks
            for term in set(toks):
                df[term] = df.get(term, 0) + 1
    terms = sorted(t for t, c in df.items() if c >= params.min_df)
    if not terms:
        raise EmptyVocabulary("no term passed the document-frequency filter")
    vocab = Vocabulary(tuple(terms))
    index = vocab.index()
    vectors: Dict[str, SparseVec] = {}
    for doc_id, toks in doc_tokens.items():
        vec: SparseVec = {}
        for tok in toks:
            idx = index.get(tok)
            if idx is not None:
                vec[idx] = vec.get(idx, 0) + 1
        vectors[doc_id] = dict(sorted(vec.items()))
    return vocab, vectors


def count_against(vocab: Vocabulary, text: str, min_len: int = 3) -> SparseVec:
    """Count tokens of `text` against an existing vocabulary."""
    index = vocab.index()
    vec: SparseVec = {}
    for tok in tokenize(text, min_len):
        idx = index.get(tok)
        if idx is not None:
            vec[idx] = vec.get(idx, 0) + 1
    return dict(sorted(vec.items()))


def _dense_units(doc_ids: Sequence[str], vectors: Mapping[str, SparseVec], size: int):
    mat = np.zeros((len(doc_ids), size))
    for i, d in enumerate(doc_ids):
        for idx, c in vectors[d].items():
            mat[i, idx] = c
    norms = np.linalg.norm(mat, axis=1)
    norms[norms == 0] = 1.0
    return mat / norms[:, None]


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator, iters: int) -> np.ndarray:
    n = points.shape[0]
    k = min(k, n)
    centers = points[rng.choice(n, size=k, replace=False)].copy()
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return labels


class _Agg:
    """A root in the agglomeration forest with cached DCM aggregates."""

    __slots__ = ("doc_ids", "children", "coeff", "counts", "log_f", "min_doc")

    def __init__(self, doc_ids, children, coeff, counts, log_f):
        self.doc_ids = doc_ids
        self.children = children  # list of _Agg or None for a micro-cluster leaf
        self.coeff = coeff
        self.counts = counts
        self.log_f = log_f
        self.min_doc = min(doc_ids)


def _aggregate(doc_ids, vectors, dcm) -> Tuple[float, SparseVec, float]:
    coeff = sum(doc_log_coefficient(vectors[d]) for d in sorted(doc_ids))
    counts: Dict[int, int] = {}
    for d in sorted(doc_ids):
        for idx, c in vectors[d].items():
            counts[idx] = counts.get(idx, 0) + c
    return coeff, counts, coeff + log_delta_shift(counts, dcm)


def _merge_odds(a: _Agg, b: _Agg, dcm: DcmParams) -> float:
    coeff = a.coeff + b.coeff
    counts = dict(a.counts)
    for idx, c in b.counts.items():
        counts[idx] = counts.get(idx, 0) + c
    return coeff + log_delta_shift(counts, dcm) - a.log_f - b.log_f


def build_tree(
    slice_: CorpusSlice,
    vectors: Mapping[str, SparseVec],
    dcm: DcmParams,
    params: BuildParams = BuildParams(),
) -> TopicTree:
    """Deterministic per-slice tree: micro-cluster, then greedy DCM joins."""
    doc_ids = sorted(d.id for d in slice_.documents)
    n = len(doc_ids)
    # seed independent of the slice index: content-identical slices must
    # produce isomorphic trees for the copied-batch smoothness contract
    rng = np.random.default_rng(params.seed)
    k = params.micro_k if params.micro_k is not None else math.ceil(math.sqrt(n))
    k = max(1, min(k, n))

    points = _dense_units(doc_ids, vectors, dcm.vocab_size)
    labels = _kmeans(points, k, rng, params.kmeans_iters)
    clusters: Dict[int, List[str]] = {}
    for i, d in enumerate(doc_ids):
        clusters.setdefault(int(labels[i]), []).append(d)
    groups = sorted((sorted(g) for g in clusters.values()), key=lambda g: g[0])

    # fold undersized micro-clusters into their nearest sibling cluster
    if len(groups) > 1:
        centers = [
            _dense_units(g, vectors, dcm.vocab_size).mean(axis=0) for g in groups
        ]
        keep, tiny = [], []
        for g, c in zip(groups, centers):
            (keep if len(g) >= params.min_subtree_docs else tiny).append((g, c))
        if keep and tiny:
            for g, c in tiny:
                sims = [float(np.dot(c, kc)) for _, kc in keep]
                keep[int(np.argmax(sims))][0].extend(g)
            groups = sorted((sorted(g) for g, _ in keep), key=lambda g: g[0])

    roots = [
        _Agg(tuple(g), None, *_aggregate(g, vectors, dcm)) for g in groups
    ]

    while len(roots) > 1:
        best = None
        for i in range(len(roots)):
            for j in range(i + 1, len(roots)):
                odds = _merge_odds(roots[i], roots[j], dcm)
                key = (odds, roots[i].min_doc, roots[j].min_doc)
                if best is None or odds > best[0][0] or (
                    odds == best[0][0] and key[1:] < best[0][1:]
                ):
                    best = (key, i, j)
        _, i, j = best
        a, b = roots[i], roots[j]
        merged_docs = tuple(sorted(a.doc_ids + b.doc_ids))
        coeff = a.coeff + b.coeff
        counts = dict(a.counts)
        for idx, c in b.counts.items():
            counts[idx] = counts.get(idx, 0) + c
        log_f = coeff + log_delta_shift(counts, dcm)

        a_comp = a.children is not None
        b_comp = b.children is not None
        if a_comp != b_comp:
            parent, child = (a, b) if a_comp else (b, a)
            if len(parent.children) < params.max_children:
                children = parent.children + [child]
            else:
                children = [parent, child]
        else:
            children = [a, b]
        merged = _Agg(merged_docs, children, coeff, counts, log_f)
        roots = [r for idx2, r in enumerate(roots) if idx2 not in (i, j)] + [merged]

    root = roots[0]
    t = slice_.time_index
    children_map: Dict[str, List[str]] = {}
    leaf_docs: Dict[str, List[str]] = {}

    def emit(node: _Agg, nid: str) -> None:
        if node.children is None:
            leaf_docs[nid] = list(node.doc_ids)
            return
        kids = sorted(node.children, key=lambda ch: ch.min_doc)
        ids = [f"{nid}.{i}" for i in range(len(kids))]
        children_map[nid] = ids
        for ch, cid in zip(kids, ids):
            emit(ch, cid)

    emit(root, f"t{t}:0")
    tree = build_tree_from_edges(t, f"t{t}:0", children_map, leaf_docs)
    return with_centroids(tree, vectors, dcm.vocab_size)


def link_trees(
    tree_a: TopicTree,
    tree_b: TopicTree,
    vectors: Mapping[str, SparseVec],
    params: BuildParams = BuildParams(),
) -> TreeMapping:
    """Document pairs by top-1 cosine neighbor, topic pairs by crossing counts.

    A topic-pair weight is |crossing doc pairs| / sqrt(|D_earlier| * |D_later|),
    clipped to [0, 1]; pairs with zero weight are not emitted.
    """
    if tree_b.time_index - tree_a.time_index != 1:
        raise ValueError("trees must be consecutive")
    docs_a = sorted(tree_a.nodes[tree_a.root].doc_ids)
    docs_b = sorted(tree_b.nodes[tree_b.root].doc_ids)
    size = 1
    for d in docs_a + docs_b:
        for idx in vectors[d]:
            size = max(size, idx + 1)
    ua = _dense_units(docs_a, vectors, size)
    ub = _dense_units(docs_b, vectors, size)
    sims = ua @ ub.T

    doc_pairs = []
    for i, a in enumerate(docs_a):
        j = int(sims[i].argmax())
        cos = float(sims[i, j])
        if cos >= params.link_threshold:
            doc_pairs.append((a, docs_b[j], min(1.0, cos)))

    leaf_of_a = {d: nid for nid, n in tree_a.nodes.items() if n.is_leaf for d in n.doc_ids}
    leaf_of_b = {d: nid for nid, n in tree_b.nodes.items() if n.is_leaf for d in n.doc_ids}
    counts: Dict[Tuple[str, str], int] = {}
    for a, b, _ in doc_pairs:
        chain_a = [leaf_of_a[a]] + tree_a.ancestors(leaf_of_a[a])
        chain_b = [leaf_of_b[b]] + tree_b.ancestors(leaf_of_b[b])
        for s in chain_a:
            for r in chain_b:
                counts[(r, s)] = counts.get((r, s), 0) + 1

    topic_pairs = []
    for (r, s), c in sorted(counts.items()):
        w = c / math.sqrt(
            len(tree_a.nodes[s].doc_ids) * len(tree_b.nodes[r].doc_ids)
        )
        w = min(1.0, w)
        if w > 0:
            topic_pairs.append((r, s, w))

    return TreeMapping(
        from_time=tree_a.time_index,
        to_time=tree_b.time_index,
        topic_pairs=tuple(topic_pairs),
        doc_pairs=tuple(doc_pairs),
    )
