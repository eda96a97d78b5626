"""Synthetic drifting corpora and trees for demos, benchmarks, and tests."""
from __future__ import annotations

import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from .model import SparseVec, TopicTree, TreeMapping, build_tree_from_edges, with_centroids

BASE_TIMESTAMP = 1_600_000_000


def generate_corpus(
    seed: int,
    n_slices: int = 5,
    n_topics: int = 4,
    docs_per_slice: int = 50,
    terms_per_topic: int = 12,
    shared_terms: int = 8,
    tokens_per_doc: Tuple[int, int] = (10, 20),
    drift: float = 0.15,
    tweet_fraction: float = 0.3,
    window_days: int = 7,
) -> List[dict]:
    """JSONL-ready documents from drifting per-topic term distributions.

    Each topic owns a block of vocabulary plus a shared tail; its term
    weights random-walk between slices at rate `drift`, so adjacent slices
    stay related while the vocabulary usage gradually shifts.
    """
    rng = np.random.default_rng(seed)
    vocab = [f"topicterm{i:03d}" for i in range(n_topics * terms_per_topic + shared_terms)]

    weights = []
    for topic in range(n_topics):
        w = np.full(len(vocab), 0.02)
        lo = topic * terms_per_topic
        w[lo : lo + terms_per_topic] = rng.uniform(1.0, 2.0, size=terms_per_topic)
        w[n_topics * terms_per_topic :] = rng.uniform(0.1, 0.3, size=shared_terms)
        weights.append(w / w.sum())

    docs = []
    window = window_days * 86_400
    for t in range(n_slices):
        for topic in range(n_topics):
            blk = slice(topic * terms_per_topic, (topic + 1) * terms_per_topic)
            bump = rng.uniform(-drift, drift, size=terms_per_topic)
            w = weights[topic].copy()
            w[blk] = np.maximum(1e-4, w[blk] * (1 + bump))
            weights[topic] = w / w.sum()
        counts_per_topic = _spread(docs_per_slice, n_topics)
        di = 0
        for topic in range(n_topics):
            for _ in range(counts_per_topic[topic]):
                n_tok = int(rng.integers(tokens_per_doc[0], tokens_per_doc[1] + 1))
                drawn = rng.multinomial(n_tok, weights[topic])
                text = " ".join(
                    " ".join([vocab[i]] * int(c)) for i, c in enumerate(drawn) if c
                )
                source = "tweet" if rng.random() < tweet_fraction else "news"
                docs.append(
                    {
                        "id": f"s{t:02d}d{di:04d}",
                        "timestamp": BASE_TIMESTAMP + t * window + di * 60,
                        "source": source,
                        "title": f"topic {topic} update {t}.{di}",
                        "text": text,
                    }
                )
                di += 1
    return docs


def _spread(total: int, parts: int) -> List[int]:
    base = total // parts
    out = [base] * parts
    for i in range(total - base * parts):
        out[i] += 1
    return out


# ---------------------------------------------------------------------------
# Direct tree synthesis (benchmark scale)


def make_tree_with_internal_nodes(
    time_index: int,
    n_internal: int,
    seed: int,
    vocab_size: int = 400,
    docs_per_leaf: int = 1,
    children_range: Tuple[int, int] = (2, 4),
) -> Tuple[TopicTree, Dict[str, SparseVec]]:
    """Grow a random tree with exactly n_internal internal nodes.

    Each leaf owns `docs_per_leaf` documents with sparse random vectors;
    centroids are attached. Internal-node count includes the root.
    """
    rng = np.random.default_rng(seed)
    children: Dict[str, List[str]] = {}
    leaves = ["n0"]
    serial = 1
    internal = 0
    while internal < n_internal:
        pick = leaves[int(rng.integers(0, len(leaves)))] if internal else "n0"
        leaves.remove(pick)
        k = int(rng.integers(children_range[0], children_range[1] + 1))
        kids = [f"n{serial + i}" for i in range(k)]
        serial += k
        children[pick] = kids
        leaves.extend(kids)
        internal += 1

    vectors: Dict[str, SparseVec] = {}
    leaf_docs: Dict[str, List[str]] = {}
    for leaf in sorted(leaves):
        ids = []
        for j in range(docs_per_leaf):
            did = f"{leaf}:d{j}"
            support = rng.integers(0, vocab_size, size=6)
            vec: SparseVec = {}
            for s in support:
                vec[int(s)] = vec.get(int(s), 0) + int(rng.integers(1, 4))
            vectors[did] = vec
            ids.append(did)
        leaf_docs[leaf] = ids

    tree = build_tree_from_edges(time_index, "n0", children, leaf_docs)
    return with_centroids(tree, vectors, vocab_size), vectors


def replicate_tree(
    tree: TopicTree,
    vectors: Dict[str, SparseVec],
    copies: int,
    time_index: int,
) -> Tuple[TopicTree, Dict[str, SparseVec]]:
    """Join `copies` relabeled copies of a tree under one synthetic root.

    The copied trees' internal-node counts add up exactly; the synthetic
    root is excluded from that bookkeeping by construction.
    """
    children: Dict[str, List[str]] = {}
    leaf_docs: Dict[str, List[str]] = {}
    cents = {}
    new_vectors = dict(vectors)
    root = f"t{time_index}:R"
    children[root] = []
    for c in range(copies):
        pre = f"t{time_index}:c{c}."

        def ren(nid, pre=pre):
            return pre + nid

        children[root].append(ren(tree.root))
        for nid, n in tree.nodes.items():
            if n.children:
                children[ren(nid)] = [ren(x) for x in n.children]
            else:
                ids = []
                for d in sorted(n.doc_ids):
                    did = f"t{time_index}c{c}:{d}"
                    new_vectors[did] = vectors[d]
                    ids.append(did)
                leaf_docs[ren(nid)] = ids
            cents[ren(nid)] = n.centroid
    cents[root] = tree.nodes[tree.root].centroid
    out = build_tree_from_edges(time_index, root, children, leaf_docs, centroids=cents)
    return out, new_vectors


def internal_node_count(tree: TopicTree, exclude_root: Optional[str] = None) -> int:
    return sum(
        1 for n in tree.nodes.values() if n.children and n.id != exclude_root
    )


def identity_mapping(tree_a: TopicTree, tree_b: TopicTree) -> TreeMapping:
    """Weight-1 pairs between structurally matching replicated trees."""

    def strip(nid):
        return nid.split(":", 1)[1] if ":" in nid else nid

    by_suffix = {}
    for nid in tree_a.nodes:
        by_suffix.setdefault(strip(nid), nid)
    pairs = []
    for nid in sorted(tree_b.nodes):
        sfx = strip(nid)
        if sfx in by_suffix:
            pairs.append((nid, by_suffix[sfx], 1.0))
    return TreeMapping(tree_a.time_index, tree_b.time_index, tuple(pairs), ())
