import numpy as np
import pytest

from topicflow.model import build_tree_from_edges, with_centroids


def random_tree(rng, time_index=0, max_nodes=15, vocab_size=20, docs_per_slice=50):
    """Random multi-branch tree with leaf-partitioned random documents.

    Returns (tree, vectors) where vectors maps doc id -> sparse counts and the
    tree carries unit centroids.
    """
    n_nodes = int(rng.integers(1, max_nodes + 1))
    children = {}
    ids = [f"t{time_index}:0"]
    frontier = [ids[0]]
    while len(ids) < n_nodes:
        parent = frontier[int(rng.integers(0, len(frontier)))]
        k = int(rng.integers(1, 4))
        k = min(k, n_nodes - len(ids))
        kids = []
        base = len(children.get(parent, []))
        for j in range(k):
            cid = f"{parent}.{base + j}"
            kids.append(cid)
            ids.append(cid)
        children.setdefault(parent, []).extend(kids)
        frontier.extend(kids)
        if len(children[parent]) == 1:
            # avoid unary chains: force at least two children
            cid = f"{parent}.{base + len(kids)}"
            children[parent].append(cid)
            ids.append(cid)
            frontier.append(cid)

    leaves = [i for i in ids if i not in children]
    n_docs = max(docs_per_slice, len(leaves))
    doc_ids = [f"d{time_index}:{i}" for i in range(n_docs)]
    vectors = {}
    for d in doc_ids:
        support = rng.integers(0, vocab_size, size=int(rng.integers(2, 7)))
        vec = {}
        for s in support:
            vec[int(s)] = vec.get(int(s), 0) + int(rng.integers(1, 4))
        vectors[d] = vec

    leaf_docs = {leaf: [] for leaf in leaves}
    for i, d in enumerate(doc_ids):
        if i < len(leaves):
            leaf_docs[leaves[i]].append(d)  # every leaf nonempty
        else:
            leaf_docs[leaves[int(rng.integers(0, len(leaves)))]].append(d)

    tree = build_tree_from_edges(time_index, ids[0], children, leaf_docs)
    return with_centroids(tree, vectors, vocab_size), vectors


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
