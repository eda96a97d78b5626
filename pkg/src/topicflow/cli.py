"""Batch pipeline driver, benchmark harness, and server launcher.

Subcommands: ingest (corpus -> trees/mappings), cut (trees + foci -> cut
sequence), metrics (cuts -> CSV/JSON report), bench (scalability protocol),
layout (scene JSON/SVG), serve (HTTP API), demo (seeded synthetic
end-to-end). Every subcommand is reproducible under --seed.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import layout as layout_mod
from .dcm import DcmParams
from .errors import TopicflowError
from .ingest import BuildParams, VocabParams, build_tree, link_trees, load_corpus, vectorize
from .metrics import DoiParams, compute_report, doi_baseline_cut
from .model import (
    Focus,
    FocusSet,
    TopicTree,
    canonical_json,
    cut_to_json,
    mapping_from_json,
    mapping_to_json,
    make_cut,
    tree_from_json,
    tree_to_json,
    unit_vector,
)
from .postprocess import PostParams, auto_focus, group_cut_nodes, groups_to_json
from .synth import (
    generate_corpus,
    identity_mapping,
    internal_node_count,
    make_tree_with_internal_nodes,
    replicate_tree,
)
from .treecut import CutParams, solve_stream


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n")


def _write_json(path: Path, obj) -> None:
    _write(path, canonical_json(obj))


def _vectors_to_json(vectors) -> dict:
    return {d: {str(k): v for k, v in sorted(vec.items())} for d, vec in sorted(vectors.items())}


def _vectors_from_json(raw) -> Dict[str, Dict[int, int]]:
    return {d: {int(k): int(v) for k, v in vec.items()} for d, vec in raw.items()}


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args) -> int:
    out = Path(args.out)
    slices = load_corpus(args.corpus, window_days=args.window_days)
    if not slices:
        print("corpus is empty", file=sys.stderr)
        return 1
    vocab, vectors = vectorize(slices, VocabParams(min_df=args.min_df))
    dcm = DcmParams.symmetric(vocab.size, args.alpha)
    build = BuildParams(seed=args.seed)
    trees = [build_tree(sl, vectors, dcm, build) for sl in slices]
    mappings = [
        link_trees(trees[t], trees[t + 1], vectors, build) for t in range(len(trees) - 1)
    ]
    _write_json(out / "vocabulary.json", {"terms": list(vocab.terms)})
    _write_json(out / "vectors.json", _vectors_to_json(vectors))
    _write_json(
        out / "documents.json",
        [
            {
                "id": d.id,
                "timestamp": d.timestamp,
                "source": d.source,
                "title": d.title,
            }
            for sl in slices
            for d in sl.documents
        ],
    )
    for tree in trees:
        _write_json(out / "trees" / f"tree_{tree.time_index:03d}.json", tree_to_json(tree))
    for m in mappings:
        _write_json(
            out / "mappings" / f"mapping_{m.from_time:03d}.json", mapping_to_json(m)
        )
    _write_json(
        out / "manifest.json",
        {
            "slices": len(slices),
            "vocabulary_size": vocab.size,
            "window_days": args.window_days,
            "min_df": args.min_df,
            "alpha": args.alpha,
            "seed": args.seed,
        },
    )
    print(f"wrote {len(trees)} trees to {out}")
    return 0


def _load_data(data_dir: str):
    data = Path(data_dir)
    vocab_terms = json.loads((data / "vocabulary.json").read_text())["terms"]
    vectors = _vectors_from_json(json.loads((data / "vectors.json").read_text()))
    trees = []
    for p in sorted((data / "trees").glob("tree_*.json")):
        trees.append(tree_from_json(json.loads(p.read_text()), vectors, len(vocab_terms)))
    mappings = []
    for p in sorted((data / "mappings").glob("mapping_*.json")):
        mappings.append(mapping_from_json(json.loads(p.read_text())))
    docs_meta = []
    doc_path = data / "documents.json"
    if doc_path.exists():
        docs_meta = json.loads(doc_path.read_text())
    return vocab_terms, vectors, trees, mappings, docs_meta


def _parse_focus(spec: str, trees, post: PostParams) -> Optional[FocusSet]:
    if spec == "none":
        return None
    if spec == "auto":
        nodes = auto_focus(trees[0], post)
        return FocusSet(
            tuple(Focus(0, nid, trees[0].nodes[nid].doc_ids) for nid in nodes)
        )
    foci = []
    for ref in spec.split(","):
        ref = ref.strip()
        t = int(ref[1 : ref.index(":")])
        foci.append(Focus(t, ref, trees[t].nodes[ref].doc_ids))
    return FocusSet(tuple(foci))


def _focus_vectors(foci: Optional[FocusSet], vectors, size: int):
    if foci is None:
        return []
    out = []
    for f in foci.foci:
        acc: Dict[int, int] = {}
        for d in sorted(f.doc_ids):
            for idx, c in vectors[d].items():
                acc[idx] = acc.get(idx, 0) + c
        vec = unit_vector(acc, size)
        out.append(vec if vec is not None else np.zeros(size))
    return out


def cmd_cut(args) -> int:
    vocab_terms, vectors, trees, mappings, _ = _load_data(args.data)
    dcm = DcmParams.symmetric(len(vocab_terms), args.alpha)
    params = CutParams(lam=args.lam, restarts=args.restarts, rng_seed=args.seed)
    post = PostParams(gamma=args.gamma, w_max=args.w_max)
    foci = _parse_focus(args.focus, trees, post)
    fvecs = _focus_vectors(foci, vectors, len(vocab_terms))

    cuts = []
    scores = []
    prev = None
    for t, tree in enumerate(trees):
        mapping = mappings[t - 1] if t > 0 else None
        cut, score = solve_stream(tree, prev, mapping, foci, vectors, dcm, params)
        cuts.append(cut)
        scores.append(score)
        prev = cut

    groups_per_t = []
    prev_groups = None
    for t, tree in enumerate(trees):
        groups = group_cut_nodes(tree, cuts[t], fvecs, prev_groups, post)
        groups_per_t.append(groups)
        prev_groups = groups

    payload = {
        "params": {
            "lambda": args.lam,
            "alpha": args.alpha,
            "gamma": args.gamma,
            "w_max": args.w_max,
            "seed": args.seed,
        },
        "foci": [
            {"time_index": f.time_index, "node": f.node_id} for f in (foci.foci if foci else ())
        ],
        "cuts": [
            dict(cut_to_json(cuts[t], scores[t]), groups=groups_to_json(groups_per_t[t]))
            for t in range(len(trees))
        ],
    }
    _write_json(Path(args.out), payload)
    print(f"wrote {len(cuts)} cuts to {args.out}")
    return 0


def _load_cuts(path: str, trees):
    payload = json.loads(Path(path).read_text())
    cuts = []
    for entry in payload["cuts"]:
        t = entry["time_index"]
        cuts.append(make_cut(trees[t], set(entry["cut_nodes"])))
    foci = None
    if payload.get("foci"):
        foci = FocusSet(
            tuple(
                Focus(f["time_index"], f["node"], trees[f["time_index"]].nodes[f["node"]].doc_ids)
                for f in payload["foci"]
            )
        )
    return payload, cuts, foci


def cmd_metrics(args) -> int:
    vocab_terms, vectors, trees, mappings, _ = _load_data(args.data)
    payload, cuts, foci = _load_cuts(args.cuts, trees)
    if foci is None:
        print("cuts file has no foci; metrics need a focus set", file=sys.stderr)
        return 1
    dcm = DcmParams.symmetric(len(vocab_terms), payload["params"].get("alpha", 0.01))
    params = CutParams(lam=payload["params"].get("lambda", 1.0))
    report = compute_report(trees, cuts, mappings, foci, vectors, dcm, params)
    out = Path(args.out)
    _write(out, report.to_csv())
    _write_json(out.with_suffix(".json"), report.to_json())
    print(f"wrote metrics for {len(cuts)} steps to {out}")
    return 0


# ---------------------------------------------------------------------------
# bench


def bench_scaling(
    sizes: List[int],
    m_values: List[int],
    repeats: int,
    seed: int,
    base_internal: int = 118,
    vocab_size: int = 400,
    lam: float = 1.0,
    restarts: int = 2,
) -> Tuple[List[dict], float]:
    """Replicated-tree scaling protocol.

    For each replication factor s the base tree is copied s times under a
    fresh root at two consecutive steps; solve time on the second step is
    recorded along with time normalized by (I_avg / I_cur)^2.
    """
    base_tree, base_vecs = make_tree_with_internal_nodes(
        0, base_internal, seed=seed, vocab_size=vocab_size
    )
    rng = np.random.default_rng(seed)
    rows: List[dict] = []
    inums = [s * base_internal for s in sizes]
    i_avg = sum(inums) / len(inums)
    params = CutParams(lam=lam, max_enumeration=0, restarts=restarts, rng_seed=seed)

    for s in sizes:
        tree0, vecs0 = replicate_tree(base_tree, base_vecs, s, 0)
        tree1, vecs1 = replicate_tree(base_tree, base_vecs, s, 1)
        vectors = {**vecs0, **vecs1}
        mapping = identity_mapping(tree0, tree1)
        i_cur = internal_node_count(tree0, exclude_root=tree0.root)
        node_pool = sorted(tree0.nodes)
        for m in m_values:
            for rep in range(repeats):
                picks = rng.choice(len(node_pool), size=m, replace=False)
                foci = FocusSet(
                    tuple(
                        Focus(0, node_pool[int(i)], tree0.nodes[node_pool[int(i)]].doc_ids)
                        for i in sorted(picks)
                    )
                )
                prev_cut, _ = solve_stream(tree0, None, None, foci, vectors,
                                           DcmParams.symmetric(vocab_size, 0.01), params)
                t0 = time.perf_counter()
                solve_stream(
                    tree1,
                    prev_cut,
                    mapping,
                    foci,
                    vectors,
                    DcmParams.symmetric(vocab_size, 0.01),
                    params,
                )
                wall = time.perf_counter() - t0
                rows.append(
                    {
                        "I_num": i_cur,
                        "m": m,
                        "P_num": 1,
                        "seconds": wall,
                        "normalized_seconds": wall * (i_avg / i_cur) ** 2,
                    }
                )
    slope = fit_loglog_slope(rows)
    return rows, slope


def fit_loglog_slope(rows: List[dict]) -> float:
    """Least-squares slope of log(mean seconds per I_num) against log I_num."""
    by_inum: Dict[int, List[float]] = {}
    for r in rows:
        by_inum.setdefault(r["I_num"], []).append(r["seconds"])
    xs = np.log([i for i in sorted(by_inum)])
    ys = np.log([np.mean(by_inum[i]) for i in sorted(by_inum)])
    if len(xs) < 2:
        return float("nan")
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def cmd_bench(args) -> int:
    sizes = [int(x) for x in args.sizes.split(",")]
    m_values = [int(x) for x in args.m.split(",")]
    rows, slope = bench_scaling(
        sizes,
        m_values,
        args.repeats,
        args.seed,
        base_internal=args.base_internal,
        lam=args.lam,
        restarts=args.restarts,
    )
    out = Path(args.out)
    lines = ["I_num,m,P_num,seconds,normalized_seconds"]
    for r in rows:
        lines.append(
            f"{r['I_num']},{r['m']},{r['P_num']},{r['seconds']:.6f},{r['normalized_seconds']:.6f}"
        )
    _write(out, "\n".join(lines))
    _write_json(
        out.with_suffix(".meta.json"),
        {"solver": "heuristic", "loglog_slope": slope, "sizes": sizes, "m": m_values},
    )
    print(f"log-log slope: {slope:.3f}; wrote {len(rows)} records to {out}")
    return 0


# ---------------------------------------------------------------------------
# layout


def cmd_layout(args) -> int:
    vocab_terms, vectors, trees, mappings, _ = _load_data(args.data)
    payload, cuts, foci = _load_cuts(args.cuts, trees)
    post = PostParams(
        gamma=payload["params"].get("gamma", 0.6), w_max=payload["params"].get("w_max", 0.8)
    )
    fvecs = _focus_vectors(foci, vectors, len(vocab_terms))
    groups = []
    prev = None
    for t, tree in enumerate(trees):
        g = group_cut_nodes(tree, cuts[t], fvecs, prev, post)
        groups.append(g)
        prev = g
    params = layout_mod.LayoutParams()
    w, h = (float(x) for x in args.viewport.split("x"))
    orders = layout_mod.order_nodes(trees, cuts, groups, mappings, params)
    scene = layout_mod.compute_geometry(
        trees, cuts, groups, mappings, orders, params, (w, h), fvecs
    )
    scene = layout_mod.route_edges(scene, params)
    _write_json(Path(args.out), scene)
    if args.svg:
        _write(Path(args.svg), scene_to_svg(scene))
    print(f"wrote scene with {len(scene['bars'])} bars to {args.out}")
    return 0


PALETTE = ["#c23f44", "#e0b13f", "#4c9e58", "#7d5fa3", "#4176a8", "#b06396"]


def scene_to_svg(scene: dict) -> str:
    w, h = scene["viewport"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.0f} {h:.0f}">'
    ]
    for name, (x0, x1) in sorted(scene["regions"].items()):
        parts.append(
            f'<rect x="{x0:.1f}" y="0" width="{x1 - x0:.1f}" height="{h:.0f}" '
            f'fill="none" stroke="#ddd" data-region="{name}"/>'
        )
    for s in scene["stripes"]:
        pts = s["control_points"]
        if len(pts) == 4:
            d = (
                f"M {pts[0][0]:.1f} {pts[0][1]:.1f} "
                f"C {pts[1][0]:.1f} {pts[1][1]:.1f} {pts[2][0]:.1f} {pts[2][1]:.1f} "
                f"{pts[3][0]:.1f} {pts[3][1]:.1f}"
            )
        else:
            d = "M " + " L ".join(f"{x:.1f} {y:.1f}" for x, y in pts)
        parts.append(
            f'<path d="{d}" fill="none" stroke="#9ab" '
            f'stroke-width="{max(1.0, s["left_width"]):.1f}" opacity="0.5"/>'
        )
    for b in scene["bars"]:
        color = PALETTE[b["topic"] % len(PALETTE)]
        parts.append(
            f'<rect x="{b["x"]:.1f}" y="{b["y"]:.1f}" width="{b["width"]:.1f}" '
            f'height="{b["height"]:.1f}" fill="{color}"/>'
        )
        if b["dark_height"] > 0:
            parts.append(
                f'<rect x="{b["x"]:.1f}" y="{b["dark_top"]:.1f}" width="{b["width"]:.1f}" '
                f'height="{b["dark_height"]:.1f}" fill="#333" opacity="0.6"/>'
            )
    for item in scene["archive_items"]:
        color = PALETTE[item["topic"] % len(PALETTE)]
        parts.append(
            f'<rect x="0" y="{item["y"]:.1f}" width="{scene["regions"]["archive"][1]:.1f}" '
            f'height="{item["height"]:.1f}" fill="{color}" opacity="0.8"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# serve / demo


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_demo(args) -> int:
    out = Path(args.out)
    rows = generate_corpus(
        args.seed, n_slices=args.slices, n_topics=4, docs_per_slice=args.docs
    )
    corpus_path = out / "corpus.jsonl"
    corpus_path.parent.mkdir(parents=True, exist_ok=True)
    corpus_path.write_text("\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n")

    ns = argparse.Namespace(
        corpus=str(corpus_path),
        out=str(out / "data"),
        window_days=7,
        min_df=2,
        alpha=args.alpha,
        seed=args.seed,
    )
    rc = cmd_ingest(ns)
    if rc:
        return rc
    ns = argparse.Namespace(
        data=str(out / "data"),
        focus="auto",
        lam=args.lam,
        alpha=args.alpha,
        gamma=0.6,
        w_max=0.8,
        restarts=5,
        seed=args.seed,
        out=str(out / "cuts.json"),
    )
    rc = cmd_cut(ns)
    if rc:
        return rc
    ns = argparse.Namespace(
        data=str(out / "data"), cuts=str(out / "cuts.json"), out=str(out / "metrics.csv")
    )
    rc = cmd_metrics(ns)
    if rc:
        return rc
    ns = argparse.Namespace(
        data=str(out / "data"),
        cuts=str(out / "cuts.json"),
        viewport=args.viewport,
        out=str(out / "scene.json"),
        svg=str(out / "scene.svg"),
    )
    rc = cmd_layout(ns)
    if rc:
        return rc
    print(f"demo artifacts in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="topicflow")
    sub = p.add_subparsers(dest="command", required=True)

    pi = sub.add_parser("ingest", help="corpus JSONL -> trees + mappings")
    pi.add_argument("--corpus", required=True)
    pi.add_argument("--out", required=True)
    pi.add_argument("--window-days", type=int, default=7, dest="window_days")
    pi.add_argument("--min-df", type=int, default=2, dest="min_df")
    pi.add_argument("--alpha", type=float, default=0.01)
    pi.add_argument("--seed", type=int, default=0)
    pi.set_defaults(func=cmd_ingest)

    pc = sub.add_parser("cut", help="trees + foci -> streaming cut sequence")
    pc.add_argument("--data", required=True)
    pc.add_argument("--focus", default="auto", help='"auto", "none", or refs "t0:0,t1:0.2"')
    pc.add_argument("--lambda", type=float, default=1.0, dest="lam")
    pc.add_argument("--alpha", type=float, default=0.01)
    pc.add_argument("--gamma", type=float, default=0.6)
    pc.add_argument("--w-max", type=float, default=0.8, dest="w_max")
    pc.add_argument("--restarts", type=int, default=5)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", required=True)
    pc.set_defaults(func=cmd_cut)

    pm = sub.add_parser("metrics", help="cuts -> fitness/smoothness report")
    pm.add_argument("--data", required=True)
    pm.add_argument("--cuts", required=True)
    pm.add_argument("--out", required=True)
    pm.set_defaults(func=cmd_metrics)

    pb = sub.add_parser("bench", help="replicated-tree scaling protocol")
    pb.add_argument("--sizes", default="1,3,5,7,9,11,13,15")
    pb.add_argument("--m", default="1,3,5")
    pb.add_argument("--repeats", type=int, default=1)
    pb.add_argument("--base-internal", type=int, default=118, dest="base_internal")
    pb.add_argument("--lambda", type=float, default=1.0, dest="lam")
    pb.add_argument("--restarts", type=int, default=2)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--out", required=True)
    pb.set_defaults(func=cmd_bench)

    pl = sub.add_parser("layout", help="cuts -> scene JSON / SVG")
    pl.add_argument("--data", required=True)
    pl.add_argument("--cuts", required=True)
    pl.add_argument("--viewport", default="1600x900")
    pl.add_argument("--out", required=True)
    pl.add_argument("--svg", default=None)
    pl.set_defaults(func=cmd_layout)

    ps = sub.add_parser("serve", help="start the HTTP API")
    ps.add_argument("--host", default="127.0.0.1")
    ps.add_argument("--port", type=int, default=8800)
    ps.set_defaults(func=cmd_serve)

    pd = sub.add_parser("demo", help="seeded synthetic end-to-end run")
    pd.add_argument("--out", required=True)
    pd.add_argument("--seed", type=int, default=7)
    pd.add_argument("--slices", type=int, default=5)
    pd.add_argument("--docs", type=int, default=50)
    pd.add_argument("--lambda", type=float, default=1.0, dest="lam")
    pd.add_argument("--alpha", type=float, default=0.01)
    pd.add_argument("--viewport", default="1600x900")
    pd.set_defaults(func=cmd_demo)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TopicflowError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
