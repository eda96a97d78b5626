"""Session-scoped API tying the pipeline together.

A session owns the corpus slices, trees, mappings, the streaming cut
sequence, display groups, sedimentation state, and an ordered event log.
Ingesting a batch appends one time step: build tree, link, solve the cut
given the previous one (never recomputing history), regroup, sediment the
documents, then announce a fresh layout. Analyst interactions (focus change,
split/merge, search, document links) run against the same state; readers see
immutable snapshots and every subscriber replays the same event sequence.
"""
from __future__ import annotations

import math
import threading
import uuid
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import layout as layout_mod
from .dcm import DcmParams
from .errors import (
    BadConfig,
    EmptyQueryVector,
    LeafSplit,
    NotInCut,
    NotSiblingGroup,
    OutOfOrderBatch,
    TopicflowError,
    UnknownDocument,
    UnknownNode,
)
from .ingest import BuildParams, CorpusSlice, VocabParams, build_tree, count_against, link_trees, vectorize
from .model import (
    Document,
    Focus,
    FocusSet,
    SparseVec,
    TopicTree,
    TreeCut,
    TreeMapping,
    Vocabulary,
    canonical_json,
    cut_to_json,
    make_cut,
    unit_vector,
)
from .postprocess import DisplayGroup, PostParams, auto_focus, group_cut_nodes, groups_to_json
from .sediment import Band, SedimentParams, SedimentState, cluster_batch, run_ticks, snapshot, spawn
from .treecut import CutParams, CutScore, solve_stream


@dataclass(frozen=True)
class SessionConfig:
    lam: float = 1.0
    alpha: float = 0.01
    gamma: float = 0.6
    w_max: float = 0.8
    min_df: int = 2
    seed: int = 0
    restarts: int = 5
    max_enumeration: int = 100_000
    cluster_size: int = 20
    sim_viewport: Tuple[float, float] = (1600.0, 900.0)
    max_sediment_ticks: int = 2000

    @classmethod
    def from_dict(cls, raw: Optional[dict]) -> "SessionConfig":
        raw = dict(raw or {})
        known = {f: raw.pop(f) for f in list(raw) if f in cls.__dataclass_fields__}
        if raw:
            raise BadConfig(f"unknown config keys: {sorted(raw)}")
        cfg = cls(**known)
        if cfg.lam < 0:
            raise BadConfig("lambda must be >= 0")
        if cfg.alpha <= 0:
            raise BadConfig("alpha must be positive")
        if not (0 < cfg.gamma < 1):
            raise BadConfig("gamma must lie in (0, 1)")
        if cfg.w_max <= 0:
            raise BadConfig("w_max must be positive")
        if cfg.min_df < 1:
            raise BadConfig("min_df must be >= 1")
        return cfg

    def cut_params(self) -> CutParams:
        return CutParams(
            lam=self.lam,
            max_enumeration=self.max_enumeration,
            restarts=self.restarts,
            rng_seed=self.seed,
        )

    def post_params(self) -> PostParams:
        return PostParams(gamma=self.gamma, w_max=self.w_max)

    def sediment_params(self) -> SedimentParams:
        return SedimentParams(cluster_size=self.cluster_size)


class Session:
    def __init__(self, config: SessionConfig):
        self.id = uuid.uuid4().hex
        self.config = config
        self.lock = threading.RLock()
        self.vocab: Optional[Vocabulary] = None
        self.dcm: Optional[DcmParams] = None
        self.docs: Dict[str, Document] = {}
        self.vectors: Dict[str, SparseVec] = {}
        self.slices: List[CorpusSlice] = []
        self.trees: List[TopicTree] = []
        self.mappings: List[TreeMapping] = []
        self.model_cuts: List[TreeCut] = []
        self.scores: List[CutScore] = []
        self.groups: List[List[DisplayGroup]] = []
        self.overrides: Dict[int, TreeCut] = {}
        self.focus: Optional[FocusSet] = None
        self.focus_vectors: List[np.ndarray] = []
        self.sediment = SedimentState()
        self.stripe_totals: Dict[str, int] = {}
        self.events: List[Tuple[str, dict]] = []
        self.version = 0
        self._layout_cache: Dict[Tuple[int, float, float], dict] = {}

    # -- helpers ------------------------------------------------------------

    def effective_cut(self, t: int) -> TreeCut:
        return self.overrides.get(t, self.model_cuts[t])

    def _emit(self, name: str, payload: dict) -> None:
        self.events.append((name, payload))

    def _focus_from_nodes(self, refs: Sequence[Tuple[int, str]]) -> FocusSet:
        foci = []
        for t, nid in refs:
            if not (0 <= t < len(self.trees)) or nid not in self.trees[t].nodes:
                raise UnknownNode(f"t{t}:{nid}")
            foci.append(Focus(t, nid, self.trees[t].nodes[nid].doc_ids))
        return FocusSet(tuple(foci))

    def _set_focus_vectors(self) -> None:
        assert self.focus is not None and self.vocab is not None
        self.focus_vectors = []
        for f in self.focus.foci:
            acc: Dict[int, int] = {}
            for d in sorted(f.doc_ids):
                for idx, c in self.vectors[d].items():
                    acc[idx] = acc.get(idx, 0) + c
            vec = unit_vector(acc, self.vocab.size)
            self.focus_vectors.append(vec if vec is not None else np.zeros(self.vocab.size))

    def _regroup(self, t: int) -> None:
        prev = self.groups[t - 1] if t > 0 else None
        groups = group_cut_nodes(
            self.trees[t],
            self.effective_cut(t),
            self.focus_vectors,
            prev,
            self.config.post_params(),
        )
        if t < len(self.groups):
            self.groups[t] = groups
        else:
            self.groups.append(groups)

    def _bands_for_latest(self) -> Dict[str, Band]:
        """Topic lanes at the newest displayed step of the internal layout."""
        if not self.trees:
            return {}
        scene = self._internal_scene()
        latest = len(self.trees) - 1
        bands = {}
        for bar in scene["bars"]:
            if bar["t"] == latest:
                bands[bar["group"]] = Band(
                    y0=bar["y"],
                    y1=bar["y"] + bar["height"],
                    face_x=bar["x"] + bar["width"],
                )
        return bands

    def _internal_scene(self) -> dict:
        return self.layout_scene(*self.config.sim_viewport, packed=False)

    # -- operations ---------------------------------------------------------

    def ingest_batch(self, raw_docs: Sequence[dict]) -> dict:
        with self.lock:
            if not raw_docs:
                raise BadConfig("batch must hold at least one document")
            docs = []
            for raw in raw_docs:
                try:
                    docs.append(
                        Document(
                            id=str(raw["id"]),
                            timestamp=int(raw["timestamp"]),
                            source=str(raw.get("source", "news")),
                            title=str(raw.get("title", "")),
                            text=str(raw["text"]),
                        )
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise BadConfig(f"bad document: {exc!r}") from exc
            for d in docs:
                if d.id in self.docs:
                    raise OutOfOrderBatch(f"document {d.id} already ingested")
            if self.slices:
                prev_max = max(d.timestamp for d in self.slices[-1].documents)
                if min(d.timestamp for d in docs) < prev_max:
                    raise OutOfOrderBatch(
                        "batch holds documents older than the latest slice"
                    )

            t = len(self.trees)
            sl = CorpusSlice(t, tuple(sorted(docs, key=lambda d: (d.timestamp, d.id))))
            if self.vocab is None:
                self.vocab, vecs = vectorize([sl], VocabParams(min_df=self.config.min_df))
                self.dcm = DcmParams.symmetric(self.vocab.size, self.config.alpha)
                self.vectors.update(vecs)
            else:
                for d in sl.documents:
                    self.vectors[d.id] = count_against(self.vocab, d.title + " " + d.text)
            for d in sl.documents:
                self.docs[d.id] = d

            build = BuildParams(seed=self.config.seed)
            tree = build_tree(sl, self.vectors, self.dcm, build)
            mapping = None
            if self.trees:
                mapping = link_trees(self.trees[-1], tree, self.vectors, build)

            # until the analyst selects foci, cuts come from fit + smoothness
            # + prior alone; the focus likelihood term joins via set_focus
            prev_cut = self.model_cuts[-1] if self.model_cuts else None
            cut, score = solve_stream(
                tree,
                prev_cut,
                mapping,
                self.focus,
                self.vectors,
                self.dcm,
                self.config.cut_params(),
            )

            # sediment the incoming batch toward the previous latest step
            tick_events: List[dict] = []
            if self.trees:
                self.sediment.bands = self._bands_for_latest()
                self.sediment.entry_x = float(self.config.sim_viewport[0])
                tokens = cluster_batch(
                    [(d.id, self.vectors[d.id]) for d in sl.documents],
                    self.groups[-1],
                    self.vocab.size,
                    self.config.sediment_params(),
                    seed=self.config.seed + t,
                )
                spawn(self.sediment, tokens, self.config.sediment_params())
                tick_events = run_ticks(
                    self.sediment,
                    self.config.sediment_params(),
                    self.config.max_sediment_ticks,
                )
                for ev in tick_events:
                    for delta in ev["stripe_deltas"]:
                        self.stripe_totals[delta["group"]] = (
                            self.stripe_totals.get(delta["group"], 0)
                            + delta["added_docs"]
                        )
            else:
                tick_events = [snapshot(self.sediment, {})]

            self.slices.append(sl)
            self.trees.append(tree)
            if mapping is not None:
                self.mappings.append(mapping)
            self.model_cuts.append(cut)
            self.scores.append(score)
            if self.focus is not None:
                self._set_focus_vectors()
            self._regroup(t)
            self.version += 1
            self._layout_cache.clear()
            for ev in tick_events:
                self._emit("tick", ev)
            self._emit("layout", {"version": self.version, "time_index": t})
            return {
                "accepted": len(docs),
                "time_index": t,
                "cut": cut_to_json(cut, score),
            }

    def _focus_from_nodes_on_tree(self, tree: TopicTree, node_ids) -> FocusSet:
        return FocusSet(
            tuple(Focus(tree.time_index, nid, tree.nodes[nid].doc_ids) for nid in node_ids)
        )

    def set_focus(self, refs_or_auto) -> dict:
        with self.lock:
            if not self.trees:
                raise BadConfig("session has no data yet")
            if refs_or_auto == "auto":
                node_ids = auto_focus(self.trees[0], self.config.post_params())
                new_focus = self._focus_from_nodes_on_tree(self.trees[0], node_ids)
            else:
                new_focus = self._focus_from_nodes(
                    [(int(t), str(n)) for t, n in refs_or_auto]
                )
            old_effective = [self.effective_cut(t).cut_nodes for t in range(len(self.trees))]
            self.focus = new_focus
            self.overrides.clear()
            self._set_focus_vectors()

            new_cuts: List[TreeCut] = []
            new_scores: List[CutScore] = []
            for t, tree in enumerate(self.trees):
                prev = new_cuts[t - 1] if t > 0 else None
                mapping = self.mappings[t - 1] if t > 0 else None
                cut, score = solve_stream(
                    tree,
                    prev,
                    mapping,
                    self.focus,
                    self.vectors,
                    self.dcm,
                    self.config.cut_params(),
                )
                new_cuts.append(cut)
                new_scores.append(score)
            self.model_cuts = new_cuts
            self.scores = new_scores
            self.groups = []
            for t in range(len(self.trees)):
                self._regroup(t)
            changed = [
                old_effective[t] != self.model_cuts[t].cut_nodes
                for t in range(len(self.trees))
            ]
            self.version += 1
            self._layout_cache.clear()
            self._emit("layout", {"version": self.version, "focus_change": True})
            return {
                "foci": [
                    {"time_index": f.time_index, "node": f.node_id}
                    for f in self.focus.foci
                ],
                "changed": changed,
            }

    def split_topic(self, t: int, node: str) -> dict:
        with self.lock:
            self._check_step(t)
            cut = self.effective_cut(t)
            if node not in cut.cut_nodes:
                raise NotInCut(node)
            children = self.trees[t].nodes[node].children
            if not children:
                raise LeafSplit(node)
            new_nodes = set(cut.cut_nodes) - {node} | set(children)
            self.overrides[t] = make_cut(self.trees[t], new_nodes)
            self._after_override(t)
            return {"time_index": t, "cut_nodes": sorted(self.overrides[t].cut_nodes)}

    def merge_topic(self, t: int, nodes: Sequence[str]) -> dict:
        with self.lock:
            self._check_step(t)
            cut = self.effective_cut(t)
            nodes = sorted(set(nodes))
            if not nodes:
                raise NotSiblingGroup("empty node list")
            for n in nodes:
                if n not in cut.cut_nodes:
                    raise NotInCut(n)
            parents = {self.trees[t].parents.get(n) for n in nodes}
            if len(parents) != 1 or None in parents:
                raise NotSiblingGroup("nodes span multiple parents")
            parent = parents.pop()
            if sorted(self.trees[t].nodes[parent].children) != nodes:
                raise NotSiblingGroup("nodes are not the complete sibling group")
            new_nodes = set(cut.cut_nodes) - set(nodes) | {parent}
            self.overrides[t] = make_cut(self.trees[t], new_nodes)
            self._after_override(t)
            return {"time_index": t, "cut_nodes": sorted(self.overrides[t].cut_nodes)}

    def _check_step(self, t: int) -> None:
        if not (0 <= t < len(self.trees)):
            raise UnknownNode(f"time step {t}")

    def _after_override(self, t: int) -> None:
        for step in range(t, len(self.trees)):
            self._regroup(step)
        self.version += 1
        self._layout_cache.clear()
        self._emit("layout", {"version": self.version, "override": t})

    def search(self, query: str) -> List[dict]:
        with self.lock:
            if not self.trees:
                raise BadConfig("session has no data yet")
            qvec_sparse = count_against(self.vocab, query)
            qvec = unit_vector(qvec_sparse, self.vocab.size)
            if qvec is None:
                raise EmptyQueryVector(query)
            scored = []
            for tree in self.trees:
                for nid in sorted(tree.nodes):
                    c = tree.nodes[nid].centroid
                    if c is None:
                        continue
                    scored.append(
                        (
                            -float(np.dot(qvec, c)),
                            tree.time_index,
                            nid,
                        )
                    )
            scored.sort()
            return [
                {"time_index": t, "node": nid, "score": -neg}
                for neg, t, nid in scored[:20]
            ]

    def doc_links(self, doc_id: str, j: int = 5) -> dict:
        with self.lock:
            if doc_id not in self.docs:
                raise UnknownDocument(doc_id)
            part = layout_mod.partition_regions(
                len(self.trees),
                len(self.trees) - 1,
                layout_mod.LayoutParams(),
                self.config.sim_viewport[0],
            )
            latest = len(self.trees) - 1

            def region_of(t: int) -> str:
                if t == latest:
                    return "streaming"
                r = part["steps"][t]["region"]
                return "stack/archive" if r in ("stack", "archive") else r

            slice_of = {
                d.id: sl.time_index for sl in self.slices for d in sl.documents
            }
            qvec = unit_vector(self.vectors[doc_id], self.vocab.size)
            buckets: Dict[str, List[dict]] = {
                "streaming": [],
                "river": [],
                "stack/archive": [],
            }
            if qvec is None or j <= 0:
                return buckets
            for other, vec in self.vectors.items():
                if other == doc_id or other not in slice_of:
                    continue
                ov = unit_vector(vec, self.vocab.size)
                if ov is None:
                    continue
                region = region_of(slice_of[other])
                buckets[region].append(
                    {
                        "doc": other,
                        "cosine": float(np.dot(qvec, ov)),
                        "time_index": slice_of[other],
                        "region": region,
                    }
                )
            for region in buckets:
                buckets[region].sort(key=lambda e: (-e["cosine"], e["doc"]))
                buckets[region] = buckets[region][:j]
            return buckets

    def layout_scene(self, w: float, h: float, packed: bool = True) -> dict:
        with self.lock:
            if not self.trees:
                raise BadConfig("session has no data yet")
            key = (self.version, float(w), float(h), packed)
            cached = self._layout_cache.get(key)
            if cached is not None:
                return cached
            params = layout_mod.LayoutParams()
            cuts = [self.effective_cut(t) for t in range(len(self.trees))]
            orders = layout_mod.order_nodes(
                self.trees, cuts, self.groups, self.mappings, params
            )
            scene = layout_mod.compute_geometry(
                self.trees,
                cuts,
                self.groups,
                self.mappings,
                orders,
                params,
                (w, h),
                self.focus_vectors,
            )
            scene = layout_mod.route_edges(scene, params)
            scene["stripe_totals"] = {
                k: v for k, v in sorted(self.stripe_totals.items())
            }
            if packed:
                river = [s["t"] for s in scene["steps"] if s["region"] == "river"]
                bars = {b["id"]: b for b in scene["bars"]}
                for stripe in scene["stripes"]:
                    if stripe["t"] not in river:
                        continue
                    docs = self._stripe_documents(stripe)
                    scene["packings"][stripe["id"]] = layout_mod.pack_stripe(
                        stripe,
                        docs,
                        params,
                    )
            self._layout_cache[key] = scene
            return scene

    def _stripe_documents(self, stripe: dict) -> List[layout_mod.PackElement]:
        t = stripe["t"]
        ga, gb = stripe["from_group"], stripe["to_group"]
        docs_a = set()
        for g in self.groups[t]:
            if g.id == ga:
                for nid in g.member_cut_nodes:
                    docs_a |= self.trees[t].nodes[nid].doc_ids
        docs_b = set()
        for g in self.groups[t + 1]:
            if g.id == gb:
                for nid in g.member_cut_nodes:
                    docs_b |= self.trees[t + 1].nodes[nid].doc_ids
        crossing = [
            (a, b)
            for a, b, _ in self.mappings[t].doc_pairs
            if a in docs_a and b in docs_b
        ]
        members = sorted({a for a, _ in crossing})
        items = []
        for did in sorted(members, key=lambda d: (self.docs[d].timestamp, d)):
            items.append(
                layout_mod.PackElement(
                    id=did, kind=self.docs[did].source, count=1
                )
            )
        return items

    def cuts_json(self) -> List[dict]:
        with self.lock:
            out = []
            for t in range(len(self.trees)):
                data = cut_to_json(self.effective_cut(t), self.scores[t])
                data["groups"] = groups_to_json(self.groups[t])
                out.append(data)
            return out


class SessionStore:
    def __init__(self):
        self._sessions: Dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, config: Optional[dict]) -> Session:
        session = Session(SessionConfig.from_dict(config))
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownNode(f"session {session_id}")
        return session


def create_app(store: Optional[SessionStore] = None):
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse, StreamingResponse

    app = FastAPI(title="topicflow")
    app.state.store = store or SessionStore()

    status_codes = {
        "unknown_node": 404,
        "unknown_document": 404,
    }

    @app.exception_handler(TopicflowError)
    async def _topicflow_error(request: Request, exc: TopicflowError):
        return JSONResponse(
            status_code=status_codes.get(exc.code, 400),
            content={"code": exc.code, "message": str(exc)},
        )

    @app.post("/api/session")
    async def create_session(payload: Optional[dict] = None):
        session = app.state.store.create(payload)
        return {"id": session.id}

    @app.post("/api/session/{sid}/batch")
    async def ingest(sid: str, payload: dict):
        session = app.state.store.get(sid)
        return session.ingest_batch(payload.get("documents", []))

    @app.put("/api/session/{sid}/focus")
    async def set_focus(sid: str, payload: dict):
        session = app.state.store.get(sid)
        if payload.get("auto"):
            return session.set_focus("auto")
        return session.set_focus([(f["time_index"], f["node"]) for f in payload["nodes"]])

    @app.post("/api/session/{sid}/topic/{t}/{node}/split")
    async def split(sid: str, t: int, node: str):
        session = app.state.store.get(sid)
        return session.split_topic(t, node)

    @app.post("/api/session/{sid}/topic/{t}/merge")
    async def merge(sid: str, t: int, payload: dict):
        session = app.state.store.get(sid)
        return session.merge_topic(t, payload["nodes"])

    @app.get("/api/session/{sid}/layout")
    async def layout(sid: str, w: float = 1600, h: float = 900):
        session = app.state.store.get(sid)
        import json as _json

        return JSONResponse(content=_json.loads(canonical_json(session.layout_scene(w, h))))

    @app.get("/api/session/{sid}/search")
    async def search(sid: str, q: str):
        session = app.state.store.get(sid)
        return {"results": session.search(q)}

    @app.get("/api/session/{sid}/documents/{doc}/links")
    async def links(sid: str, doc: str, j: int = 5):
        session = app.state.store.get(sid)
        return session.doc_links(doc, j)

    @app.get("/api/session/{sid}/cuts")
    async def cuts(sid: str):
        session = app.state.store.get(sid)
        return {"cuts": session.cuts_json()}

    @app.get("/api/session/{sid}/events")
    async def events(sid: str, start: int = 0, max_events: int = 0):
        session = app.state.store.get(sid)

        def gen():
            sent = start
            budget = max_events if max_events > 0 else None
            import time as _time

            idle = 0.0
            while True:
                while sent < len(session.events):
                    name, payload = session.events[sent]
                    sent += 1
                    idle = 0.0
                    yield f"event: {name}\ndata: {canonical_json(payload)}\n\n"
                    if budget is not None:
                        budget -= 1
                        if budget <= 0:
                            return
                if budget is not None and idle > 2.0:
                    return
                _time.sleep(0.05)
                idle += 0.05

        return StreamingResponse(gen(), media_type="text/event-stream")

    return app
