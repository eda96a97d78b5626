"""Sedimentation lifecycle for incoming documents.

Incoming documents are k-means-clustered into tokens. A token enters at the
right edge of its topic band, accelerates leftward under constant gravity
plus attraction toward already-settled tokens (similarity times mass over
squared distance), settles on contact with its topic bar face or a settled
token, shrinks while settled, and finally resolves its document mass into
the topic's stripe. The simulation advances on a logical tick; wall-clock
pacing belongs to the client.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .model import SparseVec
from .postprocess import DisplayGroup


@dataclass(frozen=True)
class SedimentParams:
    g: float = 0.2  # units / tick^2
    dt: float = 1.0
    decay: float = 0.02  # settled radius shrink per tick
    suspend_decay: float = 0.01  # gradual shrink while moving
    r_min: float = 0.5
    cluster_size: int = 20  # target docs per token
    dist_floor: float = 0.1
    radius_scale: float = 2.0

    def __post_init__(self):
        if self.g <= 0:
            raise ValueError("gravity must be positive")
        if not (0 < self.decay < 1):
            raise ValueError("decay must lie in (0, 1)")


@dataclass
class Token:
    id: str
    doc_ids: Tuple[str, ...]
    n: int
    x: float
    y: float
    vx: float
    radius: float
    topic: str  # display group id
    state: str  # entering | suspended | settled | resolved
    vector: Optional[np.ndarray]


@dataclass(frozen=True)
class Band:
    """Vertical lane of one topic at the newest step: [y0, y1], bar face x."""

    y0: float
    y1: float
    face_x: float

    @property
    def center(self) -> float:
        return (self.y0 + self.y1) / 2


@dataclass
class SedimentState:
    tick: int = 0
    tokens: List[Token] = field(default_factory=list)
    bands: Dict[str, Band] = field(default_factory=dict)
    entry_x: float = 0.0
    entered_mass: int = 0
    resolved_mass: int = 0
    serial: int = 0


def _unit_rows(vectors: Sequence[SparseVec], size: int) -> np.ndarray:
    mat = np.zeros((len(vectors), size))
    for i, vec in enumerate(vectors):
        for idx, c in vec.items():
            mat[i, idx] = c
    norms = np.linalg.norm(mat, axis=1)
    norms[norms == 0] = 1.0
    return mat / norms[:, None]


def cluster_batch(
    doc_items: Sequence[Tuple[str, SparseVec]],
    groups: Sequence[DisplayGroup],
    vocab_size: int,
    params: SedimentParams,
    seed: int = 0,
) -> List[Token]:
    """Group a document batch into tokens and assign each to a display group.

    k = ceil(|docs| / cluster_size), seeded k-means on unit vectors. A
    token's topic is the group whose center is nearest its centroid, ties to
    the smaller group id.
    """
    if not doc_items:
        return []
    items = sorted(doc_items, key=lambda it: it[0])
    ids = [d for d, _ in items]
    points = _unit_rows([v for _, v in items], vocab_size)
    k = max(1, math.ceil(len(items) / params.cluster_size))
    k = min(k, len(items))
    rng = np.random.default_rng(seed)
    centers = points[rng.choice(len(items), size=k, replace=False)].copy()
    labels = np.zeros(len(items), dtype=np.int64)
    for it in range(50):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if it > 0 and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)

    group_order = sorted(groups, key=lambda g: g.id)
    tokens = []
    for c in range(k):
        member_ids = [ids[i] for i in range(len(ids)) if labels[i] == c]
        if not member_ids:
            continue
        centroid = points[labels == c].sum(axis=0)
        norm = np.linalg.norm(centroid)
        vec = centroid / norm if norm else None
        best = None
        for g in group_order:
            sim = (
                float(np.dot(vec, g.center))
                if vec is not None and g.center is not None
                else 0.0
            )
            if best is None or sim > best[0]:
                best = (sim, g.id)
        tokens.append(
            Token(
                id="",
                doc_ids=tuple(member_ids),
                n=len(member_ids),
                x=0.0,
                y=0.0,
                vx=0.0,
                radius=params.radius_scale * math.sqrt(len(member_ids)),
                topic=best[1] if best else "",
                state="entering",
                vector=vec,
            )
        )
    tokens.sort(key=lambda tk: tk.doc_ids[0])
    return tokens


def spawn(state: SedimentState, tokens: Sequence[Token], params: SedimentParams) -> None:
    """Admit tokens at the entry edge inside their topic bands."""
    lanes: Dict[str, int] = {}
    for tok in tokens:
        band = state.bands.get(tok.topic)
        if band is None and state.bands:
            band = state.bands[sorted(state.bands)[0]]
            tok.topic = sorted(state.bands)[0]
        lane = lanes.get(tok.topic, 0)
        lanes[tok.topic] = lane + 1
        tok.id = f"tok{state.serial}"
        state.serial += 1
        tok.x = state.entry_x
        y = band.center + ((lane % 3) - 1) * tok.radius if band else 0.0
        tok.y = _clamp_band(y, band) if band else y
        tok.state = "entering"
        state.tokens.append(tok)
        state.entered_mass += tok.n


def _clamp_band(y: float, band: Band) -> float:
    return min(band.y1, max(band.y0, y))


def _cos(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> float:
    if a is None or b is None:
        return 0.0
    return max(0.0, float(np.dot(a, b)))


def step(state: SedimentState, params: SedimentParams) -> SedimentState:
    """One motion tick: gravity plus settled-token attraction, leftward."""
    settled = [t for t in state.tokens if t.state == "settled"]
    for tok in state.tokens:
        if tok.state not in ("entering", "suspended"):
            continue
        a = params.g
        for other in settled:
            dist = math.hypot(other.x - tok.x, other.y - tok.y)
            dist = max(dist, params.dist_floor)
            a += _cos(other.vector, tok.vector) * other.n / (dist * dist)
        tok.vx += a * params.dt
        tok.x -= tok.vx * params.dt
        band = state.bands.get(tok.topic)
        if band is not None:
            tok.y = _clamp_band(tok.y, band)
        tok.radius = max(params.r_min, tok.radius * (1 - params.suspend_decay))
        tok.state = "suspended"
    state.tick += 1
    return state


def settle_and_aggrade(
    state: SedimentState, params: SedimentParams
) -> Tuple[SedimentState, Dict[str, int]]:
    """Contact-settle moving tokens, decay settled ones, resolve the tiny.

    Returns the per-group document mass resolved this tick.
    """
    settled = [t for t in state.tokens if t.state == "settled"]
    for tok in state.tokens:
        if tok.state not in ("entering", "suspended"):
            continue
        band = state.bands.get(tok.topic)
        touched = False
        if band is not None and tok.x - tok.radius <= band.face_x:
            tok.x = band.face_x + tok.radius
            touched = True
        else:
            for other in settled:
                if other.topic != tok.topic:
                    continue
                if math.hypot(other.x - tok.x, other.y - tok.y) <= other.radius + tok.radius:
                    touched = True
                    break
        if touched:
            tok.state = "settled"
            tok.vx = 0.0
            settled.append(tok)

    deltas: Dict[str, int] = {}
    keep = []
    for tok in state.tokens:
        if tok.state == "settled":
            tok.radius *= 1 - params.decay
            if tok.radius < params.r_min:
                tok.state = "resolved"
                deltas[tok.topic] = deltas.get(tok.topic, 0) + tok.n
                state.resolved_mass += tok.n
                continue
        keep.append(tok)
    state.tokens = keep
    return state, deltas


def alive_mass(state: SedimentState) -> int:
    return sum(t.n for t in state.tokens)


def snapshot(state: SedimentState, deltas: Mapping[str, int]) -> dict:
    return {
        "tick": state.tick,
        "tokens": [
            {
                "id": t.id,
                "x": round(t.x, 6),
                "y": round(t.y, 6),
                "radius": round(t.radius, 6),
                "topic": t.topic,
                "state": t.state,
                "n": t.n,
            }
            for t in state.tokens
        ],
        "stripe_deltas": [
            {"group": g, "added_docs": n} for g, n in sorted(deltas.items())
        ],
    }


def run_ticks(
    state: SedimentState, params: SedimentParams, max_ticks: int = 10_000
) -> List[dict]:
    """Advance until every token resolves (or the tick budget runs out)."""
    out = []
    for _ in range(max_ticks):
        if not state.tokens:
            break
        step(state, params)
        state, deltas = settle_and_aggrade(state, params)
        out.append(snapshot(state, deltas))
    return out
