"""Deterministic river-scene geometry.

The scene splits horizontally into archive | stack | river | streaming.
Display groups become vertical bars (height by document count, horizontal
offset by tree depth), consecutive steps are tied by stripes sized from
crossing document pairs, stripe paths route around bars they would cover,
and a stripe can be exploded into a front-chain circle packing of its
documents. All outputs are pure functions of the inputs; scene JSON is
byte-stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ViewportTooSmall
from .model import TopicTree, TreeCut, TreeMapping, canonical_json
from .postprocess import DisplayGroup


@dataclass(frozen=True)
class LayoutParams:
    river_step_width: float = 120.0
    stack_step_width: float = 40.0
    archive_bar_width: float = 24.0
    archive_threshold: int = 8
    bar_unit: float = 1.5
    depth_offset: float = 6.0
    vgap: float = 10.0
    beta: float = 0.85
    sweeps: int = 4
    streaming_width: float = 160.0
    bar_width: float = 8.0
    circle_radius_scale: float = 2.0
    square_side_scale: float = 2.0
    pack_segments: int = 10
    top_margin: float = 20.0

    def __post_init__(self):
        if self.stack_step_width >= self.river_step_width:
            raise ValueError("stack step width must be below river step width")
        if not (1 / math.sqrt(2) - 1e-12 <= self.beta <= 1.0 + 1e-12):
            raise ValueError("beta must lie in [1/sqrt(2), 1]")


# ---------------------------------------------------------------------------
# Regions


def partition_regions(
    num_steps: int, current_step: int, params: LayoutParams, viewport_width: float
) -> dict:
    """Contiguous x-extents for archive | stack | river | streaming.

    Steps aged past the archive threshold collapse into the fixed-width
    archive bar; the river keeps as many of the newest steps as fit at full
    width, the stack takes the remainder at reduced width, and the streaming
    region absorbs the leftover on the right.
    """
    if num_steps < 1:
        raise ValueError("need at least one step")
    k = params.archive_threshold
    ages = {t: current_step - t for t in range(num_steps)}
    archived = [t for t in range(num_steps) if ages[t] >= k]
    shown = [t for t in range(num_steps) if ages[t] < k]
    aw = params.archive_bar_width if archived else 0.0
    available = viewport_width - params.streaming_width - aw
    best_r = 0
    for r in range(len(shown), 0, -1):
        need = r * params.river_step_width + (len(shown) - r) * params.stack_step_width
        if need <= available:
            best_r = r
            break
    if best_r == 0:
        raise ViewportTooSmall(
            f"viewport width {viewport_width} cannot hold one river step"
        )
    river_steps = shown[len(shown) - best_r :]
    stack_steps = shown[: len(shown) - best_r]

    stack_end = aw + len(stack_steps) * params.stack_step_width
    river_end = stack_end + len(river_steps) * params.river_step_width
    regions = {
        "archive": [0.0, aw],
        "stack": [aw, stack_end],
        "river": [stack_end, river_end],
        "streaming": [river_end, float(viewport_width)],
    }
    step_info = {}
    for i, t in enumerate(stack_steps):
        step_info[t] = {"region": "stack", "x": aw + i * params.stack_step_width}
    for i, t in enumerate(river_steps):
        step_info[t] = {
            "region": "river",
            "x": stack_end + i * params.river_step_width,
        }
    for t in archived:
        step_info[t] = {"region": "archive", "x": 0.0}
    return {"regions": regions, "steps": step_info, "archived": archived}


# ---------------------------------------------------------------------------
# Ordering


def _group_docs(tree: TopicTree, group: DisplayGroup) -> frozenset:
    return frozenset().union(*(tree.nodes[n].doc_ids for n in group.member_cut_nodes))


def _group_links(
    trees: Sequence[TopicTree],
    groups: Sequence[Sequence[DisplayGroup]],
    mappings: Sequence[TreeMapping],
) -> List[Dict[Tuple[str, str], int]]:
    """Crossing doc-pair counts between groups of consecutive steps."""
    links: List[Dict[Tuple[str, str], int]] = []
    for t in range(len(trees) - 1):
        of_a = {}
        for g in groups[t]:
            for d in _group_docs(trees[t], g):
                of_a[d] = g.id
        of_b = {}
        for g in groups[t + 1]:
            for d in _group_docs(trees[t + 1], g):
                of_b[d] = g.id
        counts: Dict[Tuple[str, str], int] = {}
        for a, b, _ in mappings[t].doc_pairs:
            ga, gb = of_a.get(a), of_b.get(b)
            if ga is not None and gb is not None:
                counts[(ga, gb)] = counts.get((ga, gb), 0) + 1
        links.append(counts)
    return links


def _ancestor_path(tree: TopicTree, group: DisplayGroup) -> Tuple[str, ...]:
    first = group.member_cut_nodes[0]
    parent = tree.parents.get(first)
    if parent is None:
        return ()
    return tuple(reversed([parent] + tree.ancestors(parent)))


def _ordered_pass(
    tree: TopicTree,
    groups: Sequence[DisplayGroup],
    score: Mapping[str, float],
) -> List[str]:
    """Order groups by barycenter scores, keeping ancestor blocks contiguous.

    Recursive: at each hierarchy level, sibling blocks sort by the mean score
    of the groups under them (ties by block id), groups within a block by
    their own score.
    """

    by_path: Dict[Tuple[str, ...], List[DisplayGroup]] = {}
    for g in groups:
        by_path.setdefault(_ancestor_path(tree, g), []).append(g)

    def block_sort(prefix: Tuple[str, ...], members: List[DisplayGroup]) -> List[str]:
        direct = [g for g in members if _ancestor_path(tree, g) == prefix]
        sub: Dict[str, List[DisplayGroup]] = {}
        for g in members:
            path = _ancestor_path(tree, g)
            if len(path) > len(prefix):
                sub.setdefault(path[len(prefix)], []).append(g)

        items: List[Tuple[float, str, List[str]]] = []
        for g in sorted(direct, key=lambda g: g.id):
            items.append((score.get(g.id, math.inf), g.id, [g.id]))
        for anc in sorted(sub):
            ordered = block_sort(prefix + (anc,), sub[anc])
            vals = [score[g] for g in ordered if g in score]
            bary = sum(vals) / len(vals) if vals else math.inf
            items.append((bary, anc, ordered))
        items.sort(key=lambda it: (it[0], it[1]))
        return [g for _, _, block in items for g in block]

    return block_sort((), list(groups))


def count_crossings(
    order_a: Sequence[str], order_b: Sequence[str], links: Mapping[Tuple[str, str], int]
) -> int:
    pos_a = {g: i for i, g in enumerate(order_a)}
    pos_b = {g: i for i, g in enumerate(order_b)}
    ordered_links = sorted(links)
    n = 0
    for i in range(len(ordered_links)):
        a1, b1 = ordered_links[i]
        for j in range(i + 1, len(ordered_links)):
            a2, b2 = ordered_links[j]
            if (pos_a[a1] - pos_a[a2]) * (pos_b[b1] - pos_b[b2]) < 0:
                n += 1
    return n


def total_crossings(orders: Sequence[Sequence[str]], links) -> int:
    return sum(
        count_crossings(orders[t], orders[t + 1], links[t]) for t in range(len(links))
    )


def order_nodes(
    trees: Sequence[TopicTree],
    cuts: Sequence[TreeCut],
    groups: Sequence[Sequence[DisplayGroup]],
    mappings: Sequence[TreeMapping],
    params: LayoutParams,
) -> List[List[str]]:
    """Constrained barycenter sweeps over display groups, per time step.

    A sweep that would raise the total crossing count is rolled back, so the
    result never crosses more than the id-sorted baseline.
    """
    links = _group_links(trees, groups, mappings)
    orders = [
        [g.id for g in sorted(groups[t], key=lambda g: g.member_cut_nodes[0])]
        for t in range(len(trees))
    ]
    if len(trees) == 1:
        return orders

    by_id = [{g.id: g for g in groups[t]} for t in range(len(trees))]
    best_total = total_crossings(orders, links)

    for sweep in range(params.sweeps):
        forward = sweep % 2 == 0
        trial = [list(o) for o in orders]
        rng_steps = range(1, len(trees)) if forward else range(len(trees) - 2, -1, -1)
        for t in rng_steps:
            if forward:
                neighbor_pos = {g: i for i, g in enumerate(trial[t - 1])}
                step_links = links[t - 1]
                incident = {}
                for (ga, gb), c in step_links.items():
                    incident.setdefault(gb, []).append(neighbor_pos[ga])
            else:
                neighbor_pos = {g: i for i, g in enumerate(trial[t + 1])}
                step_links = links[t]
                incident = {}
                for (ga, gb), c in step_links.items():
                    incident.setdefault(ga, []).append(neighbor_pos[gb])
            cur_pos = {g: i for i, g in enumerate(trial[t])}
            score = {
                g: (sum(ps) / len(ps) if (ps := incident.get(g)) else float(cur_pos[g]))
                for g in trial[t]
            }
            trial[t] = _ordered_pass(
                trees[t], [by_id[t][g] for g in trial[t]], score
            )
        trial_total = total_crossings(trial, links)
        if trial_total <= best_total:
            orders = trial
            best_total = trial_total
    return orders


# ---------------------------------------------------------------------------
# Geometry


def _topic_of(group: DisplayGroup, focus_vectors: Sequence[np.ndarray]) -> int:
    if not focus_vectors or group.center is None:
        return 0
    sims = [float(np.dot(group.center, f)) for f in focus_vectors]
    return int(np.argmax(sims))


def compute_geometry(
    trees: Sequence[TopicTree],
    cuts: Sequence[TreeCut],
    groups: Sequence[Sequence[DisplayGroup]],
    mappings: Sequence[TreeMapping],
    orders: Sequence[Sequence[str]],
    params: LayoutParams,
    viewport: Tuple[float, float],
    focus_vectors: Sequence[np.ndarray] = (),
) -> dict:
    """Bars, stripes (straight paths), regions, and archive items."""
    vw, vh = float(viewport[0]), float(viewport[1])
    n = len(trees)
    part = partition_regions(n, n - 1, params, vw)
    by_id = [{g.id: g for g in groups[t]} for t in range(n)]
    links = _group_links(trees, groups, mappings)

    mapped_fwd: List[Dict[str, set]] = []  # per t: doc -> has pair into t+1
    mapped_bwd: List[Dict[str, set]] = []
    for t in range(n - 1):
        fwd = {a for a, b, _ in mappings[t].doc_pairs}
        bwd = {b for a, b, _ in mappings[t].doc_pairs}
        mapped_fwd.append(fwd)
        mapped_bwd.append(bwd)

    bars = []
    bar_index: Dict[Tuple[int, str], dict] = {}
    for t in range(n):
        info = part["steps"][t]
        if info["region"] == "archive":
            continue
        y = params.top_margin
        for gid in orders[t]:
            g = by_id[t][gid]
            docs = _group_docs(trees[t], g)
            depth = trees[t].nodes[g.member_cut_nodes[0]].depth
            height = params.bar_unit * len(docs)
            both = [
                d
                for d in sorted(docs)
                if (t > 0 and d in mapped_bwd[t - 1]) and (t < n - 1 and d in mapped_fwd[t])
            ]
            dark_height = params.bar_unit * len(both)
            bar = {
                "id": f"b{t}:{len(bars)}",
                "t": t,
                "node": g.member_cut_nodes[0],
                "group": gid,
                "topic": _topic_of(g, focus_vectors),
                "x": info["x"] + depth * params.depth_offset,
                "y": y,
                "width": params.bar_width,
                "height": height,
                "dark_top": y + (height - dark_height) / 2,
                "dark_height": dark_height,
                "depth": depth,
                "doc_count": len(docs),
            }
            bars.append(bar)
            bar_index[(t, gid)] = bar
            y += height + params.vgap
        if y - params.vgap > vh:
            raise ViewportTooSmall(
                f"step {t} needs height {y - params.vgap:.1f} > viewport {vh}"
            )

    stripes = []
    for t in range(n - 1):
        info_a = part["steps"][t]
        info_b = part["steps"][t + 1]
        if info_a["region"] == "archive" or info_b["region"] == "archive":
            continue
        step_links = links[t]
        kept = dict(step_links)
        if info_a["region"] == "stack":
            # mainstream only: the largest outgoing stripe per source group
            best: Dict[str, Tuple[int, str]] = {}
            for (ga, gb), c in sorted(step_links.items()):
                cur = best.get(ga)
                if cur is None or c > cur[0] or (c == cur[0] and gb < cur[1]):
                    best[ga] = (c, gb)
            kept = {
                (ga, gb): c
                for (ga, gb), c in step_links.items()
                if best[ga][1] == gb
            }
        # anchor allocation in destination-order to avoid in-bar crossings
        out_sorted: Dict[str, List[Tuple[str, str]]] = {}
        in_sorted: Dict[str, List[Tuple[str, str]]] = {}
        pos_b = {g: i for i, g in enumerate(orders[t + 1])}
        pos_a = {g: i for i, g in enumerate(orders[t])}
        for ga, gb in sorted(kept, key=lambda ab: (pos_a[ab[0]], pos_b[ab[1]])):
            out_sorted.setdefault(ga, []).append((ga, gb))
            in_sorted.setdefault(gb, []).append((ga, gb))
        out_off = {ga: 0.0 for ga in out_sorted}
        in_off = {gb: 0.0 for gb in in_sorted}
        doc_pairs_by_groups: Dict[Tuple[str, str], List[Tuple[str, str]]] = {}
        of_a = {d: g.id for g in groups[t] for d in _group_docs(trees[t], g)}
        of_b = {d: g.id for g in groups[t + 1] for d in _group_docs(trees[t + 1], g)}
        for a, b, _ in mappings[t].doc_pairs:
            key = (of_a.get(a), of_b.get(b))
            if key in kept:
                doc_pairs_by_groups.setdefault(key, []).append((a, b))

        for ga in sorted(out_sorted, key=lambda g: pos_a[g]):
            for ga2, gb in out_sorted[ga]:
                c = kept[(ga2, gb)]
                pairs = doc_pairs_by_groups.get((ga2, gb), [])
                left_w = params.bar_unit * len({a for a, _ in pairs})
                right_w = params.bar_unit * len({b for _, b in pairs})
                src = bar_index[(t, ga2)]
                dst = bar_index[(t + 1, gb)]
                y_src = src["y"] + out_off[ga2] + left_w / 2
                y_dst = dst["y"] + in_off[gb] + right_w / 2
                out_off[ga2] += left_w
                in_off[gb] += right_w
                stripes.append(
                    {
                        "id": f"s{t}:{len(stripes)}",
                        "t": t,
                        "from_bar": src["id"],
                        "to_bar": dst["id"],
                        "from_group": ga2,
                        "to_group": gb,
                        "count": c,
                        "left_width": left_w,
                        "right_width": right_w,
                        "control_points": [
                            [src["x"] + src["width"], y_src],
                            [dst["x"], y_dst],
                        ],
                    }
                )

    archive_items = []
    archived = part["archived"]
    if archived:
        totals: Dict[int, int] = {}
        for t in archived:
            for g in groups[t]:
                topic = _topic_of(g, focus_vectors)
                totals[topic] = totals.get(topic, 0) + len(_group_docs(trees[t], g))
        newest_order = []
        for gid in orders[n - 1]:
            topic = _topic_of(by_id[n - 1][gid], focus_vectors)
            if topic not in newest_order:
                newest_order.append(topic)
        for topic in sorted(totals):
            if topic not in newest_order:
                newest_order.append(topic)
        y = params.top_margin
        for topic in newest_order:
            if topic not in totals:
                continue
            h = params.bar_unit * totals[topic] / len(archived)
            archive_items.append({"topic": topic, "y": y, "height": h})
            y += h

    return {
        "viewport": [vw, vh],
        "regions": part["regions"],
        "steps": [
            {"t": t, "region": part["steps"][t]["region"], "x": part["steps"][t]["x"]}
            for t in range(n)
        ],
        "bars": bars,
        "stripes": stripes,
        "archive_items": archive_items,
        "packings": {},
    }


# ---------------------------------------------------------------------------
# Edge routing


def bezier_points(control: Sequence[Sequence[float]], samples: int = 64) -> List[Tuple[float, float]]:
    """Sampled path: segment for 2 points, cubic Bezier for 4, else polyline."""
    pts = [(float(x), float(y)) for x, y in control]
    if len(pts) == 2:
        (x0, y0), (x1, y1) = pts
        return [
            (x0 + (x1 - x0) * i / samples, y0 + (y1 - y0) * i / samples)
            for i in range(samples + 1)
        ]
    if len(pts) == 4:
        out = []
        for i in range(samples + 1):
            s = i / samples
            c = 1 - s
            x = (
                c**3 * pts[0][0]
                + 3 * c**2 * s * pts[1][0]
                + 3 * c * s**2 * pts[2][0]
                + s**3 * pts[3][0]
            )
            y = (
                c**3 * pts[0][1]
                + 3 * c**2 * s * pts[1][1]
                + 3 * c * s**2 * pts[2][1]
                + s**3 * pts[3][1]
            )
            out.append((x, y))
        return out
    out = []
    for a, b in zip(pts, pts[1:]):
        seg = bezier_points([a, b], samples // max(1, len(pts) - 1))
        out.extend(seg)
    return out


def _segment_hits_rect(p0, p1, rect, samples: int = 64) -> bool:
    x0, y0, x1, y1 = rect
    for x, y in bezier_points([p0, p1], samples):
        if x0 < x < x1 and y0 < y < y1:
            return True
    return False


def _path_hits_rect(control, rect, samples: int = 128) -> bool:
    x0, y0, x1, y1 = rect
    for x, y in bezier_points(control, samples):
        if x0 < x < x1 and y0 < y < y1:
            return True
    return False


def route_edges(scene: dict, params: LayoutParams) -> dict:
    """Insert two intermediate points per bar a stripe would cover.

    The displaced points sit above or below the covering bar (whichever is
    nearer the straight path), starting at half the bar height plus the gap
    and doubling until the sampled curve clears the bar's interior.
    """
    bars = {b["id"]: b for b in scene["bars"]}
    for stripe in scene["stripes"]:
        p0, p1 = stripe["control_points"][0], stripe["control_points"][-1]
        blockers = []
        for b in scene["bars"]:
            if b["id"] in (stripe["from_bar"], stripe["to_bar"]):
                continue
            rect = (b["x"], b["y"], b["x"] + b["width"], b["y"] + b["height"])
            if _segment_hits_rect(p0, p1, rect):
                blockers.append(b)
        if not blockers:
            continue
        blockers.sort(key=lambda b: b["x"])
        control = [p0]
        for b in blockers:
            cx = b["x"] + b["width"] / 2
            cy = b["y"] + b["height"] / 2
            # y of the straight path at the bar's center x
            if p1[0] != p0[0]:
                y_line = p0[1] + (p1[1] - p0[1]) * (cx - p0[0]) / (p1[0] - p0[0])
            else:
                y_line = (p0[1] + p1[1]) / 2
            side = -1.0 if y_line <= cy else 1.0
            disp = b["height"] / 2 + params.vgap
            rect = (b["x"], b["y"], b["x"] + b["width"], b["y"] + b["height"])
            for _ in range(10):
                y_route = cy + side * disp
                trial = control + [
                    [b["x"] - params.vgap, y_route],
                    [b["x"] + b["width"] + params.vgap, y_route],
                    [list(p1)[0], list(p1)[1]],
                ]
                if not _path_hits_rect(trial, rect):
                    break
                disp *= 2
            control.append([b["x"] - params.vgap, cy + side * disp])
            control.append([b["x"] + b["width"] + params.vgap, cy + side * disp])
        control.append([p1[0], p1[1]])
        stripe["control_points"] = control
    return scene


# ---------------------------------------------------------------------------
# Packing


def initial_x(areas: Sequence[float], heights: Sequence[float], w: float) -> List[float]:
    """Area-matched initial x targets for elements packed along a stripe.

    Elements and stripe segments are both laid on area lines scaled to equal
    length; an element's x is the mean center of the segments its interval
    overlaps with positive measure.
    """
    if not areas:
        return []
    seg_areas = [w * h for h in heights]
    total_a = float(sum(areas))
    total_s = float(sum(seg_areas))
    centers = [(k + 0.5) * w for k in range(len(heights))]
    if total_a <= 0 or total_s <= 0:
        return [centers[0]] * len(areas)
    scale = total_a / total_s
    seg_bounds = [0.0]
    for a in seg_areas:
        seg_bounds.append(seg_bounds[-1] + a * scale)
    out = []
    lo = 0.0
    eps = 1e-12 * max(total_a, 1.0)
    for a in areas:
        hi = lo + a
        hit = [
            centers[k]
            for k in range(len(heights))
            if min(hi, seg_bounds[k + 1]) - max(lo, seg_bounds[k]) > eps
        ]
        out.append(sum(hit) / len(hit) if hit else centers[-1])
        lo = hi
    return out


def square_proxy_radius(side: float, beta: float) -> float:
    return beta * math.sqrt(2.0) * side


@dataclass(frozen=True)
class PackElement:
    id: str
    kind: str  # "news" | "tweet"
    count: int = 1


def _tangent_candidates(ax, ay, ar, bx, by, br, r):
    """Centers of a radius-r circle externally tangent to both given circles."""
    d = math.hypot(bx - ax, by - ay)
    ra, rb = ar + r, br + r
    if d <= 1e-12 or d > ra + rb or d < abs(ra - rb):
        return []
    a = (ra * ra - rb * rb + d * d) / (2 * d)
    h2 = ra * ra - a * a
    if h2 < 0:
        return []
    h = math.sqrt(max(0.0, h2))
    mx = ax + a * (bx - ax) / d
    my = ay + a * (by - ay) / d
    ux, uy = -(by - ay) / d, (bx - ax) / d
    return [(mx + h * ux, my + h * uy), (mx - h * ux, my - h * uy)]


def pack_stripe(
    stripe: dict,
    documents: Sequence[PackElement],
    params: LayoutParams,
) -> List[dict]:
    """Front-chain packing of documents along a stripe.

    News items are circles with radius proportional to sqrt(count); tweets
    are squares handled through proxy circles of radius beta*sqrt(2)*side.
    Each element is placed at the feasible tangent position closest to its
    area-derived x target, so no later relaxation can reduce the target
    deviation without breaking tangency or the proxy-disjointness guarantee;
    the final pass only records the true square bounds.
    """
    if not documents:
        return []
    elements = []
    for e in documents:
        if e.kind == "tweet":
            side = params.square_side_scale * math.sqrt(e.count)
            proxy = square_proxy_radius(side, params.beta)
            elements.append({"id": e.id, "kind": e.kind, "count": e.count, "side": side, "proxy": proxy})
        else:
            r = params.circle_radius_scale * math.sqrt(e.count)
            elements.append({"id": e.id, "kind": e.kind, "count": e.count, "side": None, "proxy": r})

    left_w = stripe.get("left_width", 0.0)
    right_w = stripe.get("right_width", 0.0)
    band_h = max(left_w, right_w, 1e-6)
    n_seg = max(1, params.pack_segments)
    x_span = max(
        abs(stripe["control_points"][-1][0] - stripe["control_points"][0][0]), 1.0
    )
    w = x_span / n_seg
    heights = [
        left_w + (right_w - left_w) * (k + 0.5) / n_seg for k in range(n_seg)
    ]
    areas = [math.pi * e["proxy"] ** 2 for e in elements]
    targets = initial_x(areas, heights, w)

    placed: List[dict] = []

    def overlaps(x, y, r, skip=None) -> bool:
        for p in placed:
            if p is skip:
                continue
            if math.hypot(p["x"] - x, p["y"] - y) < p["proxy"] + r - 1e-9:
                return True
        return False

    half = band_h / 2

    def clamp_y(y: float) -> float:
        return min(half, max(-half, y))

    for i, e in enumerate(elements):
        r = e["proxy"]
        tx = targets[i]
        if not placed:
            e["x"], e["y"] = tx, 0.0
            placed.append(e)
            continue
        candidates = []
        for p in placed:
            # tangent on the line toward the target
            dx = tx - p["x"]
            d = abs(dx)
            step = p["proxy"] + r
            if d < 1e-9:
                candidates.extend(
                    [(p["x"] + step, p["y"]), (p["x"] - step, p["y"])]
                )
            else:
                candidates.append((p["x"] + math.copysign(step, dx), p["y"]))
            candidates.append((p["x"], clamp_y(p["y"] + step)))
            candidates.append((p["x"], clamp_y(p["y"] - step)))
        for a in range(len(placed)):
            for b in range(a + 1, len(placed)):
                pa, pb = placed[a], placed[b]
                candidates.extend(
                    _tangent_candidates(
                        pa["x"], pa["y"], pa["proxy"], pb["x"], pb["y"], pb["proxy"], r
                    )
                )
        feasible = [
            (x, y)
            for x, y in candidates
            if abs(y) <= half + 1e-9 and not overlaps(x, y, r)
        ]
        if feasible:
            x, y = min(
                feasible,
                key=lambda c: (math.hypot(c[0] - tx, c[1]), abs(c[1]), c[0]),
            )
        else:
            x = max(p["x"] + p["proxy"] for p in placed) + r
            y = 0.0
        e["x"], e["y"] = x, y
        placed.append(e)

    x0 = min(stripe["control_points"][0][0], stripe["control_points"][-1][0])
    y_mid = (stripe["control_points"][0][1] + stripe["control_points"][-1][1]) / 2
    out = []
    for e in placed:
        out.append(
            {
                "id": e["id"],
                "kind": e["kind"],
                "count": e["count"],
                "x": x0 + e["x"],
                "y": y_mid + e["y"],
                "radius": e["proxy"],
                "side": e["side"],
            }
        )
    return out


def scene_json(scene: dict) -> str:
    return canonical_json(scene)
