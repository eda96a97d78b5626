/** Retained-mode renderer: scene JSON in, visual element descriptors out.
 *
 * No layout happens here; the server's geometry fully determines pixels up
 * to styling. One element per bar and per stripe, colors keyed by the bar's
 * focus-topic index.
 */
import { isScene, type Scene, type TokenSnapshot } from "./types.js";

export const PALETTE = [
  "#c23f44",
  "#e0b13f",
  "#4c9e58",
  "#7d5fa3",
  "#4176a8",
  "#b06396",
];

export interface VisualElement {
  kind:
    | "region"
    | "bar"
    | "bar-dark"
    | "stripe"
    | "archive-item"
    | "packing-circle"
    | "packing-square"
    | "token"
    | "error-banner";
  key: string;
  attrs: Record<string, number | string>;
}

export interface VisualTree {
  elements: VisualElement[];
  error: string | null;
}

export function colorOf(topic: number): string {
  return PALETTE[((topic % PALETTE.length) + PALETTE.length) % PALETTE.length];
}

export function pathOf(points: [number, number][]): string {
  if (points.length === 4) {
    const [p0, c1, c2, p1] = points;
    return (
      `M ${p0[0]} ${p0[1]} ` +
      `C ${c1[0]} ${c1[1]} ${c2[0]} ${c2[1]} ${p1[0]} ${p1[1]}`
    );
  }
  return (
    `M ${points[0][0]} ${points[0][1]} ` +
    points
      .slice(1)
      .map(([x, y]) => `L ${x} ${y}`)
      .join(" ")
  );
}

export function renderScene(scene: unknown): VisualTree {
  if (!isScene(scene)) {
    return {
      elements: [
        {
          kind: "error-banner",
          key: "error",
          attrs: { message: "scene payload does not match the expected schema" },
        },
      ],
      error: "schema-mismatch",
    };
  }
  const s: Scene = scene;
  const elements: VisualElement[] = [];
  for (const [name, extent] of Object.entries(s.regions)) {
    elements.push({
      kind: "region",
      key: `region:${name}`,
      attrs: { name, x0: extent[0], x1: extent[1] },
    });
  }
  for (const stripe of s.stripes) {
    elements.push({
      kind: "stripe",
      key: `stripe:${stripe.id}`,
      attrs: {
        id: stripe.id,
        d: pathOf(stripe.control_points),
        width: Math.max(1, (stripe.left_width + stripe.right_width) / 2),
        from: stripe.from_bar,
        to: stripe.to_bar,
      },
    });
  }
  for (const bar of s.bars) {
    elements.push({
      kind: "bar",
      key: `bar:${bar.id}`,
      attrs: {
        id: bar.id,
        x: bar.x,
        y: bar.y,
        width: bar.width,
        height: bar.height,
        fill: colorOf(bar.topic),
        node: bar.node,
        group: bar.group,
        t: bar.t,
      },
    });
    if (bar.dark_height > 0) {
      elements.push({
        kind: "bar-dark",
        key: `bar-dark:${bar.id}`,
        attrs: {
          x: bar.x,
          y: bar.dark_top,
          width: bar.width,
          height: bar.dark_height,
        },
      });
    }
  }
  for (const item of s.archive_items) {
    elements.push({
      kind: "archive-item",
      key: `archive:${item.topic}`,
      attrs: {
        y: item.y,
        height: item.height,
        fill: colorOf(item.topic),
      },
    });
  }
  return { elements, error: null };
}

/** One packing view at a time: circles for news, squares for tweets. */
export function renderPacking(
  scene: Scene,
  stripeId: string,
): VisualElement[] {
  const packing = scene.packings[stripeId] ?? [];
  return packing.map((e): VisualElement => {
    if (e.kind === "tweet") {
      const side = e.side ?? e.radius;
      return {
        kind: "packing-square",
        key: `pack:${stripeId}:${e.id}`,
        attrs: { x: e.x - side / 2, y: e.y - side / 2, side, doc: e.id },
      };
    }
    return {
      kind: "packing-circle",
      key: `pack:${stripeId}:${e.id}`,
      attrs: { cx: e.x, cy: e.y, r: e.radius, doc: e.id },
    };
  });
}

export function renderTokens(tokens: TokenSnapshot[]): VisualElement[] {
  return tokens.map((t) => ({
    kind: "token" as const,
    key: `token:${t.id}`,
    attrs: { cx: t.x, cy: t.y, r: t.radius, n: t.n, topic: t.topic, state: t.state },
  }));
}

export function toSvg(tree: VisualTree, width = 1600, height = 900): string {
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}">`,
  ];
  for (const el of tree.elements) {
    const a = el.attrs;
    switch (el.kind) {
      case "region":
        parts.push(
          `<rect x="${a.x0}" y="0" width="${Number(a.x1) - Number(a.x0)}" height="${height}" fill="none" stroke="#ddd" data-region="${a.name}"/>`,
        );
        break;
      case "stripe":
        parts.push(
          `<path d="${a.d}" fill="none" stroke="#9ab" stroke-width="${a.width}" opacity="0.5" data-id="${a.id}"/>`,
        );
        break;
      case "bar":
        parts.push(
          `<rect x="${a.x}" y="${a.y}" width="${a.width}" height="${a.height}" fill="${a.fill}" data-id="${a.id}"/>`,
        );
        break;
      case "bar-dark":
        parts.push(
          `<rect x="${a.x}" y="${a.y}" width="${a.width}" height="${a.height}" fill="#333" opacity="0.6"/>`,
        );
        break;
      case "archive-item":
        parts.push(
          `<rect x="0" y="${a.y}" width="24" height="${a.height}" fill="${a.fill}" opacity="0.8"/>`,
        );
        break;
      case "packing-circle":
        parts.push(`<circle cx="${a.cx}" cy="${a.cy}" r="${a.r}" fill="#678"/>`);
        break;
      case "packing-square":
        parts.push(
          `<rect x="${a.x}" y="${a.y}" width="${a.side}" height="${a.side}" fill="#a86"/>`,
        );
        break;
      case "token":
        parts.push(
          `<circle cx="${a.cx}" cy="${a.cy}" r="${a.r}" fill="#888" opacity="0.8"/>`,
        );
        break;
      case "error-banner":
        parts.push(
          `<text x="10" y="20" fill="#c00">${a.message}</text>`,
        );
        break;
    }
  }
  parts.push("</svg>");
  return parts.join("\n");
}
