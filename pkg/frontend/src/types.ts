/** Wire types mirroring the service's JSON payloads. */

export interface Region {
  archive: [number, number];
  stack: [number, number];
  river: [number, number];
  streaming: [number, number];
}

export interface Bar {
  id: string;
  t: number;
  node: string;
  group: string;
  topic: number;
  x: number;
  y: number;
  width: number;
  height: number;
  dark_top: number;
  dark_height: number;
  depth: number;
  doc_count: number;
}

export interface Stripe {
  id: string;
  t: number;
  from_bar: string;
  to_bar: string;
  from_group: string;
  to_group: string;
  count: number;
  left_width: number;
  right_width: number;
  control_points: [number, number][];
}

export interface PackedElement {
  id: string;
  kind: "news" | "tweet";
  count: number;
  x: number;
  y: number;
  radius: number;
  side: number | null;
}

export interface ArchiveItem {
  topic: number;
  y: number;
  height: number;
}

export interface StepInfo {
  t: number;
  region: "archive" | "stack" | "river" | "streaming";
  x: number;
}

export interface Scene {
  viewport: [number, number];
  regions: Region;
  steps: StepInfo[];
  bars: Bar[];
  stripes: Stripe[];
  archive_items: ArchiveItem[];
  packings: Record<string, PackedElement[]>;
  stripe_totals?: Record<string, number>;
}

export interface TokenSnapshot {
  id: string;
  x: number;
  y: number;
  radius: number;
  topic: string;
  state: "entering" | "suspended" | "settled" | "resolved";
  n: number;
}

export interface TickEvent {
  tick: number;
  tokens: TokenSnapshot[];
  stripe_deltas: { group: string; added_docs: number }[];
}

export interface LayoutEvent {
  version: number;
  time_index?: number;
  focus_change?: boolean;
  override?: number;
}

export type StreamEvent =
  | { name: "tick"; data: TickEvent }
  | { name: "layout"; data: LayoutEvent };

export interface SearchHit {
  time_index: number;
  node: string;
  score: number;
}

export interface DocLink {
  doc: string;
  cosine: number;
  time_index: number;
  region: string;
}

export type DocLinkBuckets = Record<string, DocLink[]>;

export interface CutPayload {
  time_index: number;
  cut_nodes: string[];
  score?: Record<string, number>;
  groups?: { members: string[]; carried_from: string | null }[];
}

export function isScene(value: unknown): value is Scene {
  if (typeof value !== "object" || value === null) return false;
  const v = value as Record<string, unknown>;
  return (
    Array.isArray(v.bars) &&
    Array.isArray(v.stripes) &&
    typeof v.regions === "object" &&
    v.regions !== null &&
    Array.isArray(v.viewport)
  );
}
