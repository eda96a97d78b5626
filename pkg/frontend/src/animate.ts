/** Sedimentation animation state fed by the event stream.
 *
 * Tick events update token targets; frames interpolate between the previous
 * and current tick. Resolved tokens disappear and their document mass grows
 * the owning stripe. Layout events invalidate the scene so the controller
 * refetches and slides bars left.
 */
import type { StreamEvent, TickEvent, TokenSnapshot } from "./types.js";

export interface AnimatedToken extends TokenSnapshot {
  prevX: number;
  prevY: number;
  prevRadius: number;
}

export class SedimentationView {
  tokens = new Map<string, AnimatedToken>();
  stripeGrowth = new Map<string, number>();
  ticksSeen = 0;
  layoutsSeen = 0;
  onLayoutInvalid: (() => void) | null = null;

  applyTick(tick: TickEvent): void {
    this.ticksSeen += 1;
    const seen = new Set<string>();
    for (const snap of tick.tokens) {
      seen.add(snap.id);
      const cur = this.tokens.get(snap.id);
      if (cur) {
        cur.prevX = cur.x;
        cur.prevY = cur.y;
        cur.prevRadius = cur.radius;
        Object.assign(cur, snap);
      } else {
        this.tokens.set(snap.id, {
          ...snap,
          prevX: snap.x,
          prevY: snap.y,
          prevRadius: snap.radius,
        });
      }
    }
    for (const id of [...this.tokens.keys()]) {
      if (!seen.has(id)) this.tokens.delete(id); // resolved tokens vanish
    }
    for (const delta of tick.stripe_deltas) {
      this.stripeGrowth.set(
        delta.group,
        (this.stripeGrowth.get(delta.group) ?? 0) + delta.added_docs,
      );
    }
  }

  apply(event: StreamEvent): void {
    if (event.name === "tick") {
      this.applyTick(event.data);
    } else {
      this.layoutsSeen += 1;
      this.onLayoutInvalid?.();
    }
  }

  /** Token positions at a blend factor within the current tick (0..1). */
  frame(alpha: number): TokenSnapshot[] {
    const a = Math.min(1, Math.max(0, alpha));
    const out: TokenSnapshot[] = [];
    for (const t of this.tokens.values()) {
      out.push({
        id: t.id,
        x: t.prevX + (t.x - t.prevX) * a,
        y: t.prevY + (t.y - t.prevY) * a,
        radius: t.prevRadius + (t.radius - t.prevRadius) * a,
        topic: t.topic,
        state: t.state,
        n: t.n,
      });
    }
    return out.sort((x, y) => (x.id < y.id ? -1 : 1));
  }

  async consume(
    events: AsyncIterable<StreamEvent>,
    onFrame?: (tokens: TokenSnapshot[]) => void,
  ): Promise<void> {
    for await (const event of events) {
      this.apply(event);
      if (event.name === "tick" && onFrame) onFrame(this.frame(1));
    }
  }
}
