/** Interaction controller: user events -> API calls -> view-state updates.
 *
 * Mutating requests are serialized (one in flight per session); every number
 * shown comes from an API payload. A stripe click opens the packing view
 * (at most one open), a bar click surfaces keywords/documents, search
 * highlights the ranked nodes, and a document click draws cross-region
 * links.
 */
import type { ApiClient } from "./api.js";
import { renderPacking, renderScene, type VisualTree } from "./render.js";
import type { DocLinkBuckets, Scene, SearchHit } from "./types.js";

export interface ViewState {
  sessionId: string;
  scene: Scene | null;
  visual: VisualTree | null;
  selectedFoci: { time_index: number; node: string }[];
  openStripe: string | null;
  highlights: string[]; // node or doc keys highlighted by search / doc links
  pendingInteraction: string | null;
  lastError: string | null;
}

export class Controller {
  state: ViewState;
  private mutationChain: Promise<unknown> = Promise.resolve();

  constructor(
    private api: ApiClient,
    sessionId: string,
    private viewport: [number, number] = [1600, 900],
  ) {
    this.state = {
      sessionId,
      scene: null,
      visual: null,
      selectedFoci: [],
      openStripe: null,
      highlights: [],
      pendingInteraction: null,
      lastError: null,
    };
  }

  /** Serialize mutating requests: at most one in flight per session. */
  private enqueue<T>(label: string, action: () => Promise<T>): Promise<T> {
    const run = async (): Promise<T> => {
      this.state.pendingInteraction = label;
      try {
        return await action();
      } finally {
        this.state.pendingInteraction = null;
      }
    };
    const next = this.mutationChain.then(run, run);
    this.mutationChain = next.catch(() => undefined);
    return next;
  }

  async refresh(): Promise<void> {
    const scene = await this.api.layout(this.state.sessionId, ...this.viewport);
    this.state.scene = scene;
    this.state.visual = renderScene(scene);
    this.state.lastError = this.state.visual.error;
  }

  async splitTopic(t: number, node: string): Promise<void> {
    await this.enqueue(`split ${node}`, async () => {
      try {
        await this.api.splitTopic(this.state.sessionId, t, node);
      } catch (err) {
        this.state.lastError = String(err);
        throw err;
      }
    });
    await this.refresh();
  }

  async mergeTopic(t: number, nodes: string[]): Promise<void> {
    await this.enqueue(`merge ${nodes.join(",")}`, async () => {
      try {
        await this.api.mergeTopic(this.state.sessionId, t, nodes);
      } catch (err) {
        this.state.lastError = String(err);
        throw err;
      }
    });
    await this.refresh();
  }

  async setFocus(arg: "auto" | { time_index: number; node: string }[]): Promise<void> {
    await this.enqueue("focus", async () => {
      const out = await this.api.setFocus(this.state.sessionId, arg);
      this.state.selectedFoci = out.foci;
    });
    await this.refresh();
  }

  async search(query: string): Promise<SearchHit[]> {
    const { results } = await this.api.search(this.state.sessionId, query);
    this.state.highlights = results.map((r) => `node:${r.node}`);
    return results;
  }

  async docLinks(doc: string): Promise<DocLinkBuckets> {
    const buckets = await this.api.docLinks(this.state.sessionId, doc);
    this.state.highlights = Object.values(buckets)
      .flat()
      .map((l) => `doc:${l.doc}`);
    return buckets;
  }

  /** Stripe click toggles its packing view; only one stays open. */
  clickStripe(stripeId: string): void {
    this.state.openStripe = this.state.openStripe === stripeId ? null : stripeId;
  }

  packingElements() {
    if (!this.state.scene || !this.state.openStripe) return [];
    return renderPacking(this.state.scene, this.state.openStripe);
  }

  barSummary(barId: string): { node: string; group: string; docCount: number } | null {
    const bar = this.state.scene?.bars.find((b) => b.id === barId);
    if (!bar) return null;
    return { node: bar.node, group: bar.group, docCount: bar.doc_count };
  }
}
