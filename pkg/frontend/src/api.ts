/** HTTP + event-stream client for the topicflow service.
 *
 * The client never computes analytics: it only moves JSON payloads. All
 * mutating calls go through plain fetch; the event stream is parsed from a
 * streamed text/event-stream body and reconnects with exponential backoff,
 * resuming from the last delivered event index.
 */
import type {
  CutPayload,
  DocLinkBuckets,
  Scene,
  SearchHit,
  StreamEvent,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  const body = (await resp.json()) as Record<string, unknown>;
  if (!resp.ok) {
    throw new ApiError(
      String(body.code ?? "error"),
      String(body.message ?? resp.statusText),
      resp.status,
    );
  }
  return body as T;
}

export class ApiClient {
  requestCount = 0;

  constructor(
    public baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async call<T>(path: string, init?: RequestInit): Promise<T> {
    this.requestCount += 1;
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    return asJson<T>(resp);
  }

  private post<T>(path: string, payload?: unknown): Promise<T> {
    return this.call<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload ?? {}),
    });
  }

  createSession(config: Record<string, unknown> = {}): Promise<{ id: string }> {
    return this.post("/api/session", config);
  }

  ingestBatch(
    sessionId: string,
    documents: Record<string, unknown>[],
  ): Promise<{ accepted: number; time_index: number }> {
    return this.post(`/api/session/${sessionId}/batch`, { documents });
  }

  setFocus(
    sessionId: string,
    arg: "auto" | { time_index: number; node: string }[],
  ): Promise<{ foci: { time_index: number; node: string }[]; changed: boolean[] }> {
    const payload = arg === "auto" ? { auto: true } : { nodes: arg };
    this.requestCount += 1;
    return this.fetchImpl(`${this.baseUrl}/api/session/${sessionId}/focus`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    }).then((r) => asJson(r));
  }

  splitTopic(
    sessionId: string,
    t: number,
    node: string,
  ): Promise<{ time_index: number; cut_nodes: string[] }> {
    return this.post(`/api/session/${sessionId}/topic/${t}/${encodeURIComponent(node)}/split`);
  }

  mergeTopic(
    sessionId: string,
    t: number,
    nodes: string[],
  ): Promise<{ time_index: number; cut_nodes: string[] }> {
    return this.post(`/api/session/${sessionId}/topic/${t}/merge`, { nodes });
  }

  layout(sessionId: string, w: number, h: number): Promise<Scene> {
    return this.call(`/api/session/${sessionId}/layout?w=${w}&h=${h}`);
  }

  search(sessionId: string, q: string): Promise<{ results: SearchHit[] }> {
    return this.call(`/api/session/${sessionId}/search?q=${encodeURIComponent(q)}`);
  }

  docLinks(sessionId: string, doc: string, j = 5): Promise<DocLinkBuckets> {
    return this.call(
      `/api/session/${sessionId}/documents/${encodeURIComponent(doc)}/links?j=${j}`,
    );
  }

  cuts(sessionId: string): Promise<{ cuts: CutPayload[] }> {
    return this.call(`/api/session/${sessionId}/cuts`);
  }

  /** Stream events starting at `start`; reconnects with backoff on drops. */
  async *events(
    sessionId: string,
    opts: { start?: number; maxEvents?: number; maxRetries?: number } = {},
  ): AsyncGenerator<StreamEvent> {
    let delivered = opts.start ?? 0;
    let retries = 0;
    const maxRetries = opts.maxRetries ?? 5;
    let remaining = opts.maxEvents ?? Infinity;
    while (remaining > 0) {
      let url = `${this.baseUrl}/api/session/${sessionId}/events?start=${delivered}`;
      if (Number.isFinite(remaining)) url += `&max_events=${remaining}`;
      try {
        const resp = await this.fetchImpl(url, {
          headers: { accept: "text/event-stream" },
        });
        if (!resp.ok || !resp.body) {
          throw new ApiError("stream", `status ${resp.status}`, resp.status);
        }
        for await (const event of parseEventStream(resp.body)) {
          delivered += 1;
          remaining -= 1;
          retries = 0;
          yield event;
          if (remaining <= 0) return;
        }
        return; // orderly end of stream
      } catch (err) {
        retries += 1;
        if (retries > maxRetries) throw err;
        await sleep(Math.min(2000, 50 * 2 ** retries));
      }
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Parse a text/event-stream body into typed events. */
export async function* parseEventStream(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<StreamEvent> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let sep: number;
      while ((sep = buffer.indexOf("\n\n")) >= 0) {
        const block = buffer.slice(0, sep);
        buffer = buffer.slice(sep + 2);
        const event = parseEventBlock(block);
        if (event) yield event;
      }
    }
    const tail = parseEventBlock(buffer);
    if (tail) yield tail;
  } finally {
    reader.releaseLock();
  }
}

export function parseEventBlock(block: string): StreamEvent | null {
  let name = "message";
  const dataLines: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith("event:")) name = line.slice(6).trim();
    else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
  }
  if (!dataLines.length) return null;
  const data = JSON.parse(dataLines.join("\n"));
  if (name === "tick" || name === "layout") {
    return { name, data } as StreamEvent;
  }
  return null;
}
