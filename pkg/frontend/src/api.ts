// Typed client over the runtime HTTP/SSE API. Works in browsers and in
// Node 20+ (both expose fetch with streaming bodies), so the same code is
// exercised by the test suite and shipped to operators.

import type {
  ApplyAck,
  ModelSummary,
  Prediction,
  Recommendation,
  SessionRequest,
  StatusJson,
  TickEvent,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

export class OutOfRegimeError extends ApiError {}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    if (resp.status === 409) throw new OutOfRegimeError(resp.status, detail);
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export interface StreamHandlers {
  onEvent: (event: TickEvent) => void;
  onStatus?: (status: "connecting" | "live" | "reconnecting" | "closed") => void;
}

export interface StreamOptions {
  maxBackoffMs?: number;
  initialBackoffMs?: number;
  maxRetries?: number;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async getModel(): Promise<ModelSummary> {
    return expectJson(await this.fetchImpl(this.url("/api/model")));
  }

  async createSession(config: SessionRequest): Promise<{ sessionId: string }> {
    return expectJson(
      await this.fetchImpl(this.url("/api/session"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(config),
      }),
    );
  }

  async getLatest(sessionId: string): Promise<{ tick: TickEvent | null; closed: boolean }> {
    return expectJson(
      await this.fetchImpl(this.url(`/api/session/${sessionId}`)),
    );
  }

  async applySettings(
    sessionId: string,
    values: Record<string, number>,
  ): Promise<ApplyAck> {
    return expectJson(
      await this.fetchImpl(this.url(`/api/session/${sessionId}/settings`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ values }),
      }),
    );
  }

  async recordQuality(
    sessionId: string,
    measurement: number,
  ): Promise<{ runningLabel: string | null }> {
    return expectJson(
      await this.fetchImpl(this.url(`/api/session/${sessionId}/quality`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ measurement }),
      }),
    );
  }

  async getRecommendation(sessionId: string): Promise<Recommendation> {
    return expectJson(
      await this.fetchImpl(this.url(`/api/session/${sessionId}/recommendation`)),
    );
  }

  async whatIf(
    status: StatusJson,
    candidateSettings: Record<string, number>,
  ): Promise<Prediction> {
    return expectJson(
      await this.fetchImpl(this.url("/api/whatif"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ status, candidateSettings }),
      }),
    );
  }

  async closeSession(sessionId: string): Promise<{ ticks: number }> {
    return expectJson(
      await this.fetchImpl(this.url(`/api/session/${sessionId}`), {
        method: "DELETE",
      }),
    );
  }

  /**
   * Subscribe to the session's event stream. Reconnects with exponential
   * backoff on drops; the server replays the latest tick on reconnect and
   * the view dedupes by timestamp. Returns a stop() function.
   */
  streamEvents(
    sessionId: string,
    handlers: StreamHandlers,
    options: StreamOptions = {},
  ): () => void {
    const controller = { stopped: false, abort: new AbortController() };
    const initial = options.initialBackoffMs ?? 250;
    const max = options.maxBackoffMs ?? 5000;
    let retriesLeft = options.maxRetries ?? Number.POSITIVE_INFINITY;
    let backoff = initial;

    const run = async () => {
      handlers.onStatus?.("connecting");
      while (!controller.stopped) {
        try {
          const resp = await this.fetchImpl(
            this.url(`/api/session/${sessionId}/events`),
            { signal: controller.abort.signal },
          );
          if (!resp.ok || resp.body === null) {
            throw new ApiError(resp.status, "stream unavailable");
          }
          handlers.onStatus?.("live");
          backoff = initial;
          for await (const data of sseData(resp.body)) {
            if (controller.stopped) return;
            handlers.onEvent(JSON.parse(data) as TickEvent);
          }
          // Clean end of stream: session closed.
          handlers.onStatus?.("closed");
          return;
        } catch (err) {
          if (controller.stopped) return;
          if (err instanceof ApiError && err.status === 404) {
            handlers.onStatus?.("closed");
            return;
          }
          if (retriesLeft-- <= 0) {
            handlers.onStatus?.("closed");
            return;
          }
          handlers.onStatus?.("reconnecting");
          await sleep(backoff);
          backoff = Math.min(backoff * 2, max);
        }
      }
    };
    void run();
    return () => {
      controller.stopped = true;
      controller.abort.abort();
    };
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Parse the data payloads out of a server-sent-event byte stream. */
export async function* sseData(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<string> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      for (;;) {
        const sep = buffer.indexOf("\n\n");
        if (sep < 0) break;
        const frame = buffer.slice(0, sep);
        buffer = buffer.slice(sep + 2);
        const data = frame
          .split("\n")
          .filter((line) => line.startsWith("data: "))
          .map((line) => line.slice(6))
          .join("\n");
        if (data.length > 0) yield data; // comment-only frames are keepalives
      }
    }
  } finally {
    reader.releaseLock();
  }
}
