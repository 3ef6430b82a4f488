// SSE parsing and the reconnect/backoff loop, against fake transports.

import { describe, expect, it } from "vitest";

import { ApiClient, sseData } from "../src/api.js";
import type { TickEvent } from "../src/types.js";

function bytesStream(chunks: string[]): ReadableStream<Uint8Array> {
  const encoder = new TextEncoder();
  let i = 0;
  return new ReadableStream({
    pull(controller) {
      if (i < chunks.length) controller.enqueue(encoder.encode(chunks[i++]));
      else controller.close();
    },
  });
}

async function collect(stream: AsyncGenerator<string>): Promise<string[]> {
  const out: string[] = [];
  for await (const item of stream) out.push(item);
  return out;
}

describe("sseData", () => {
  it("yields data payloads frame by frame", async () => {
    const stream = bytesStream([
      'data: {"a":1}\n\n',
      'data: {"a":2}\n\ndata: {"a":3}\n\n',
    ]);
    expect(await collect(sseData(stream))).toEqual(
      ['{"a":1}', '{"a":2}', '{"a":3}'],
    );
  });

  it("reassembles frames split across chunks", async () => {
    const stream = bytesStream(['data: {"a"', ':1}\n', "\n"]);
    expect(await collect(sseData(stream))).toEqual(['{"a":1}']);
  });

  it("skips keepalive comment frames", async () => {
    const stream = bytesStream([": keepalive\n\n", 'data: {"a":1}\n\n']);
    expect(await collect(sseData(stream))).toEqual(['{"a":1}']);
  });
});

function fakeTick(index: number): string {
  const event = {
    type: "tick", index, t: index * 1000,
    snapshot: { sensors: {}, settings: {}, newSettings: {} },
    prediction: {
      verdict: "target", likelihood: 1, compositeId: "c",
      popularity: 1, matchedCount: 1,
    },
    recommendation: null, pendingSettings: {},
    runningLabel: null, whatIf: null, whatIfSettings: null,
  };
  return `data: ${JSON.stringify(event)}\n\n`;
}

describe("streamEvents", () => {
  it("delivers events in order and reports closed at end of stream", async () => {
    const fetchImpl: typeof fetch = async () =>
      new Response(bytesStream([fakeTick(0), fakeTick(1), fakeTick(2)]), {
        status: 200,
      });
    const client = new ApiClient("http://test", fetchImpl);
    const events: TickEvent[] = [];
    const statuses: string[] = [];
    await new Promise<void>((resolve) => {
      client.streamEvents("sid", {
        onEvent: (e) => events.push(e),
        onStatus: (s) => {
          statuses.push(s);
          if (s === "closed") resolve();
        },
      });
    });
    expect(events.map((e) => e.index)).toEqual([0, 1, 2]);
    expect(statuses).toEqual(["connecting", "live", "closed"]);
  });

  it("reconnects with backoff after a drop and resumes from the latest tick", async () => {
    let calls = 0;
    const fetchImpl: typeof fetch = async () => {
      calls += 1;
      if (calls === 1) {
        // First connection delivers one tick, then dies mid-stream.
        let pulls = 0;
        return new Response(
          new ReadableStream<Uint8Array>({
            pull(controller) {
              pulls += 1;
              if (pulls === 1) {
                controller.enqueue(new TextEncoder().encode(fakeTick(0)));
              } else {
                controller.error(new Error("connection reset"));
              }
            },
          }),
          { status: 200 },
        );
      }
      // Reconnect: server replays the latest tick, then continues.
      return new Response(bytesStream([fakeTick(0), fakeTick(1)]), {
        status: 200,
      });
    };
    const client = new ApiClient("http://test", fetchImpl);
    const events: TickEvent[] = [];
    const statuses: string[] = [];
    await new Promise<void>((resolve) => {
      client.streamEvents(
        "sid",
        {
          onEvent: (e) => events.push(e),
          onStatus: (s) => {
            statuses.push(s);
            if (s === "closed") resolve();
          },
        },
        { initialBackoffMs: 5, maxBackoffMs: 10 },
      );
    });
    expect(calls).toBe(2);
    expect(statuses).toContain("reconnecting");
    // The replayed tick 0 arrives twice; the view layer dedupes by t.
    expect(events.map((e) => e.index)).toEqual([0, 0, 1]);
  });

  it("reports closed without retrying on an unknown session", async () => {
    let calls = 0;
    const fetchImpl: typeof fetch = async () => {
      calls += 1;
      return new Response(JSON.stringify({ detail: "unknown session" }), {
        status: 404,
      });
    };
    const client = new ApiClient("http://test", fetchImpl);
    const statuses: string[] = [];
    await new Promise<void>((resolve) => {
      client.streamEvents("nope", {
        onEvent: () => undefined,
        onStatus: (s) => {
          statuses.push(s);
          if (s === "closed") resolve();
        },
      });
    });
    expect(calls).toBe(1);
    expect(statuses).not.toContain("reconnecting");
  });

  it("gives up after maxRetries and reports closed", async () => {
    const fetchImpl: typeof fetch = async () => {
      throw new Error("refused");
    };
    const client = new ApiClient("http://test", fetchImpl);
    const statuses: string[] = [];
    await new Promise<void>((resolve) => {
      client.streamEvents(
        "sid",
        {
          onEvent: () => undefined,
          onStatus: (s) => {
            statuses.push(s);
            if (s === "closed") resolve();
          },
        },
        { initialBackoffMs: 1, maxRetries: 2 },
      );
    });
    expect(statuses.filter((s) => s === "reconnecting").length).toBe(2);
  });

  it("stops cleanly when the caller unsubscribes", async () => {
    let pushed = 0;
    const fetchImpl: typeof fetch = async () =>
      new Response(
        new ReadableStream<Uint8Array>({
          pull(controller) {
            pushed += 1;
            controller.enqueue(new TextEncoder().encode(fakeTick(pushed)));
          },
        }),
        { status: 200 },
      );
    const client = new ApiClient("http://test", fetchImpl);
    const events: TickEvent[] = [];
    const stop = await new Promise<() => void>((resolve) => {
      const stopFn = client.streamEvents("sid", {
        onEvent: (e) => {
          events.push(e);
          if (events.length === 3) resolve(stopFn);
        },
      });
    });
    stop();
    const seen = events.length;
    await new Promise((r) => setTimeout(r, 20));
    expect(events.length).toBe(seen);
  });
});
