// View reducer: ordering, dedupe, buffer bounds, traceability to API fields.

import { describe, expect, it } from "vitest";

import type { Recommendation, TickEvent } from "../src/types.js";
import {
  TREND_LIMIT,
  applyTick,
  canApplyRecommendation,
  emptyView,
  inInterval,
  setConnection,
  validateEdits,
} from "../src/view.js";

function tick(index: number, overrides: Partial<TickEvent> = {}): TickEvent {
  return {
    type: "tick",
    index,
    t: 1_000_000 + index * 1000,
    snapshot: {
      sensors: { s1: 40 + index, s2: 50 },
      settings: { h1: 95 },
      newSettings: { h1: 95 },
    },
    prediction: {
      verdict: "offTarget",
      likelihood: 0.25,
      compositeId: "u-a|w-a",
      popularity: 10,
      matchedCount: 1,
    },
    recommendation: null,
    pendingSettings: {},
    runningLabel: null,
    whatIf: null,
    whatIfSettings: null,
    ...overrides,
  };
}

const REC: Recommendation = {
  compositeId: "u-a|w-b",
  settingsIntervals: { h1: { low: 100, high: 110 } },
  pointSettings: { h1: 105 },
  expectedGoodness: 1.0,
  support: 42,
};

describe("applyTick", () => {
  it("folds ticks in order and mirrors server fields verbatim", () => {
    const view = emptyView();
    for (const i of [0, 1, 2]) applyTick(view, tick(i));
    expect(view.ticksSeen).toBe(3);
    expect(view.latest?.index).toBe(2);
    // Traceability: displayed numbers are exactly the API's fields.
    expect(view.latest?.prediction.likelihood).toBe(0.25);
    expect(view.trends.get("s1")?.map((p) => p.value)).toEqual([40, 41, 42]);
  });

  it("dedupes replayed events by timestamp", () => {
    const view = emptyView();
    applyTick(view, tick(0));
    applyTick(view, tick(1));
    const replayed = applyTick(view, tick(1));
    expect(replayed).toBe(false);
    expect(view.duplicatesDropped).toBe(1);
    expect(view.trends.get("s1")?.length).toBe(2);
  });

  it("bounds trend buffers, evicting oldest points first", () => {
    const view = emptyView();
    for (let i = 0; i < TREND_LIMIT + 25; i++) applyTick(view, tick(i));
    const buffer = view.trends.get("s1")!;
    expect(buffer.length).toBe(TREND_LIMIT);
    expect(buffer[0]!.value).toBe(40 + 25); // oldest 25 evicted
  });

  it("skips null likelihoods in the likelihood trend", () => {
    const view = emptyView();
    applyTick(view, tick(0));
    applyTick(view, tick(1, {
      prediction: {
        verdict: "unknown", likelihood: null, compositeId: null,
        popularity: null, matchedCount: 0,
      },
    }));
    applyTick(view, tick(2));
    expect(view.likelihoodTrend.length).toBe(2);
  });

  it("keeps per-tick recommendations when the server pushes them", () => {
    const view = emptyView();
    applyTick(view, tick(0, { recommendation: REC }));
    expect(view.recommendation?.compositeId).toBe("u-a|w-b");
  });
});

describe("validateEdits", () => {
  it("accepts in-interval operator edits", () => {
    expect(validateEdits(REC, { h1: 110 }).ok).toBe(true);
    expect(validateEdits(REC, { h1: 100.01 }).ok).toBe(true);
  });

  it("rejects edits outside the recommended interval before any POST", () => {
    const low = validateEdits(REC, { h1: 100 }); // half-open: 100 excluded
    expect(low.ok).toBe(false);
    expect(low.errors["h1"]).toContain("outside");
    expect(validateEdits(REC, { h1: 110.5 }).ok).toBe(false);
    expect(validateEdits(REC, { h1: Number.NaN }).ok).toBe(false);
    expect(validateEdits(REC, { h9: 105 }).ok).toBe(false);
  });

  it("treats null bounds as unbounded", () => {
    expect(inInterval({ low: null, high: null }, -1e9)).toBe(true);
    expect(inInterval({ low: null, high: 5 }, 5)).toBe(true);
    expect(inInterval({ low: 5, high: null }, 5)).toBe(false);
  });
});

describe("canApplyRecommendation", () => {
  it("requires a live connection, known verdict and a recommendation", () => {
    const view = emptyView();
    expect(canApplyRecommendation(view)).toBe(false);
    applyTick(view, tick(0));
    view.recommendation = REC;
    setConnection(view, "live");
    expect(canApplyRecommendation(view)).toBe(true);
    setConnection(view, "reconnecting");
    expect(canApplyRecommendation(view)).toBe(false);
  });

  it("disables apply while the verdict is unknown", () => {
    const view = emptyView();
    applyTick(view, tick(0, {
      prediction: {
        verdict: "unknown", likelihood: null, compositeId: null,
        popularity: null, matchedCount: 0,
      },
    }));
    view.recommendation = REC;
    setConnection(view, "live");
    expect(canApplyRecommendation(view)).toBe(false);
  });
});
