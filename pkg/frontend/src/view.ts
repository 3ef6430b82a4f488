// Session view state: everything the console renders, derived solely from
// API responses. No state matching or scoring happens here; every number
// displayed is a field the server sent.

import type {
  ConnectionState,
  IntervalJson,
  Recommendation,
  TickEvent,
} from "./types.js";

export const TREND_LIMIT = 500;

export interface TrendPoint {
  t: number;
  value: number;
}

export interface SessionView {
  latest: TickEvent | null;
  lastT: number | null;
  trends: Map<string, TrendPoint[]>; // per parameter, bounded
  likelihoodTrend: TrendPoint[];     // null likelihoods are skipped
  recommendation: Recommendation | null;
  connection: ConnectionState;
  runningLabel: string | null;
  ticksSeen: number;
  duplicatesDropped: number;
}

export function emptyView(): SessionView {
  return {
    latest: null,
    lastT: null,
    trends: new Map(),
    likelihoodTrend: [],
    recommendation: null,
    connection: "connecting",
    runningLabel: null,
    ticksSeen: 0,
    duplicatesDropped: 0,
  };
}

function push(view: SessionView, key: string, point: TrendPoint): void {
  let buffer = view.trends.get(key);
  if (buffer === undefined) {
    buffer = [];
    view.trends.set(key, buffer);
  }
  buffer.push(point);
  if (buffer.length > TREND_LIMIT) buffer.shift(); // oldest evicted first
}

/**
 * Fold one tick into the view. Events are deduped by timestamp, so a
 * reconnect replaying the latest tick never produces duplicate trend
 * points. Returns false when the event was a duplicate.
 */
export function applyTick(view: SessionView, event: TickEvent): boolean {
  if (view.lastT !== null && event.t <= view.lastT) {
    view.duplicatesDropped += 1;
    return false;
  }
  view.lastT = event.t;
  view.latest = event;
  view.ticksSeen += 1;
  view.runningLabel = event.runningLabel;
  for (const [pid, value] of Object.entries(event.snapshot.sensors)) {
    push(view, pid, { t: event.t, value });
  }
  for (const [pid, value] of Object.entries(event.snapshot.settings)) {
    push(view, pid, { t: event.t, value });
  }
  if (event.prediction.likelihood !== null) {
    view.likelihoodTrend.push({ t: event.t, value: event.prediction.likelihood });
    if (view.likelihoodTrend.length > TREND_LIMIT) view.likelihoodTrend.shift();
  }
  if (event.recommendation !== null) {
    view.recommendation = event.recommendation;
  }
  return true;
}

export function setConnection(view: SessionView, state: ConnectionState): void {
  view.connection = state;
}

export function setRecommendation(
  view: SessionView,
  recommendation: Recommendation | null,
): void {
  view.recommendation = recommendation;
}

export function inInterval(interval: IntervalJson, value: number): boolean {
  const low = interval.low ?? Number.NEGATIVE_INFINITY;
  const high = interval.high ?? Number.POSITIVE_INFINITY;
  return value > low && value <= high;
}

export interface EditValidation {
  ok: boolean;
  errors: Record<string, string>;
}

/**
 * Operators may edit recommended point values, but only inside the
 * recommended intervals; edits outside are rejected before any request
 * is sent.
 */
export function validateEdits(
  recommendation: Recommendation,
  edits: Record<string, number>,
): EditValidation {
  const errors: Record<string, string> = {};
  for (const [pid, value] of Object.entries(edits)) {
    const interval = recommendation.settingsIntervals[pid];
    if (interval === undefined) {
      errors[pid] = "not part of the recommendation";
    } else if (!Number.isFinite(value)) {
      errors[pid] = "not a number";
    } else if (!inInterval(interval, value)) {
      errors[pid] = `outside (${interval.low ?? "-inf"}, ${interval.high ?? "inf"}]`;
    }
  }
  return { ok: Object.keys(errors).length === 0, errors };
}

/** Apply button is enabled only when the live verdict is known. */
export function canApplyRecommendation(view: SessionView): boolean {
  return (
    view.recommendation !== null &&
    view.latest !== null &&
    view.latest.prediction.verdict !== "unknown" &&
    view.connection === "live"
  );
}
