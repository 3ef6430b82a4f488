// Wire types of the runtime API. Field names match the server JSON; the
// console never derives its own numbers from these, it only displays them.

export interface IntervalJson {
  low: number | null; // null = unbounded
  high: number | null;
}

export interface ParameterJson {
  id: string;
  name: string;
  kind: "sensor" | "setting";
  units: string;
  observedMin: number | null;
  observedMax: number | null;
}

export interface ModelSummary {
  formatVersion: number;
  sensorCount: number;
  settingCount: number;
  statusStateCount: number;
  settingsStateCount: number;
  compositeCount: number;
  supportedCompositeCount: number;
  minLeafSize: number;
  trainingWindow: [number, number];
  labels: string[];
  targetLabel: string;
  datasetFingerprint: string;
  parameters: ParameterJson[];
}

export interface Prediction {
  verdict: "target" | "offTarget" | "unknown";
  likelihood: number | null;
  compositeId: string | null;
  popularity: number | null;
  matchedCount: number;
}

export interface Recommendation {
  compositeId: string;
  settingsIntervals: Record<string, IntervalJson>;
  pointSettings: Record<string, number>;
  expectedGoodness: number;
  support: number;
}

export interface SnapshotJson {
  sensors: Record<string, number>;
  settings: Record<string, number>;
  newSettings: Record<string, number>;
}

export interface TickEvent {
  type: "tick";
  index: number;
  t: number;
  snapshot: SnapshotJson;
  prediction: Prediction;
  recommendation: Recommendation | null;
  pendingSettings: Record<string, number>;
  runningLabel: string | null;
  whatIf: Prediction | null;
  whatIfSettings: Record<string, number> | null;
}

export interface SessionRequest {
  mode: "synthetic" | "replay";
  tickIntervalMs?: number;
  speedFactor?: number;
  seed?: number;
  plantSpec?: unknown;
  replayLogPath?: string;
  batchId?: string;
  materialType?: string | null;
  decisionThreshold?: number;
  recommendEachTick?: boolean;
  maxTicks?: number | null;
}

export interface StatusJson {
  sensors: Record<string, number>;
  settings: Record<string, number>;
}

export interface ApplyAck {
  accepted: Record<string, number>;
  mode: string;
}

export type ConnectionState = "connecting" | "live" | "reconnecting" | "closed";
