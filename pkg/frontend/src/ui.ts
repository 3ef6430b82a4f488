// DOM rendering and operator controls. Everything shown comes straight
// from SessionView fields; this layer formats, it never computes.

import { ApiClient, OutOfRegimeError } from "./api.js";
import type { Recommendation, TickEvent } from "./types.js";
import {
  SessionView,
  canApplyRecommendation,
  validateEdits,
} from "./view.js";

function el<T extends HTMLElement>(
  tag: string,
  className?: string,
  text?: string,
): T {
  const node = document.createElement(tag) as T;
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmt(value: number | null | undefined, digits = 3): string {
  if (value === null || value === undefined) return "–";
  return value.toFixed(digits);
}

function intervalText(low: number | null, high: number | null): string {
  return `(${low === null ? "-inf" : low} .. ${high === null ? "inf" : high}]`;
}

export class ConsoleUi {
  readonly root: HTMLElement;
  private readonly client: ApiClient;
  private sessionId: string;
  private statusBadge: HTMLElement;
  private verdictBox: HTMLElement;
  private likelihoodBox: HTMLElement;
  private runningLabelBox: HTMLElement;
  private sensorsBody: HTMLElement;
  private settingsBody: HTMLElement;
  private trendCanvas: HTMLCanvasElement;
  private recPanel: HTMLElement;
  private recStatusLine: HTMLElement;
  private applyButton: HTMLButtonElement;
  private pointInputs = new Map<string, HTMLInputElement>();
  private recommendation: Recommendation | null = null;
  private whatIfInputs = new Map<string, HTMLInputElement>();
  private whatIfButton!: HTMLButtonElement;
  private whatIfResult: HTMLElement;
  private qualityInput: HTMLInputElement;
  private qualityResult: HTMLElement;
  private view: SessionView;

  constructor(root: HTMLElement, client: ApiClient, sessionId: string,
              view: SessionView) {
    this.root = root;
    this.client = client;
    this.sessionId = sessionId;
    this.view = view;
    root.replaceChildren();

    const header = el("header", "topbar");
    header.append(el("h1", "", "plantstate operator console"));
    this.statusBadge = el("span", "badge badge-connecting", "connecting");
    header.append(this.statusBadge);
    root.append(header);

    const grid = el("div", "grid");
    root.append(grid);

    const outlook = el("section", "card");
    outlook.append(el("h2", "", "quality outlook"));
    this.verdictBox = el("div", "verdict", "–");
    this.likelihoodBox = el("div", "likelihood", "–");
    this.runningLabelBox = el("div", "running-label", "no quality samples yet");
    outlook.append(this.verdictBox, this.likelihoodBox, this.runningLabelBox);
    this.trendCanvas = el<HTMLCanvasElement>("canvas", "trend");
    this.trendCanvas.width = 360;
    this.trendCanvas.height = 60;
    outlook.append(this.trendCanvas);
    grid.append(outlook);

    const sensors = el("section", "card");
    sensors.append(el("h2", "", "sensors"));
    this.sensorsBody = el("div", "kv");
    sensors.append(this.sensorsBody);
    grid.append(sensors);

    const settings = el("section", "card");
    settings.append(el("h2", "", "settings"));
    this.settingsBody = el("div", "kv");
    settings.append(this.settingsBody);
    grid.append(settings);

    this.recPanel = el("section", "card");
    this.recPanel.append(el("h2", "", "recommendation"));
    this.recStatusLine = el("div", "muted", "none requested yet");
    this.recPanel.append(this.recStatusLine);
    const fetchButton = el<HTMLButtonElement>("button", "", "request recommendation");
    fetchButton.id = "fetch-recommendation";
    fetchButton.addEventListener("click", () => void this.fetchRecommendation());
    this.applyButton = el<HTMLButtonElement>("button", "", "apply");
    this.applyButton.id = "apply-recommendation";
    this.applyButton.disabled = true;
    this.applyButton.addEventListener("click", () => void this.applyRecommendation());
    this.recPanel.append(fetchButton, this.applyButton);
    grid.append(this.recPanel);

    const whatIf = el("section", "card");
    whatIf.append(el("h2", "", "what-if"));
    const wiForm = el("div", "kv");
    wiForm.id = "whatif-form";
    whatIf.append(wiForm);
    this.whatIfButton = el<HTMLButtonElement>("button", "", "evaluate");
    this.whatIfButton.id = "whatif-submit";
    this.whatIfButton.disabled = true; // until every setting is filled
    this.whatIfButton.addEventListener("click", () => void this.submitWhatIf());
    this.whatIfResult = el("div", "muted", "–");
    whatIf.append(this.whatIfButton, this.whatIfResult);
    grid.append(whatIf);
    this.whatIfForm = wiForm;

    const quality = el("section", "card");
    quality.append(el("h2", "", "offline quality sample"));
    this.qualityInput = el<HTMLInputElement>("input");
    this.qualityInput.type = "number";
    this.qualityInput.step = "any";
    this.qualityInput.id = "quality-measurement";
    const qButton = el<HTMLButtonElement>("button", "", "record");
    qButton.id = "quality-submit";
    qButton.addEventListener("click", () => void this.submitQuality());
    this.qualityResult = el("div", "muted", "–");
    quality.append(this.qualityInput, qButton, this.qualityResult);
    grid.append(quality);
  }

  private whatIfForm!: HTMLElement;

  setConnection(state: string): void {
    this.statusBadge.textContent = state;
    this.statusBadge.className = `badge badge-${state}`;
    this.refreshApplyButton();
  }

  renderTick(event: TickEvent): void {
    const p = event.prediction;
    this.verdictBox.textContent = p.verdict;
    this.verdictBox.className = `verdict verdict-${p.verdict}`;
    this.likelihoodBox.textContent =
      p.likelihood === null
        ? "likelihood unknown (outside learned regimes)"
        : `likelihood ${fmt(p.likelihood)} (support ${p.popularity})`;
    this.runningLabelBox.textContent = this.view.runningLabel === null
      ? "no quality samples yet"
      : `running label: ${this.view.runningLabel}`;

    this.renderMap(this.sensorsBody, event.snapshot.sensors, new Map());
    const pending = new Map(Object.entries(event.pendingSettings));
    this.renderSettings(event, pending);
    this.ensureWhatIfInputs(event);
    this.drawLikelihood();
    this.refreshApplyButton();
  }

  private renderMap(
    container: HTMLElement,
    values: Record<string, number>,
    notes: Map<string, string>,
  ): void {
    container.replaceChildren();
    for (const [pid, value] of Object.entries(values)) {
      container.append(el("span", "k", pid));
      const note = notes.get(pid);
      container.append(el("span", "v", fmt(value) + (note ? ` ${note}` : "")));
    }
  }

  private renderSettings(event: TickEvent, pending: Map<string, number>): void {
    this.settingsBody.replaceChildren();
    for (const [pid, applied] of Object.entries(event.snapshot.settings)) {
      const next = event.snapshot.newSettings[pid];
      this.settingsBody.append(el("span", "k", pid));
      let text = `${fmt(applied)} -> ${fmt(next)}`;
      if (pending.has(pid)) text += ` (pending ${fmt(pending.get(pid)!)})`;
      this.settingsBody.append(el("span", "v", text));
    }
  }

  private ensureWhatIfInputs(event: TickEvent): void {
    if (this.whatIfInputs.size > 0) return;
    for (const pid of Object.keys(event.snapshot.newSettings)) {
      const label = el("span", "k", pid);
      const input = el<HTMLInputElement>("input");
      input.type = "number";
      input.step = "any";
      input.dataset["pid"] = pid;
      input.addEventListener("input", () => this.refreshWhatIfButton());
      this.whatIfInputs.set(pid, input);
      this.whatIfForm.append(label, input);
    }
    this.refreshWhatIfButton();
  }

  refreshWhatIfButton(): void {
    const complete = [...this.whatIfInputs.values()]
      .every((input) => input.value !== "");
    this.whatIfButton.disabled = !complete || this.whatIfInputs.size === 0;
  }

  private drawLikelihood(): void {
    let ctx: CanvasRenderingContext2D | null = null;
    try {
      ctx = this.trendCanvas.getContext("2d");
    } catch {
      return; // canvas unavailable (jsdom); trends are cosmetic
    }
    if (!ctx) return;
    const points = this.view.likelihoodTrend;
    const { width, height } = this.trendCanvas;
    ctx.clearRect(0, 0, width, height);
    ctx.strokeStyle = "#2b7";
    ctx.beginPath();
    points.forEach((point, i) => {
      const x = (i / Math.max(1, points.length - 1)) * (width - 4) + 2;
      const y = height - 2 - point.value * (height - 4);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }

  refreshApplyButton(): void {
    const enabled = canApplyRecommendation(this.view);
    this.applyButton.disabled = !enabled;
    this.applyButton.title = enabled
      ? "apply the recommended point settings"
      : "needs a live session with a known verdict and a recommendation";
  }

  async fetchRecommendation(): Promise<void> {
    try {
      const rec = await this.client.getRecommendation(this.sessionId);
      this.recommendation = rec;
      this.view.recommendation = rec;
      this.renderRecommendation(rec);
    } catch (err) {
      this.recommendation = null;
      this.view.recommendation = null;
      if (err instanceof OutOfRegimeError) {
        this.recStatusLine.textContent =
          "out of regime: the current status matches no learned state";
        this.recStatusLine.className = "warning";
      } else {
        this.recStatusLine.textContent = `error: ${(err as Error).message}`;
        this.recStatusLine.className = "warning";
      }
    }
    this.refreshApplyButton();
  }

  private renderRecommendation(rec: Recommendation): void {
    this.recStatusLine.className = "";
    this.recStatusLine.replaceChildren();
    const meta = el("div", "muted",
      `expected goodness ${fmt(rec.expectedGoodness)} · evidence from ` +
      `${rec.support} historical snapshots · ${rec.compositeId}`);
    this.recStatusLine.append(meta);
    this.pointInputs.clear();
    const table = el("div", "kv");
    for (const [pid, interval] of Object.entries(rec.settingsIntervals)) {
      table.append(el("span", "k", pid));
      const cell = el("span", "v");
      cell.append(
        el("span", "muted", intervalText(interval.low, interval.high) + " "),
      );
      const input = el<HTMLInputElement>("input");
      input.type = "number";
      input.step = "any";
      input.value = String(rec.pointSettings[pid]);
      input.dataset["pid"] = pid;
      this.pointInputs.set(pid, input);
      cell.append(input);
      table.append(cell);
    }
    this.recStatusLine.append(table);
  }

  async applyRecommendation(): Promise<void> {
    if (this.recommendation === null) return;
    const edits: Record<string, number> = {};
    for (const [pid, input] of this.pointInputs) {
      edits[pid] = Number(input.value);
    }
    const check = validateEdits(this.recommendation, edits);
    if (!check.ok) {
      const msgs = Object.entries(check.errors)
        .map(([pid, msg]) => `${pid}: ${msg}`)
        .join("; ");
      this.recStatusLine.append(el("div", "warning", `rejected: ${msgs}`));
      return;
    }
    await this.client.applySettings(this.sessionId, edits);
  }

  async submitWhatIf(): Promise<void> {
    if (this.view.latest === null) return;
    const candidate: Record<string, number> = {};
    for (const [pid, input] of this.whatIfInputs) {
      if (input.value === "") {
        this.whatIfResult.textContent = "fill every setting first";
        return;
      }
      candidate[pid] = Number(input.value);
    }
    const snapshot = this.view.latest.snapshot;
    const prediction = await this.client.whatIf(
      { sensors: snapshot.sensors, settings: snapshot.settings },
      candidate,
    );
    const live = this.view.latest.prediction.likelihood;
    this.whatIfResult.textContent =
      `candidate: ${prediction.verdict} (${fmt(prediction.likelihood)})` +
      ` vs live ${fmt(live)}`;
  }

  async submitQuality(): Promise<void> {
    if (this.qualityInput.value === "") return;
    const result = await this.client.recordQuality(
      this.sessionId,
      Number(this.qualityInput.value),
    );
    this.qualityResult.textContent = `running label: ${result.runningLabel}`;
  }
}
