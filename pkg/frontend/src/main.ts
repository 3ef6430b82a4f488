// Console bootstrap: attach to an existing session (?session=ID) or create
// a synthetic one from a pasted plant spec.

import { ApiClient } from "./api.js";
import { ConsoleUi } from "./ui.js";
import { applyTick, emptyView, setConnection } from "./view.js";

function attach(client: ApiClient, sessionId: string): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const view = emptyView();
  const ui = new ConsoleUi(root, client, sessionId, view);
  client.streamEvents(sessionId, {
    onEvent: (event) => {
      if (applyTick(view, event)) ui.renderTick(event);
    },
    onStatus: (status) => {
      setConnection(view, status);
      ui.setConnection(status);
    },
  });
}

async function bootstrap(): Promise<void> {
  const client = new ApiClient("");
  const params = new URLSearchParams(window.location.search);
  const existing = params.get("session");
  if (existing) {
    attach(client, existing);
    return;
  }

  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  root.replaceChildren();
  const form = document.createElement("div");
  form.className = "card launcher";
  form.innerHTML = `
    <h2>start a synthetic session</h2>
    <p class="muted">paste a plant spec (the trainer's synth-data command
    writes one next to the bundle), or open ?session=ID to watch a running
    session.</p>
    <textarea id="plant-spec" rows="10" spellcheck="false"></textarea>
    <label>tick interval (ms) <input id="tick-ms" type="number" value="1000"></label>
    <button id="start">start session</button>
    <div id="launch-error" class="warning"></div>
  `;
  root.append(form);
  const button = document.getElementById("start") as HTMLButtonElement;
  button.addEventListener("click", async () => {
    const errorBox = document.getElementById("launch-error")!;
    errorBox.textContent = "";
    try {
      const spec = JSON.parse(
        (document.getElementById("plant-spec") as HTMLTextAreaElement).value,
      );
      const tickMs = Number(
        (document.getElementById("tick-ms") as HTMLInputElement).value,
      );
      const { sessionId } = await client.createSession({
        mode: "synthetic",
        tickIntervalMs: tickMs,
        plantSpec: spec,
      });
      const url = new URL(window.location.href);
      url.searchParams.set("session", sessionId);
      window.history.replaceState(null, "", url);
      attach(client, sessionId);
    } catch (err) {
      errorBox.textContent = (err as Error).message;
    }
  });
}

void bootstrap();
