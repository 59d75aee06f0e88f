// Session screen wiring. Everything the page knows about the backend goes
// through ServiceClient; killing this page never touches a running turn.

import { ConnectionLost, ServiceClient } from "./api.js";
import { resolveBaseUrl } from "./config.js";
import { TracePoller } from "./poller.js";
import { bannerFor, canSubmit, initialState, ScreenState } from "./state.js";
import { renderTrace } from "./trace.js";
import type { TraceDocument } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function bootstrap(): void {
  const client = new ServiceClient(resolveBaseUrl(window));
  const contextSelect = el<HTMLSelectElement>("context");
  const openButton = el<HTMLButtonElement>("open-session");
  const sessionLabel = el<HTMLSpanElement>("session-label");
  const questionInput = el<HTMLInputElement>("question");
  const submitButton = el<HTMLButtonElement>("submit");
  const banner = el<HTMLDivElement>("banner");
  const traces = el<HTMLDivElement>("traces");

  let state: ScreenState = { ...initialState };
  let sessionId: string | null = null;
  let poller: TracePoller | null = null;

  function setState(next: Partial<ScreenState>): void {
    state = { ...state, ...next };
    submitButton.disabled = !canSubmit(state) || sessionId === null;
    banner.textContent = state.banner ?? "";
    banner.hidden = state.banner === null;
  }

  function showTrace(doc: TraceDocument): void {
    const holder = document.createElement("div");
    holder.innerHTML = renderTrace(doc);
    traces.prepend(holder);
  }

  async function refreshContexts(): Promise<void> {
    try {
      const { contexts } = await client.listContexts();
      contextSelect.innerHTML = contexts
        .map((id) => `<option value="${id}">${id}</option>`)
        .join("");
      setState({ banner: null });
    } catch (err) {
      setState({ banner: bannerFor(err) });
      if (err instanceof ConnectionLost) setTimeout(() => void refreshContexts(), 1000);
    }
  }

  openButton.addEventListener("click", () => {
    void (async () => {
      try {
        const created = await client.createSession(contextSelect.value);
        sessionId = created.session_id;
        sessionLabel.textContent = created.session_id;
        traces.innerHTML = "";
        setState({ banner: null });
      } catch (err) {
        setState({ banner: bannerFor(err) });
      }
    })();
  });

  questionInput.addEventListener("input", () => {
    setState({ question: questionInput.value });
  });

  submitButton.addEventListener("click", () => {
    if (!sessionId || !canSubmit(state)) return;
    const sid = sessionId;
    setState({ asking: true, banner: null });
    void (async () => {
      try {
        const doc = await client.ask(sid, state.question.trim());
        showTrace(doc);
        setState({ asking: false });
      } catch (err) {
        if (err instanceof ConnectionLost) {
          // the turn may still be running server-side; poll the next turn
          setState({ banner: bannerFor(err) });
          const meta = { turns: 0 };
          try {
            Object.assign(meta, await client.session(sid));
          } catch {
            // keep polling from turn 1
          }
          poller?.stop();
          poller = new TracePoller(client, sid, meta.turns + 1, {
            onTrace: (doc) => {
              showTrace(doc);
              setState({ asking: false, banner: null });
            },
            onConnectionLoss: (lossErr) => setState({ banner: bannerFor(lossErr) }),
            onRecovered: () => setState({ banner: null }),
          });
          poller.start();
          return;
        }
        setState({ asking: false, banner: bannerFor(err) });
      }
    })();
  });

  setState({});
  void refreshContexts();
}

bootstrap();
