// Browser bootstrap: session picker, live chat, trace inspector.

import { createSession, fetchTranscript, listSessions } from "./api.js";
import { renderErrorBanner, renderStateCard, renderTimeline, renderTracePanel } from "./render.js";
import { applyEvent, beginTurn, initialState, rebuildFromTranscript, ViewState } from "./state.js";
import { streamTurn } from "./sse.js";
import type { Message, TraceMode } from "./types.js";

const baseUrl =
  new URLSearchParams(location.search).get("api") ?? "http://127.0.0.1:8080";

const el = {
  sessions: document.getElementById("sessions") as HTMLSelectElement,
  newSession: document.getElementById("new-session") as HTMLButtonElement,
  personaId: document.getElementById("persona-id") as HTMLInputElement,
  timeline: document.getElementById("timeline") as HTMLDivElement,
  card: document.getElementById("state-card") as HTMLDivElement,
  tracePanel: document.getElementById("trace-panel") as HTMLDivElement,
  traceMode: document.getElementById("trace-mode") as HTMLSelectElement,
  input: document.getElementById("input") as HTMLInputElement,
  send: document.getElementById("send") as HTMLButtonElement,
  banner: document.getElementById("banner") as HTMLDivElement,
};

let state: ViewState = initialState("");

function redraw(): void {
  el.timeline.innerHTML = renderTimeline(state);
  el.card.innerHTML = renderStateCard(state.card);
  el.tracePanel.innerHTML = renderTracePanel(state, traceMode());
  el.banner.innerHTML = renderErrorBanner(state);
  const locked = state.awaitingTurn || state.concluded || !state.sessionId;
  el.input.disabled = locked;
  el.send.disabled = locked;
  el.input.placeholder = state.concluded
    ? "session concluded (read-only)"
    : "say something…";
  el.timeline.scrollTop = el.timeline.scrollHeight;
  const reconnect = document.getElementById("reconnect");
  if (reconnect) reconnect.addEventListener("click", () => void openSession(state.sessionId));
}

function traceMode(): TraceMode {
  return (el.traceMode.value as TraceMode) ?? "summary";
}

async function refreshSessions(): Promise<void> {
  const sessions = await listSessions(baseUrl);
  el.sessions.innerHTML = sessions
    .map((s) => `<option value="${s.id}">${s.id} (${s.status})</option>`)
    .join("");
  if (state.sessionId) el.sessions.value = state.sessionId;
}

async function openSession(sessionId: string): Promise<void> {
  state = initialState(sessionId);
  const messages = await fetchTranscript(baseUrl, sessionId);
  rebuildFromTranscript(state, messages);
  const sessions = await listSessions(baseUrl);
  state.concluded = sessions.find((s) => s.id === sessionId)?.status === "concluded";
  redraw();
}

async function send(): Promise<void> {
  const text = el.input.value.trim();
  if (!text || state.awaitingTurn) return;
  el.input.value = "";
  const userMessage: Message = {
    // Local echo; the server's copy lands in the persisted transcript.
    id: `local-${Date.now()}`,
    session_id: state.sessionId,
    turn_index: state.lastTurnEnd ? (state.lastTurnEnd.turn_index ?? -1) + 1 : 0,
    role: "user",
    kind: "plain",
    text,
    created_at: new Date().toISOString(),
  };
  beginTurn(state, userMessage);
  redraw();
  await streamTurn(baseUrl, state.sessionId, text, traceMode(), {
    onEvent: (event) => {
      applyEvent(state, event);
      redraw();
    },
    onDone: () => {
      state.awaitingTurn = false;
      redraw();
    },
    onError: (message) => {
      state.error = message;
      state.awaitingTurn = false;
      redraw();
    },
  });
}

el.send.addEventListener("click", () => void send());
el.input.addEventListener("keydown", (event) => {
  if (event.key === "Enter") void send();
});
el.sessions.addEventListener("change", () => void openSession(el.sessions.value));
el.traceMode.addEventListener("change", redraw);
el.newSession.addEventListener("click", () => {
  void (async () => {
    const persona = el.personaId.value.trim() || "mira";
    const session = await createSession(baseUrl, persona);
    await refreshSessions();
    await openSession(session.id);
  })();
});

void refreshSessions().catch((err) => {
  state.error = `service unreachable at ${baseUrl}: ${String(err)}`;
  redraw();
});
redraw();
