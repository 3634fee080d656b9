// HTML-string renderers. Kept DOM-free so the exact markup is unit-testable;
// main.ts assigns the output to container elements.

import type { TraceEvent, TraceMode } from "./types.js";
import type { StateCard, TurnTraces, ViewState } from "./state.js";
import { strategyProgress, visibleTraceEntries } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const EMOTION_GLYPHS: Record<string, string> = {
  joy: "😊",
  interest: "🤔",
  neutral: "😐",
  surprise: "😮",
  sadness: "😔",
  anger: "😠",
  fear: "😨",
  disgust: "😒",
};

export function renderTimeline(state: ViewState): string {
  const bubbles = state.timeline.map((message) => {
    const side = message.role === "user" ? "user" : "agent";
    const kind = message.role === "agent" ? ` bubble-${message.kind}` : "";
    const tag =
      message.role === "agent"
        ? `<span class="kind-tag">${message.kind}</span>`
        : "";
    return (
      `<div class="bubble bubble-${side}${kind}" data-message-id="${escapeHtml(message.id)}"` +
      ` data-turn="${message.turn_index}">${tag}` +
      `<p>${escapeHtml(message.text)}</p></div>`
    );
  });
  const pending = state.awaitingTurn ? '<div class="bubble bubble-pending">…</div>' : "";
  return bubbles.join("\n") + pending;
}

export function renderStateCard(card: StateCard): string {
  if (!card.self && !card.other) {
    return '<div class="state-card empty">no state yet</div>';
  }
  const rows: string[] = [];
  if (card.self) {
    const emotion = card.self.current_emotion;
    const glyph = EMOTION_GLYPHS[emotion.value] ?? "";
    rows.push(row("emotion", `${glyph} ${emotion.value}` +
      (emotion.nuance ? ` (${escapeHtml(emotion.nuance)})` : "")));
    rows.push(row("plan", card.self.plan));
    rows.push(row("topic of interest", escapeHtml(card.self.interesting_topic)));
  }
  if (card.other) {
    rows.push(row("meta-topic", escapeHtml(card.other.meta_topic)));
    rows.push(row("user emotion", card.other.user_emotion.value));
    const progress = strategyProgress(card);
    if (progress) rows.push(row("strategy step", escapeHtml(progress)));
  }
  return `<div class="state-card">${rows.join("")}</div>`;
}

function row(label: string, value: string): string {
  return `<div class="state-row"><span class="label">${label}</span>` +
    `<span class="value">${value}</span></div>`;
}

export function renderTracePanel(state: ViewState, mode: TraceMode): string {
  if (mode === "none") return "";
  const groups = state.traceByTurn.map((group) => renderTraceGroup(group, mode));
  return groups.join("\n");
}

function renderTraceGroup(group: TurnTraces, mode: TraceMode): string {
  const badge = group.degraded ? '<span class="badge badge-degraded">degraded</span>' : "";
  const entries = visibleTraceEntries(group, mode)
    .map((event) => renderTraceEntry(event))
    .join("");
  return (
    `<details class="trace-turn" data-turn="${group.turnIndex}" open>` +
    `<summary>turn ${group.turnIndex}${badge}</summary>` +
    `<ul>${entries}</ul></details>`
  );
}

// Dispatch-phase kinds arrive in any order, so entries are shown grouped per
// turn with wall offsets rather than as a strict sequence.
function renderTraceEntry(event: TraceEvent): string {
  const detail = traceDetail(event);
  return (
    `<li class="trace-entry trace-${event.kind}">` +
    `<span class="wall">+${event.wall_ms}ms</span>` +
    `<span class="kind">${event.kind}</span>` +
    (detail ? `<span class="detail">${detail}</span>` : "") +
    `</li>`
  );
}

function traceDetail(event: TraceEvent): string {
  const payload = event.payload;
  switch (event.kind) {
    case "loop_decision":
      return escapeHtml(
        `${payload["decision"]} after ${payload["emitted_analytical"]} analytical`);
    case "rethink_verdict": {
      const allCovered = payload["all_covered"];
      const missing = (payload["missing_summary"] as string) || "";
      return allCovered
        ? "all requirements covered"
        : `missing: ${escapeHtml(missing)}`;
    }
    case "other_state":
      return escapeHtml(
        `meta-topic ${(payload["state"] as { meta_topic?: string })?.meta_topic ?? ""}`);
    case "self_state_updated": {
      const s = payload["state"] as { plan?: string } | undefined;
      return escapeHtml(`plan ${s?.plan ?? ""}`);
    }
    case "memory_retrieved": {
      const hits = payload["hits"] as unknown[] | undefined;
      return `${hits?.length ?? 0} piece(s)`;
    }
    case "degraded":
      return escapeHtml(`stage ${payload["stage"] ?? "?"}`);
    default:
      return "";
  }
}

export function renderErrorBanner(state: ViewState): string {
  if (!state.error) return "";
  return (
    `<div class="error-banner">stream error: ${escapeHtml(state.error)} ` +
    `<button id="reconnect">reload transcript</button></div>`
  );
}
