// View state and its reducer. The stream is authoritative: the timeline
// appends messages exactly in server event order and never reorders them;
// a refresh rebuilds the same timeline from the persisted transcript.

import type {
  ApiEvent,
  Message,
  OtherState,
  SelfState,
  TraceEvent,
  TraceMode,
  TurnEndSummary,
} from "./types.js";

export interface TurnTraces {
  turnIndex: number;
  events: TraceEvent[];
  degraded: boolean;
}

export interface StateCard {
  self: SelfState | null;
  other: OtherState | null;
}

export interface ViewState {
  sessionId: string;
  timeline: Message[];
  traceByTurn: TurnTraces[];
  card: StateCard;
  awaitingTurn: boolean;
  concluded: boolean;
  error: string | null;
  lastTurnEnd: TurnEndSummary | null;
}

export function initialState(sessionId: string): ViewState {
  return {
    sessionId,
    timeline: [],
    traceByTurn: [],
    card: { self: null, other: null },
    awaitingTurn: false,
    concluded: false,
    error: null,
    lastTurnEnd: null,
  };
}

export function beginTurn(state: ViewState, userMessage: Message): void {
  state.timeline.push(userMessage);
  state.awaitingTurn = true;
  state.error = null;
}

/** Fold one stream event into the view state. */
export function applyEvent(state: ViewState, event: ApiEvent): void {
  switch (event.event) {
    case "message":
      state.timeline.push(event.data);
      break;
    case "trace":
      applyTrace(state, event.data);
      break;
    case "turn_end":
      state.lastTurnEnd = event.data;
      state.awaitingTurn = false;
      if (event.data.concluded_session) state.concluded = true;
      break;
    case "error":
      state.error = event.data.detail ?? event.data.error;
      state.awaitingTurn = false;
      if (event.data.error === "session_concluded") state.concluded = true;
      break;
  }
}

function applyTrace(state: ViewState, trace: TraceEvent): void {
  let group = state.traceByTurn.find((g) => g.turnIndex === trace.turn_index);
  if (!group) {
    group = { turnIndex: trace.turn_index, events: [], degraded: false };
    state.traceByTurn.push(group);
  }
  group.events.push(trace);
  if (trace.kind === "degraded") group.degraded = true;
  if (trace.kind === "self_state_updated") {
    state.card.self = trace.payload["state"] as SelfState;
  }
  if (trace.kind === "other_state") {
    state.card.other = trace.payload["state"] as OtherState;
  }
}

/** Rebuild the timeline from the persisted transcript (refresh path). */
export function rebuildFromTranscript(state: ViewState, messages: Message[]): void {
  state.timeline = [...messages];
  state.awaitingTurn = false;
}

/** Trace entries the panel shows for a turn under the given mode. */
export function visibleTraceEntries(group: TurnTraces, mode: TraceMode): TraceEvent[] {
  if (mode === "none") return [];
  if (mode === "summary") {
    return group.events.filter((e) => e.kind === "loop_decision");
  }
  return group.events;
}

/** The strategy step line for the card, when the conversation is task-oriented. */
export function strategyProgress(card: StateCard): string | null {
  const strategy = card.other?.strategy ?? null;
  if (!strategy || strategy.steps.length === 0) return null;
  const step = strategy.steps[strategy.current_step_index] ?? strategy.steps[0];
  return `${strategy.current_step_index + 1}/${strategy.steps.length}: ${step}`;
}
