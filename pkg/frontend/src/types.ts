// Wire types mirroring the service's published contracts
// (schemas/self_state.v1, schemas/other_state.v1, transcript and trace lines).

export type Role = "user" | "agent";
export type MessageKind = "quick" | "analytical" | "plain";

export interface Message {
  id: string;
  session_id: string;
  turn_index: number;
  role: Role;
  kind: MessageKind;
  text: string;
  created_at: string;
}

export interface EmotionLabel {
  value:
    | "joy"
    | "interest"
    | "neutral"
    | "surprise"
    | "sadness"
    | "anger"
    | "fear"
    | "disgust";
  nuance: string;
}

export interface TaskStrategy {
  goal: string;
  steps: string[];
  current_step_index: number;
  next_action: string;
}

export interface SelfState {
  satisfaction: number;
  opinion: string;
  interesting_topic: string;
  plan: "explore_further" | "switch_topic" | "conclude";
  current_emotion: EmotionLabel;
  next_emotion: EmotionLabel;
  tone_style: string;
  updated_at_turn: number;
}

export interface OtherState {
  meta_topic: string;
  user_satisfaction: number;
  candidate_topics: string[];
  task_oriented: boolean;
  strategy: TaskStrategy | null;
  user_emotion: EmotionLabel;
  natural_response_emotion: EmotionLabel;
  updated_at_turn: number;
}

export type TraceKind =
  | "turn_started"
  | "memory_retrieved"
  | "knowledge_brief"
  | "other_state"
  | "quick_emitted"
  | "analytical_emitted"
  | "rethink_verdict"
  | "loop_decision"
  | "turn_concluded"
  | "self_state_updated"
  | "memory_extracted"
  | "degraded";

export interface TraceEvent {
  seq: number;
  turn_index: number;
  kind: TraceKind;
  payload: Record<string, unknown>;
  wall_ms: number;
}

export interface Session {
  id: string;
  persona_id: string;
  created_at: string;
  status: "active" | "concluded";
  self_state?: SelfState | null;
  other_state?: OtherState | null;
}

export interface TurnEndSummary {
  turn_index: number | null;
  message_count: number;
  message_ids: string[];
  concluded_session: boolean;
  final_seq: number | null;
}

export type ApiEvent =
  | { event: "message"; data: Message }
  | { event: "trace"; data: TraceEvent }
  | { event: "turn_end"; data: TurnEndSummary }
  | { event: "error"; data: { error: string; detail?: string } };

export type TraceMode = "none" | "summary" | "full";
