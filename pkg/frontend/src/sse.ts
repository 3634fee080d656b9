// Server-sent-events over fetch. The turn stream answers a POST, which
// EventSource cannot issue, so frames are read from the response body:
// "event: <name>\ndata: <one-line JSON>\n\n".

import type { ApiEvent } from "./types.js";

export interface SseFrame {
  event: string;
  data: unknown;
}

/** Incremental SSE frame parser; feed it chunks, it yields complete frames. */
export class SseParser {
  private buffer = "";

  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let boundary: number;
    while ((boundary = this.buffer.indexOf("\n\n")) !== -1) {
      const raw = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      const frame = parseFrame(raw);
      if (frame) frames.push(frame);
    }
    return frames;
  }
}

function parseFrame(raw: string): SseFrame | null {
  let event = "message";
  let data = "";
  for (const line of raw.split("\n")) {
    if (line.startsWith("event: ")) event = line.slice("event: ".length);
    else if (line.startsWith("data: ")) data = line.slice("data: ".length);
  }
  if (!data) return null;
  return { event, data: JSON.parse(data) };
}

/** Parse a fully buffered SSE body (used for fixture replay). */
export function parseSseText(text: string): ApiEvent[] {
  const parser = new SseParser();
  return parser.push(text).map((f) => ({ event: f.event, data: f.data }) as ApiEvent);
}

export interface StreamHandlers {
  onEvent: (event: ApiEvent) => void;
  onDone: () => void;
  onError: (message: string) => void;
}

/**
 * POST a user message and consume the turn's event stream.
 * Resolves once the stream closes; handlers fire as frames arrive.
 */
export async function streamTurn(
  baseUrl: string,
  sessionId: string,
  text: string,
  trace: string,
  handlers: StreamHandlers,
): Promise<void> {
  let response: Response;
  try {
    response = await fetch(
      `${baseUrl}/v1/sessions/${encodeURIComponent(sessionId)}/messages?trace=${trace}`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ text }),
      },
    );
  } catch (err) {
    handlers.onError(`connection failed: ${String(err)}`);
    return;
  }
  if (!response.ok || !response.body) {
    let detail = `HTTP ${response.status}`;
    try {
      const body = (await response.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      // non-JSON error body; keep the status line
    }
    handlers.onError(detail);
    return;
  }
  const reader = response.body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
        handlers.onEvent({ event: frame.event, data: frame.data } as ApiEvent);
      }
    }
  } catch (err) {
    handlers.onError(`stream interrupted: ${String(err)}`);
    return;
  }
  handlers.onDone();
}
