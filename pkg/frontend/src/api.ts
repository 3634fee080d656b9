// Thin client over the session service's REST endpoints.

import type { Message, Session } from "./types.js";

export async function listSessions(baseUrl: string): Promise<Session[]> {
  const response = await fetch(`${baseUrl}/v1/sessions`);
  if (!response.ok) throw new Error(`list sessions failed: HTTP ${response.status}`);
  return (await response.json()) as Session[];
}

export async function createSession(
  baseUrl: string,
  personaId: string,
): Promise<Session> {
  const response = await fetch(`${baseUrl}/v1/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ persona_id: personaId }),
  });
  if (!response.ok) throw new Error(`create session failed: HTTP ${response.status}`);
  return (await response.json()) as Session;
}

/** Fetch the persisted transcript (one Message JSON object per line). */
export async function fetchTranscript(
  baseUrl: string,
  sessionId: string,
): Promise<Message[]> {
  const response = await fetch(
    `${baseUrl}/v1/sessions/${encodeURIComponent(sessionId)}/transcript?format=jsonl`,
  );
  if (!response.ok) throw new Error(`transcript failed: HTTP ${response.status}`);
  const text = await response.text();
  return text
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line) as Message);
}
