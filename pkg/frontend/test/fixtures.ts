import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import path from "node:path";

import type { Message } from "../src/types.js";

// Compiled tests live in dist/test/, fixtures stay in test/fixtures/.
const here = path.dirname(fileURLToPath(import.meta.url));
const fixturesDir = path.resolve(here, "..", "..", "test", "fixtures");

export function fixtureText(name: string): string {
  return readFileSync(path.join(fixturesDir, name), "utf-8");
}

export function fixtureStream(): string {
  return fixtureText("turn-stream.sse");
}

export function fixtureTranscript(): Message[] {
  return fixtureText("transcript.jsonl")
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line) as Message);
}
