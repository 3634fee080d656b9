// Round-trip against a local scripted server that speaks the service's wire
// format, replaying the recorded fixture stream frame by frame.

import assert from "node:assert/strict";
import { createServer, type Server } from "node:http";
import { after, before, test } from "node:test";

import { streamTurn } from "../src/sse.js";
import { applyEvent, initialState } from "../src/state.js";
import type { ApiEvent } from "../src/types.js";
import { fixtureStream, fixtureText } from "./fixtures.js";

let server: Server;
let baseUrl: string;

before(async () => {
  server = createServer((req, res) => {
    const url = req.url ?? "";
    if (req.method === "POST" && url.startsWith("/v1/sessions/fix01/messages")) {
      res.writeHead(200, { "content-type": "text/event-stream" });
      // Dribble the recorded frames to exercise incremental parsing.
      const frames = fixtureStream().split("\n\n").filter((f) => f.trim());
      let i = 0;
      const tick = setInterval(() => {
        const frame = frames[i++];
        if (frame === undefined) {
          clearInterval(tick);
          res.end();
          return;
        }
        res.write(frame + "\n\n");
      }, 5);
    } else if (req.method === "GET" && url.startsWith("/v1/sessions/fix01/transcript")) {
      res.writeHead(200, { "content-type": "application/jsonl" });
      res.end(fixtureText("transcript.jsonl"));
    } else if (req.method === "GET" && url.startsWith("/v1/sessions")) {
      res.writeHead(200, { "content-type": "application/json" });
      res.end(JSON.stringify([JSON.parse(fixtureText("session.json"))]));
    } else if (req.method === "POST" && url === "/v1/sessions") {
      res.writeHead(201, { "content-type": "application/json" });
      res.end(fixtureText("session.json"));
    } else {
      res.writeHead(404);
      res.end("{}");
    }
  });
  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const address = server.address();
  assert.ok(address && typeof address === "object");
  baseUrl = `http://127.0.0.1:${address.port}`;
});

after(() => {
  server.close();
});

test("sending a message round-trips the full turn within 2 s", async () => {
  const state = initialState("fix01");
  const received: ApiEvent[] = [];
  const started = Date.now();
  let done = false;
  await streamTurn(baseUrl, "fix01", "tell me about the night sky", "full", {
    onEvent: (event) => {
      received.push(event);
      applyEvent(state, event);
    },
    onDone: () => {
      done = true;
    },
    onError: (message) => assert.fail(`stream error: ${message}`),
  });
  const elapsed = Date.now() - started;
  assert.ok(done, "stream completed");
  assert.ok(elapsed < 2000, `round trip took ${elapsed}ms`);
  assert.equal(state.timeline.length, 3);
  assert.equal(received.at(-1)?.event, "turn_end");
  assert.equal(state.awaitingTurn, false);
});

test("http error responses surface through onError", async () => {
  let message = "";
  await streamTurn(baseUrl, "ghost", "hi", "none", {
    onEvent: () => assert.fail("no events expected"),
    onDone: () => assert.fail("must not complete"),
    onError: (m) => {
      message = m;
    },
  });
  assert.ok(message.length > 0);
});
