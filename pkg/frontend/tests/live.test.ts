// End-to-end run against a live service, enabled with VSM_LIVE=1:
//
//   vsm serve --store /tmp/ui-store --port 8000 \
//       --backend scripted --script fixtures/fig2_script.json
//   VSM_LIVE=1 npm run test:live
//
// Uploads the bundled fixture pair, opens a session, asks the question, and
// checks the rendered card breakdown.

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { cardCounts, toCards } from "../src/trace.js";

const BASE_URL = process.env.VSM_SERVICE_URL ?? "http://127.0.0.1:8000";
const live = process.env.VSM_LIVE === "1" ? describe : describe.skip;

function fixture(path: string): unknown {
  return JSON.parse(readFileSync(new URL(`../../fixtures/${path}`, import.meta.url), "utf-8"));
}

live("against a live service", () => {
  it("renders the fixture session as 4 call, 4 return, and 1 answer card", async () => {
    const client = new ServiceClient(BASE_URL);
    expect((await client.healthz()).status).toBe("ok");

    const upload = await fetch(`${BASE_URL}/contexts`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        vsm: fixture("supermarket.json"),
        simulation: fixture("contexts/supermarket/simulation.json"),
      }),
    });
    expect(upload.status).toBe(201);
    const { context_id } = (await upload.json()) as { context_id: string };

    const contexts = await client.listContexts();
    expect(contexts.contexts).toContain(context_id);

    const session = await client.createSession(context_id);
    const doc = await client.ask(session.session_id, "Are any supermarkets under supplied?");
    expect(doc.answer).toContain("minimum of 3 parts");

    const cards = toCards(doc);
    expect(cardCounts(cards)).toEqual({ call: 4, return: 4, answer: 1 });

    // the trace endpoint serves the same document the ask returned
    const replay = await client.trace(session.session_id, doc.turn);
    expect(replay).toEqual(doc);
  }, 30000);
});
