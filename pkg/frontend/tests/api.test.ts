import { describe, expect, it } from "vitest";

import { ConnectionLost, ServiceClient, ServiceError } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function clientWith(handler: (url: string, init?: RequestInit) => Promise<Response>) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const client = new ServiceClient("http://stub:1234/", async (url, init) => {
    calls.push({ url, init });
    return handler(url, init);
  });
  return { client, calls };
}

describe("ServiceClient", () => {
  it("strips trailing slashes from the base URL", async () => {
    const { client, calls } = clientWith(async () => jsonResponse(200, { status: "ok" }));
    await client.healthz();
    expect(calls[0].url).toBe("http://stub:1234/healthz");
  });

  it("posts the ask body and returns the trace document", async () => {
    const { client, calls } = clientWith(async () =>
      jsonResponse(200, { turn: 1, answer: "yes", steps: [] }));
    const doc = await client.ask("s_1", "why?");
    expect(doc.answer).toBe("yes");
    expect(calls[0].url).toBe("http://stub:1234/sessions/s_1/ask");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ question: "why?" });
    expect(calls[0].init?.method).toBe("POST");
  });

  it("maps 409 to a ServiceError flagged answerInProgress", async () => {
    const { client } = clientWith(async () =>
      jsonResponse(409, { error_code: "ask_in_progress",
                          message: "an answer is already in progress for this session",
                          details: {} }));
    const err = await client.ask("s_1", "q").catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(409);
    expect(err.answerInProgress).toBe(true);
    expect(err.body.error_code).toBe("ask_in_progress");
  });

  it("keeps the server error envelope on 400s", async () => {
    const { client } = clientWith(async () =>
      jsonResponse(400, { error_code: "validation_error", message: "bad graph",
                          details: { violations: [] } }));
    const err = await client.createSession("ctx_x").catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.body.error_code).toBe("validation_error");
    expect(err.message).toBe("bad graph");
  });

  it("tolerates non-JSON error bodies", async () => {
    const { client } = clientWith(async () => new Response("boom", { status: 500 }));
    const err = await client.healthz().catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.body.error_code).toBe("unknown");
  });

  it("wraps transport failures in ConnectionLost", async () => {
    const { client } = clientWith(async () => {
      throw new TypeError("fetch failed");
    });
    const err = await client.listContexts().catch((e) => e);
    expect(err).toBeInstanceOf(ConnectionLost);
  });

  it("fetches session meta and traces by turn", async () => {
    const { client, calls } = clientWith(async (url) => {
      if (url.endsWith("/sessions/s_9")) {
        return jsonResponse(200, { session_id: "s_9", context_id: "c", turns: 2 });
      }
      return jsonResponse(200, { turn: 2 });
    });
    const meta = await client.session("s_9");
    expect(meta.turns).toBe(2);
    const doc = await client.trace("s_9", 2);
    expect(doc.turn).toBe(2);
    expect(calls[1].url).toBe("http://stub:1234/sessions/s_9/trace/2");
  });
});
