// Typed client over the service's HTTP endpoints. Every failure becomes a
// ServiceError carrying the server's error envelope when one was sent;
// transport-level failures become ConnectionLost so the UI can show the
// retry banner.

import type { ErrorBody, SessionMeta, TraceDocument } from "./types.js";

export class ServiceError extends Error {
  readonly status: number;
  readonly body: ErrorBody;

  constructor(status: number, body: ErrorBody) {
    super(body.message || `request failed with ${status}`);
    this.status = status;
    this.body = body;
  }

  get answerInProgress(): boolean {
    return this.status === 409;
  }
}

export class ConnectionLost extends Error {
  readonly reason: unknown;

  constructor(reason: unknown) {
    super("service unreachable");
    this.reason = reason;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function errorBody(res: Response): Promise<ErrorBody> {
  try {
    const body = (await res.json()) as Partial<ErrorBody>;
    return {
      error_code: body.error_code ?? "unknown",
      message: body.message ?? `status ${res.status}`,
      details: body.details ?? {},
    };
  } catch {
    return { error_code: "unknown", message: `status ${res.status}`, details: {} };
  }
}

export class ServiceClient {
  readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ConnectionLost(err);
    }
    if (!res.ok) {
      throw new ServiceError(res.status, await errorBody(res));
    }
    return (await res.json()) as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  healthz(): Promise<{ status: string }> {
    return this.request("/healthz");
  }

  listContexts(): Promise<{ contexts: string[] }> {
    return this.request("/contexts");
  }

  createSession(contextId: string): Promise<{ session_id: string; context_id: string }> {
    return this.post("/sessions", { context_id: contextId });
  }

  session(sessionId: string): Promise<SessionMeta> {
    return this.request(`/sessions/${sessionId}`);
  }

  ask(sessionId: string, question: string): Promise<TraceDocument> {
    return this.post(`/sessions/${sessionId}/ask`, { question });
  }

  trace(sessionId: string, turn: number): Promise<TraceDocument> {
    return this.request(`/sessions/${sessionId}/trace/${turn}`);
  }
}
