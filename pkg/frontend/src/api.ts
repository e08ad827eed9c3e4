import type {
  AnswerRequest,
  CommitResult,
  ServiceError,
  SessionView,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly kind: string;

  constructor(status: number, payload: ServiceError) {
    super(payload.detail);
    this.status = status;
    this.kind = payload.error;
  }
}

// Thin typed client over the service endpoints; every method returns the
// server payload untouched.
export class DialogApi {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(base: string, fetchImpl?: FetchLike) {
    this.base = base.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.base + path, init);
    const payload = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, payload as ServiceError);
    }
    return payload as T;
  }

  uploadAxis(text: string): Promise<{ axis: string; version: number }> {
    return this.request("POST", "/axes", { text });
  }

  uploadDConcepts(name: string, text: string): Promise<{ name: string }> {
    return this.request("POST", "/dconcepts", { name, text });
  }

  listAxes(): Promise<{ axes: { axis: string; version: number; title: string }[] }> {
    return this.request("GET", "/axes");
  }

  startSession(axis: string): Promise<SessionView> {
    return this.request("POST", "/sessions", { axis });
  }

  getQuestion(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${sessionId}/question`);
  }

  answer(sessionId: string, body: AnswerRequest): Promise<SessionView> {
    return this.request("POST", `/sessions/${sessionId}/answer`, body);
  }

  back(sessionId: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${sessionId}/back`);
  }

  commit(
    sessionId: string,
    options: { episode_id?: string; ts?: string; subject?: string },
    infer: boolean,
  ): Promise<CommitResult> {
    const query = infer ? "?infer=true" : "";
    return this.request("POST", `/sessions/${sessionId}/commit${query}`, options);
  }
}
