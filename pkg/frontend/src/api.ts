import type {
  ApiErrorBody,
  ExampleJson,
  Head,
  ModelInfoJson,
  OracleJson,
  SessionJson,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly expected: string[] = [],
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string = "",
    fetchFn?: FetchLike,
  ) {
    // bind lazily so a test can stub globalThis.fetch after construction
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, "network", `cannot reach the service: ${String(err)}`);
    }
    const text = await res.text();
    let body: unknown = null;
    if (text) {
      try {
        body = JSON.parse(text);
      } catch {
        body = null; // non-JSON error page; fall through to status text
      }
    }
    if (!res.ok) {
      const e = (body ?? {}) as Partial<ApiErrorBody>;
      throw new ApiError(
        res.status,
        e.code ?? "error",
        e.message ?? `${res.status} ${res.statusText}`,
        e.expected ?? [],
      );
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown, idempotencyKey?: string): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (idempotencyKey) headers["Idempotency-Key"] = idempotencyKey;
    return this.request<T>(path, {
      method: "POST",
      headers,
      body: JSON.stringify(payload),
    });
  }

  createSession(
    protocol: string,
    exampleId?: string | null,
    models?: Record<string, string>,
    idempotencyKey?: string,
  ): Promise<SessionJson> {
    return this.post(
      "/v1/sessions",
      { protocol, example_id: exampleId ?? null, models: models ?? null },
      idempotencyKey,
    );
  }

  getSession(sessionId: string): Promise<SessionJson> {
    return this.request(`/v1/sessions/${sessionId}`);
  }

  sendAdvice(
    sessionId: string,
    head: Head,
    text: string,
    idempotencyKey?: string,
  ): Promise<SessionJson> {
    return this.post(`/v1/sessions/${sessionId}/advice`, { head, text }, idempotencyKey);
  }

  retry(sessionId: string, head?: Head, idempotencyKey?: string): Promise<SessionJson> {
    return this.post(`/v1/sessions/${sessionId}/retry`, head ? { head } : {}, idempotencyKey);
  }

  accept(sessionId: string, idempotencyKey?: string): Promise<SessionJson> {
    return this.post(`/v1/sessions/${sessionId}/accept`, {}, idempotencyKey);
  }

  oracle(sessionId: string): Promise<OracleJson> {
    return this.request(`/v1/sessions/${sessionId}/oracle`);
  }

  listModels(): Promise<{ models: ModelInfoJson[] }> {
    return this.request("/v1/models");
  }

  getExample(exampleId: string): Promise<{ example: ExampleJson; split: string | null }> {
    return this.request(`/v1/examples/${exampleId}`);
  }
}
