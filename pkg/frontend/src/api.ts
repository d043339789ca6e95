/** Typed fetch client for the teaching service. Every displayed label and
 * OCD value in the UI comes from a response returned by this client; the
 * client keeps a log of request/response pairs so tests can verify that. */

import type {
  ClassifyResponse, CorrectResponse, CreateSessionResponse, EventsResponse,
  ServiceErrorBody, SessionConfig, StateResponse, TeachResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface RecordedCall {
  method: string;
  path: string;
  response: unknown;
}

export class ApiClient {
  /** Chronological log of every successful call, for replay-style checks. */
  readonly recorded: RecordedCall[] = [];

  constructor(private readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await fetch(this.baseUrl + path, init);
    if (!resp.ok) {
      let parsed: ServiceErrorBody | null = null;
      try {
        parsed = (await resp.json()) as ServiceErrorBody;
      } catch {
        // non-JSON error body
      }
      throw new ApiError(resp.status, parsed?.code ?? "http_error",
        parsed?.message ?? `${method} ${path} failed with ${resp.status}`);
    }
    const data = (await resp.json()) as T;
    this.recorded.push({ method, path, response: data });
    return data;
  }

  createSession(config: SessionConfig = {}): Promise<CreateSessionResponse> {
    return this.request("POST", "/sessions", { config });
  }

  teach(sessionId: string, name: string,
        clouds: { filename: string; content_b64: string }[]): Promise<TeachResponse> {
    return this.request("POST", `/sessions/${sessionId}/teach`, { name, clouds });
  }

  classify(sessionId: string, filename: string,
           contentB64: string): Promise<ClassifyResponse> {
    return this.request("POST", `/sessions/${sessionId}/classify`,
      { filename, content_b64: contentB64 });
  }

  correct(sessionId: string, objectRef: string, name: string): Promise<CorrectResponse> {
    return this.request("POST", `/sessions/${sessionId}/correct`,
      { object_ref: objectRef, name });
  }

  refreshTopics(sessionId: string, sweeps?: number): Promise<{ ok: boolean }> {
    const suffix = sweeps === undefined ? "" : `?sweeps=${sweeps}`;
    return this.request("POST",
      `/sessions/${sessionId}/maintenance/refresh-topics${suffix}`);
  }

  rebuildDictionary(sessionId: string): Promise<{ ok: boolean }> {
    return this.request("POST",
      `/sessions/${sessionId}/maintenance/rebuild-dictionary`);
  }

  getState(sessionId: string): Promise<StateResponse> {
    return this.request("GET", `/sessions/${sessionId}/state`);
  }

  getEvents(sessionId: string): Promise<EventsResponse> {
    return this.request("GET", `/sessions/${sessionId}/events`);
  }

  exportSession(sessionId: string): Promise<{ config: SessionConfig; events: object[] }> {
    return this.request("GET", `/sessions/${sessionId}/export`);
  }

  importSession(payload: { config: SessionConfig; events: object[] }): Promise<{
    session_id: string;
    replayed: { seq: number; label: string; original_label: string; matches: boolean }[];
  }> {
    return this.request("POST", "/sessions/import", payload);
  }
}

/** Encode raw cloud bytes for the JSON upload endpoints. */
export function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}
