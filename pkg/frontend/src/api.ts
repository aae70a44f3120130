/** Typed client for the session service's JSON endpoints. */

export interface ObservationPayload {
  channels: number;
  height: number;
  width: number;
  data: number[];
}

export interface BlindfoldConfig {
  kind: "none" | "fov" | "noise" | "region";
  radius?: number;
  max_level?: number;
  regions?: number[][];
}

export interface StartRequest {
  split: string;
  side?: "train" | "test";
  levels?: number;
  blindfold: BlindfoldConfig;
  participant: string;
}

export interface SessionStart {
  session_id: string;
  level_index: number;
  level_count: number;
  step: number;
  family: string;
  action_count: number;
  participant: string;
  observation: ObservationPayload;
}

export interface ActionResult {
  observation: ObservationPayload;
  reward: number;
  done: boolean;
  success: boolean;
  level_advanced: boolean;
  level_index: number;
  step: number;
  session_complete: boolean;
}

export interface Progress {
  session_id: string;
  participant: string;
  levels_done: number;
  level_index: number;
  level_count: number;
  steps_current: number;
  per_level_steps: number[];
  complete: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async call<T>(path: string, body?: unknown): Promise<T> {
    const init: RequestInit = body === undefined
      ? { method: "GET" }
      : {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      };
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    const payload = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ApiError(resp.status, payload.error ?? `HTTP ${resp.status}`);
    }
    return payload as T;
  }

  createSession(req: StartRequest): Promise<SessionStart> {
    return this.call<SessionStart>("/sessions", req);
  }

  sendAction(sessionId: string, action: number): Promise<ActionResult> {
    return this.call<ActionResult>(`/sessions/${sessionId}/action`, { action });
  }

  getState(sessionId: string): Promise<Progress> {
    return this.call<Progress>(`/sessions/${sessionId}/state`);
  }
}
