// Thin typed client over the service HTTP contract. The console holds no
// authoritative state; everything it shows is derived from these calls.

import type { EventRecord, SessionSummary } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let code = `HTTP${res.status}`;
  let message = res.statusText;
  try {
    const body = await res.json();
    if (body && typeof body === "object") {
      code = body.error ?? code;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(res.status, code, message);
}

export class ServiceClient {
  constructor(private base: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(`${this.base}${path}`, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  createSession(): Promise<{ session_id: string }> {
    return this.request("/sessions", { method: "POST" });
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.request("/sessions");
  }

  getSession(id: string): Promise<SessionSummary> {
    return this.request(`/sessions/${id}`);
  }

  startRound(id: string, request: string): Promise<{ round_index: number }> {
    return this.request(`/sessions/${id}/rounds`, {
      method: "POST",
      body: JSON.stringify({ request }),
    });
  }

  fetchEvents(id: string, since: number, waitMs = 0): Promise<EventRecord[]> {
    return this.request(`/sessions/${id}/events?since=${since}&wait_ms=${waitMs}`);
  }

  confirm(id: string, decision: "approve" | "deny"): Promise<{ status: string }> {
    return this.request(`/sessions/${id}/confirm`, {
      method: "POST",
      body: JSON.stringify({ decision }),
    });
  }

  reply(id: string, text: string): Promise<{ status: string }> {
    return this.request(`/sessions/${id}/confirm`, {
      method: "POST",
      body: JSON.stringify({ reply: text }),
    });
  }

  cancel(id: string): Promise<{ status: string }> {
    return this.request(`/sessions/${id}/cancel`, { method: "POST" });
  }

  async fetchLog(id: string): Promise<string> {
    const res = await fetch(`${this.base}/sessions/${id}/log`);
    if (!res.ok) throw await parseError(res);
    return res.text();
  }
}
