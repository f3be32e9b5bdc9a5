// Gateway client: REST calls plus auto-reconnecting websockets.

import type { CheckpointsJson, SessionJson, StateJson } from "./types.js";

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let message = response.statusText;
    try {
      const body = await response.json();
      message = body.message ?? message;
    } catch {
      /* not json */
    }
    throw new Error(`${response.status}: ${message}`);
  }
  return response.json() as Promise<T>;
}

export class Gateway {
  constructor(public base: string = "") {}

  private wsUrl(path: string): string {
    if (this.base) {
      return this.base.replace(/^http/, "ws") + path;
    }
    const scheme = location.protocol === "https:" ? "wss:" : "ws:";
    return `${scheme}//${location.host}${path}`;
  }

  state(): Promise<StateJson> {
    return fetch(`${this.base}/api/state`).then((r) => asJson<StateJson>(r));
  }

  checkpoints(): Promise<CheckpointsJson> {
    return fetch(`${this.base}/api/checkpoints`).then((r) => asJson<CheckpointsJson>(r));
  }

  inject(hex: string): Promise<unknown> {
    return fetch(`${this.base}/api/simulate`, { method: "POST", body: hex }).then(
      (r) => asJson(r),
    );
  }

  createSession(at: number): Promise<SessionJson> {
    return fetch(`${this.base}/api/replay/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ at }),
    }).then((r) => asJson<SessionJson>(r));
  }

  deleteSession(id: string): Promise<void> {
    return fetch(`${this.base}/api/replay/${id}`, { method: "DELETE" }).then(() => undefined);
  }

  seek(id: string, at: number): Promise<{ cursor_t: number; clamped: boolean; state: StateJson }> {
    return fetch(`${this.base}/api/replay/${id}/seek`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ at }),
    }).then((r) => asJson(r));
  }

  step(id: string, dir: "forward" | "backward"): Promise<{ cursor_t: number; diff: unknown }> {
    return fetch(`${this.base}/api/replay/${id}/step`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ dir }),
    }).then((r) => asJson(r));
  }

  play(id: string, speed: number): Promise<unknown> {
    return fetch(`${this.base}/api/replay/${id}/play`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ speed }),
    }).then((r) => asJson(r));
  }

  pause(id: string): Promise<{ cursor_t: number }> {
    return fetch(`${this.base}/api/replay/${id}/pause`, { method: "POST" }).then(
      (r) => asJson(r),
    );
  }

  liveSocket(handlers: SocketHandlers): ReconnectingSocket {
    return new ReconnectingSocket(() => this.wsUrl("/ws/live"), handlers);
  }

  replaySocket(id: string, handlers: SocketHandlers): ReconnectingSocket {
    return new ReconnectingSocket(() => this.wsUrl(`/ws/replay/${id}`), handlers);
  }
}

export interface SocketHandlers {
  onEvent: (event: any) => void;
  onStatus?: (connected: boolean) => void;
}

export class ReconnectingSocket {
  private socket: WebSocket | null = null;
  private closed = false;
  private retryMs = 500;

  constructor(
    private url: () => string,
    private handlers: SocketHandlers,
  ) {
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    const ws = new WebSocket(this.url());
    this.socket = ws;
    ws.onopen = () => {
      this.retryMs = 500;
      this.handlers.onStatus?.(true);
    };
    ws.onmessage = (msg) => {
      try {
        this.handlers.onEvent(JSON.parse(msg.data));
      } catch {
        /* malformed frame: ignore */
      }
    };
    ws.onclose = () => {
      this.handlers.onStatus?.(false);
      if (!this.closed) {
        setTimeout(() => this.connect(), this.retryMs);
        this.retryMs = Math.min(this.retryMs * 2, 10_000);
      }
    };
    ws.onerror = () => ws.close();
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
