// Replay transport: a scrubber spanning the store's time range with
// checkpoint tick marks, play/pause/step buttons and a speed selector.
// Every action is a gateway call; the view renders whatever comes back.

import type { Gateway, ReconnectingSocket } from "./api.js";
import type { ViewModel } from "./model.js";
import type { ReplayEvent } from "./types.js";

export interface TransportElements {
  scrubber: HTMLInputElement;
  ticks: HTMLElement;
  playPause: HTMLButtonElement;
  stepBack: HTMLButtonElement;
  stepForward: HTMLButtonElement;
  speed: HTMLSelectElement;
  cursor: HTMLElement;
}

export class ReplayTransport {
  sessionId: string | null = null;
  playing = false;
  onDiff: ((diff: import("./types.js").DiffJson) => void) | null = null;
  onFullState: ((cursorT: number) => void) | null = null;
  private socket: ReconnectingSocket | null = null;
  private range: { from: number; to: number } | null = null;

  constructor(
    private gateway: Gateway,
    private model: ViewModel,
    private el: TransportElements,
  ) {
    el.scrubber.addEventListener("change", () => {
      void this.seek(Number(el.scrubber.value));
    });
    el.playPause.addEventListener("click", () => void this.togglePlay());
    el.stepBack.addEventListener("click", () => void this.step("backward"));
    el.stepForward.addEventListener("click", () => void this.step("forward"));
    el.speed.addEventListener("change", () => {
      if (this.playing) void this.play();
    });
  }

  async open(): Promise<void> {
    const checkpoints = await this.gateway.checkpoints();
    this.range = checkpoints.range;
    if (!this.range) {
      this.el.cursor.textContent = "store is empty";
      return;
    }
    this.el.scrubber.min = String(this.range.from);
    this.el.scrubber.max = String(this.range.to);
    this.el.ticks.innerHTML = "";
    for (const cp of checkpoints.checkpoints) {
      const tick = document.createElement("option");
      tick.value = String(cp.t);
      tick.label = `checkpoint ${cp.t}`;
      this.el.ticks.appendChild(tick);
    }
    const session = await this.gateway.createSession(this.range.to);
    this.sessionId = session.id;
    this.model.cursorT = session.cursor_t;
    this.model.applyState(session.state);
    this.setCursor(session.cursor_t);
    this.socket = this.gateway.replaySocket(session.id, {
      onEvent: (event: ReplayEvent) => this.onEvent(event),
    });
  }

  async close(): Promise<void> {
    this.socket?.close();
    this.socket = null;
    if (this.sessionId) {
      await this.gateway.deleteSession(this.sessionId).catch(() => undefined);
      this.sessionId = null;
    }
    this.playing = false;
  }

  private onEvent(event: ReplayEvent): void {
    if (event.type === "diff") {
      this.model.applyDiff(event.diff);
      this.setCursor(event.diff.t);
      this.onDiff?.(event.diff);
    } else if (event.type === "full_state") {
      this.model.applyState(event.state);
      this.setCursor(event.cursor_t);
      this.onFullState?.(event.cursor_t);
    } else if (event.type === "end") {
      this.playing = false;
      this.el.playPause.textContent = "▶";
    }
  }

  private setCursor(t: number): void {
    this.model.cursorT = t;
    this.el.scrubber.value = String(t);
    this.el.cursor.textContent = new Date(t).toISOString();
  }

  async seek(at: number): Promise<void> {
    if (!this.sessionId) return;
    const result = await this.gateway.seek(this.sessionId, at);
    // the full_state also arrives via the websocket; applying the HTTP
    // response too keeps the view correct when the socket is down
    this.model.applyState(result.state);
    this.setCursor(result.cursor_t);
  }

  async step(dir: "forward" | "backward"): Promise<void> {
    if (!this.sessionId) return;
    const result = await this.gateway.step(this.sessionId, dir);
    this.setCursor(result.cursor_t);
  }

  async togglePlay(): Promise<void> {
    if (!this.sessionId) return;
    if (this.playing) {
      await this.gateway.pause(this.sessionId);
      this.playing = false;
      this.el.playPause.textContent = "▶";
    } else {
      await this.play();
    }
  }

  private async play(): Promise<void> {
    if (!this.sessionId) return;
    await this.gateway.play(this.sessionId, Number(this.el.speed.value));
    this.playing = true;
    this.el.playPause.textContent = "⏸";
  }
}
