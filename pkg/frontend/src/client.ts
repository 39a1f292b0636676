/**
 * Service client: HTTP controls/interventions plus the streaming socket
 * with exponential-backoff reconnects and per-submission idempotency keys.
 */

import { Intervention, InterventionAck, StreamMessage, parseStreamMessage,
         validateIntervention } from "./protocol.js";

export const BACKOFF_BASE_MS = 250;
export const BACKOFF_CAP_MS = 8000;

export function backoffDelay(attempt: number): number {
  return Math.min(BACKOFF_CAP_MS, BACKOFF_BASE_MS * 2 ** attempt);
}

let keyCounter = 0;

/** One key per form submission; retries of the same submission reuse it. */
export function freshIdempotencyKey(): string {
  keyCounter += 1;
  return `console-${Date.now().toString(36)}-${keyCounter}`;
}

export interface StreamHandlers {
  onMessage: (msg: StreamMessage, isFirstOfConnection: boolean) => void;
  onState: (state: "connecting" | "open" | "closed") => void;
}

interface WebSocketLike {
  // `any` params keep the real WebSocket and the test fakes structurally
  // compatible under strictFunctionTypes
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  close(): void;
}

export type WebSocketFactory = (url: string) => WebSocketLike;
export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ status: number; json(): Promise<unknown> }>;

export class SessionClient {
  private socket: WebSocketLike | null = null;
  private attempt = 0;
  private closedByUser = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly httpBase: string,
    private readonly wsBase: string,
    private readonly makeSocket: WebSocketFactory,
    private readonly fetchImpl: FetchLike,
  ) {}

  connect(sessionId: string, handlers: StreamHandlers): void {
    this.closedByUser = false;
    const dial = () => {
      if (this.closedByUser) return;
      handlers.onState("connecting");
      const socket = this.makeSocket(`${this.wsBase}/session/${sessionId}/stream`);
      this.socket = socket;
      let first = true;
      socket.onopen = () => {
        this.attempt = 0;
        handlers.onState("open");
      };
      socket.onmessage = (ev) => {
        const msg = parseStreamMessage(JSON.parse(ev.data));
        if (msg !== null) {
          handlers.onMessage(msg, first);
          first = false;
        }
      };
      socket.onclose = () => {
        handlers.onState("closed");
        if (this.closedByUser) return;
        const delay = backoffDelay(this.attempt);
        this.attempt += 1;
        this.timer = setTimeout(dial, delay);
      };
    };
    dial();
  }

  disconnect(): void {
    this.closedByUser = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
  }

  private async post(path: string, body: unknown): Promise<InterventionAck> {
    const response = await this.fetchImpl(`${this.httpBase}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return (await response.json()) as InterventionAck;
  }

  async createSession(config: Record<string, unknown>, seed?: number) {
    return this.post("/session", seed === undefined ? { config } : { config, seed });
  }

  async control(sessionId: string, action: string, n?: number) {
    return this.post(`/session/${sessionId}/control`,
                     n === undefined ? { action } : { action, n });
  }

  /**
   * Client-side range mirror first, then POST with an idempotency key so a
   * retry (or an over-eager double click) lands exactly once.
   */
  async intervene(
    sessionId: string,
    intervention: Intervention,
    idempotencyKey: string = freshIdempotencyKey(),
  ): Promise<InterventionAck> {
    const problem = validateIntervention(intervention);
    if (problem !== null) {
      return { v: 1, ok: false, error: problem };
    }
    return this.post(`/session/${sessionId}/intervene`, {
      ...intervention,
      idempotency_key: idempotencyKey,
    });
  }

  async snapshot(sessionId: string) {
    const response = await this.fetchImpl(`${this.httpBase}/session/${sessionId}/snapshot`);
    return response.json();
  }
}
