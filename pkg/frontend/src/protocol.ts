/**
 * Wire-protocol types and the client-side validation mirror.
 *
 * The console performs no simulation math: every number it renders arrived
 * on the wire. Validation here only mirrors the service's accepted ranges
 * (plus the explored repost range) so obviously-bad interventions are
 * rejected before a network round trip; the service remains authoritative.
 */

export const PROTOCOL_VERSION = 1;

export interface IndicesMessage {
  v: number;
  type: "indices";
  step: number;
  mode: string;
  rho: number;
  i_h: number;
  i_p: number;
  i_s: number;
  i_w_running: number;
  opinion_hist: number[];
  rewires_delta: number;
}

export interface FinishedMessage {
  v: number;
  type: "finished";
  step: number;
  stop_reason: string;
}

export interface ErrorMessage {
  v: number;
  type: "error";
  error: string;
}

export type StreamMessage = IndicesMessage | FinishedMessage | ErrorMessage;

export interface InterventionAck {
  v: number;
  ok: boolean;
  effective_step?: number;
  kind?: string;
  payload?: Record<string, unknown>;
  error?: string;
}

export type StrategyTag = "random" | "structure" | "opinion";

export interface StrategyIntervention {
  kind: "set_strategy";
  strategy: StrategyTag;
  k_h: number;
}

export interface ParamIntervention {
  kind: "set_param";
  name: "p" | "q" | "alpha";
  value: number;
}

export type Intervention = StrategyIntervention | ParamIntervention;

/** Slider/form limits. p is capped at the explored repost range. */
export const PARAM_RANGES: Record<"p" | "q" | "alpha", [number, number]> = {
  p: [0, 0.5],
  q: [0, 1],
  alpha: [0, 1],
};

export const STRATEGIES: readonly StrategyTag[] = ["random", "structure", "opinion"];

export function validateIntervention(iv: Intervention): string | null {
  if (iv.kind === "set_strategy") {
    if (!STRATEGIES.includes(iv.strategy)) {
      return `unknown strategy ${String(iv.strategy)}`;
    }
    if (!Number.isInteger(iv.k_h) || iv.k_h < 0) {
      return "k_h must be a non-negative integer";
    }
    return null;
  }
  if (iv.kind === "set_param") {
    const range = PARAM_RANGES[iv.name];
    if (!range) {
      return `unknown parameter ${String(iv.name)}`;
    }
    if (!Number.isFinite(iv.value) || iv.value < range[0] || iv.value > range[1]) {
      return `${iv.name} must be in [${range[0]}, ${range[1]}]`;
    }
    return null;
  }
  return "unknown intervention kind";
}

export function parseStreamMessage(raw: unknown): StreamMessage | null {
  if (typeof raw !== "object" || raw === null) return null;
  const msg = raw as Record<string, unknown>;
  if (msg.v !== PROTOCOL_VERSION) return null;
  if (msg.type === "indices" && typeof msg.step === "number") {
    return msg as unknown as IndicesMessage;
  }
  if (msg.type === "finished" && typeof msg.step === "number") {
    return msg as unknown as FinishedMessage;
  }
  if (msg.type === "error") {
    return msg as unknown as ErrorMessage;
  }
  return null;
}
