/**
 * Immutable console view model.
 *
 * A single reducer consumes stream messages and local connection/ack events;
 * the UI renders from the latest model only. The rendered step never
 * decreases: stale or duplicate messages are dropped. Index values are
 * stored exactly as received (the wire is the single source of numeric
 * truth).
 */

import { IndicesMessage, StreamMessage } from "./protocol.js";

export interface SeriesPoint {
  step: number;
  rho: number;
  iH: number;
  iP: number;
  iS: number;
  iwRunning: number;
}

export interface FeedEvent {
  effectiveStep: number;
  kind: string;
  summary: string;
}

export type ConnectionState = "idle" | "connecting" | "open" | "closed";

export interface ViewModel {
  connection: ConnectionState;
  sessionId: string | null;
  mode: string;
  step: number;
  stopReason: string | null;
  series: SeriesPoint[];
  phase: Array<[number, number]>; // (i_p, i_h) trace in arrival order
  hist: number[];
  rewiresTotal: number;
  events: FeedEvent[];
  banner: string | null;
}

export const MAX_SERIES_POINTS = 5000;

export function initialModel(): ViewModel {
  return {
    connection: "idle",
    sessionId: null,
    mode: "paused",
    step: -1,
    stopReason: null,
    series: [],
    phase: [],
    hist: [],
    rewiresTotal: 0,
    events: [],
    banner: null,
  };
}

export function controlsEnabled(vm: ViewModel): boolean {
  return vm.connection === "open" && vm.mode !== "finished";
}

function pushPoint(vm: ViewModel, msg: IndicesMessage): ViewModel {
  const point: SeriesPoint = {
    step: msg.step,
    rho: msg.rho,
    iH: msg.i_h,
    iP: msg.i_p,
    iS: msg.i_s,
    iwRunning: msg.i_w_running,
  };
  const series = [...vm.series, point].slice(-MAX_SERIES_POINTS);
  const phase: Array<[number, number]> = [...vm.phase, [msg.i_p, msg.i_h]];
  return {
    ...vm,
    mode: msg.mode,
    step: msg.step,
    series,
    phase,
    hist: msg.opinion_hist,
    rewiresTotal: vm.rewiresTotal + msg.rewires_delta,
  };
}

export function applyStreamMessage(vm: ViewModel, msg: StreamMessage): ViewModel {
  if (msg.type === "error") {
    return { ...vm, banner: msg.error };
  }
  if (msg.type === "finished") {
    if (msg.step < vm.step) return vm;
    return { ...vm, mode: "finished", step: msg.step, stopReason: msg.stop_reason };
  }
  // indices: never render backwards
  if (msg.step <= vm.step) {
    return vm;
  }
  return pushPoint(vm, msg);
}

/** First message after (re)connect replaces history up to that step. */
export function applySnapshotMessage(vm: ViewModel, msg: StreamMessage): ViewModel {
  if (msg.type !== "indices") {
    return applyStreamMessage(vm, msg);
  }
  if (msg.step <= vm.step) {
    return vm; // an older snapshot cannot roll the console back
  }
  return pushPoint(vm, msg);
}

export function applyConnection(vm: ViewModel, state: ConnectionState): ViewModel {
  const banner =
    state === "open"
      ? null
      : state === "connecting"
        ? "connecting..."
        : state === "closed"
          ? "connection lost; retrying"
          : vm.banner;
  return { ...vm, connection: state, banner };
}

export function applyAck(vm: ViewModel, kind: string, summary: string,
                         effectiveStep: number): ViewModel {
  // feed order == service log order: acks append in arrival order
  const events = [...vm.events, { effectiveStep, kind, summary }];
  return { ...vm, events };
}
