import { describe, expect, it } from "vitest";

import {
  parseStreamMessage,
  validateIntervention,
} from "../src/protocol.js";

describe("validation mirror", () => {
  it("accepts in-range parameter changes", () => {
    expect(validateIntervention({ kind: "set_param", name: "p", value: 0.3 })).toBeNull();
    expect(validateIntervention({ kind: "set_param", name: "q", value: 1.0 })).toBeNull();
    expect(validateIntervention({ kind: "set_param", name: "alpha", value: 0 })).toBeNull();
  });

  it("rejects p beyond the explored range before any network call", () => {
    const problem = validateIntervention({ kind: "set_param", name: "p", value: 0.6 });
    expect(problem).toMatch(/p must be in \[0, 0.5\]/);
  });

  it("rejects out-of-range and non-finite values", () => {
    expect(validateIntervention({ kind: "set_param", name: "q", value: -0.1 })).not.toBeNull();
    expect(validateIntervention({ kind: "set_param", name: "alpha", value: 1.5 })).not.toBeNull();
    expect(validateIntervention({ kind: "set_param", name: "alpha", value: NaN })).not.toBeNull();
  });

  it("validates strategy switches", () => {
    expect(validateIntervention({ kind: "set_strategy", strategy: "structure", k_h: 0 })).toBeNull();
    expect(validateIntervention({ kind: "set_strategy", strategy: "opinion", k_h: 2 })).toBeNull();
    expect(
      validateIntervention({ kind: "set_strategy", strategy: "viral" as never, k_h: 0 }),
    ).not.toBeNull();
    expect(
      validateIntervention({ kind: "set_strategy", strategy: "opinion", k_h: -1 }),
    ).not.toBeNull();
  });
});

describe("stream message parsing", () => {
  const indices = {
    v: 1, type: "indices", step: 3, mode: "paused", rho: 0.5, i_h: 0.1,
    i_p: 0.2, i_s: 0.3, i_w_running: 0.01, opinion_hist: [1, 2], rewires_delta: 0,
  };

  it("passes well-formed messages through", () => {
    expect(parseStreamMessage(indices)).toEqual(indices);
    expect(parseStreamMessage({ v: 1, type: "finished", step: 9, stop_reason: "converged" }))
      .not.toBeNull();
    expect(parseStreamMessage({ v: 1, type: "error", error: "nope" })).not.toBeNull();
  });

  it("drops unknown versions and malformed payloads", () => {
    expect(parseStreamMessage({ ...indices, v: 2 })).toBeNull();
    expect(parseStreamMessage({ v: 1, type: "indices" })).toBeNull();
    expect(parseStreamMessage(null)).toBeNull();
    expect(parseStreamMessage("indices")).toBeNull();
  });
});
