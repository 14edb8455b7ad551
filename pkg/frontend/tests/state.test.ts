import { describe, expect, it } from "vitest";

import type { NextItem, SessionResult } from "../src/api.js";
import { canSubmit, initialState, reduce } from "../src/state.js";

const item = (id: string, answered = 0, total = 10): NextItem => ({
  item_id: id,
  payload: "some text",
  codec: "utf8-text",
  answered,
  total,
});

const result: SessionResult = {
  session_id: "s1",
  delta: 0.25,
  epsilon: 0.5,
  pass: true,
  items: [{ item_id: "i0000", provenance: "original", fraction_original: 1 }],
};

describe("session state machine", () => {
  it("starts in joining and moves to judging on the first item", () => {
    let state = initialState("s1", "judy");
    expect(state.phase).toBe("joining");
    state = reduce(state, { kind: "item-loaded", item: item("i0000", 0, 10) });
    expect(state.phase).toBe("judging");
    expect(state.item?.item_id).toBe("i0000");
    expect(state.total).toBe(10);
  });

  it("tracks progress from server-reported counts", () => {
    let state = initialState("s1", "judy");
    state = reduce(state, { kind: "item-loaded", item: item("i0003", 3, 10) });
    expect(state.answered).toBe(3);
  });

  it("blocks submission while a call is in flight", () => {
    let state = initialState("s1", "judy");
    state = reduce(state, { kind: "item-loaded", item: item("i0000") });
    expect(canSubmit(state)).toBe(true);
    state = reduce(state, { kind: "submit-started" });
    expect(canSubmit(state)).toBe(false);
    state = reduce(state, { kind: "submit-acked" });
    expect(state.answered).toBe(1);
    // no item on screen until the next one loads
    expect(canSubmit(state)).toBe(false);
  });

  it("lands on done after the last item", () => {
    let state = initialState("s1", "judy");
    state = reduce(state, { kind: "item-loaded", item: item("i0009", 9, 10) });
    state = reduce(state, { kind: "submit-started" });
    state = reduce(state, { kind: "submit-acked" });
    state = reduce(state, { kind: "no-more-items" });
    expect(state.phase).toBe("done");
    expect(state.answered).toBe(10);
  });

  it("shows results only when a result document arrives", () => {
    let state = initialState("s1", "judy");
    state = reduce(state, { kind: "session-closed" });
    expect(state.phase).toBe("results");
    expect(state.result).toBeNull();
    state = reduce(state, { kind: "result-loaded", result });
    expect(state.result?.delta).toBe(0.25);
  });

  it("records failures without losing identity", () => {
    let state = initialState("s1", "judy");
    state = reduce(state, { kind: "failed", message: "boom" });
    expect(state.phase).toBe("error");
    expect(state.error).toBe("boom");
    expect(state.sessionId).toBe("s1");
  });

  it("keeps the item on screen when a submission fails", () => {
    let state = initialState("s1", "judy");
    state = reduce(state, { kind: "item-loaded", item: item("i0002", 2, 10) });
    state = reduce(state, { kind: "submit-started" });
    state = reduce(state, { kind: "submit-failed", message: "network down" });
    expect(state.phase).toBe("judging");
    expect(state.item?.item_id).toBe("i0002");
    expect(state.error).toBe("network down");
    expect(canSubmit(state)).toBe(true); // retry affordance
  });
});
