// Session state as a pure reducer so transitions are testable without a
// DOM or a server. The state mirrors server truth; nothing here invents
// numbers, and provenance only exists once a result document arrives.

import type { NextItem, SessionResult } from "./api.js";

export type Phase = "joining" | "judging" | "done" | "results" | "error";

export interface UiSessionState {
  sessionId: string;
  judgeId: string;
  phase: Phase;
  item: NextItem | null;
  answered: number;
  total: number;
  // a submission is in flight; the call buttons must stay disabled
  pending: boolean;
  result: SessionResult | null;
  error: string | null;
}

export type UiEvent =
  | { kind: "item-loaded"; item: NextItem }
  | { kind: "no-more-items" }
  | { kind: "submit-started" }
  | { kind: "submit-acked" }
  | { kind: "submit-failed"; message: string }
  | { kind: "session-closed" }
  | { kind: "result-loaded"; result: SessionResult }
  | { kind: "result-pending" }
  | { kind: "failed"; message: string };

export function initialState(sessionId: string, judgeId: string): UiSessionState {
  return {
    sessionId,
    judgeId,
    phase: "joining",
    item: null,
    answered: 0,
    total: 0,
    pending: false,
    result: null,
    error: null,
  };
}

export function reduce(state: UiSessionState, event: UiEvent): UiSessionState {
  switch (event.kind) {
    case "item-loaded":
      return {
        ...state,
        phase: "judging",
        item: event.item,
        answered: event.item.answered,
        total: event.item.total,
        pending: false,
        error: null,
      };
    case "no-more-items":
      return { ...state, phase: "done", item: null, pending: false };
    case "submit-started":
      return { ...state, pending: true };
    case "submit-acked":
      return { ...state, pending: false, answered: state.answered + 1, item: null };
    case "submit-failed":
      // keep the item on screen so the judge can retry
      return { ...state, pending: false, error: event.message };
    case "session-closed":
      // judging ended under us; move on to watching for the reveal
      return { ...state, phase: "results", item: null, pending: false };
    case "result-loaded":
      return { ...state, phase: "results", result: event.result, pending: false };
    case "result-pending":
      return { ...state, phase: state.phase === "joining" ? "done" : state.phase };
    case "failed":
      return { ...state, phase: "error", error: event.message, pending: false };
  }
}

/** A call may be sent only while an item is shown and nothing is in flight. */
export function canSubmit(state: UiSessionState): boolean {
  return state.phase === "judging" && state.item !== null && !state.pending;
}
