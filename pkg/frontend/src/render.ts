// DOM rendering. Every number shown comes verbatim from an API document
// (String(value)); provenance is rendered only in the results phase.

import type { NextItem } from "./api.js";
import type { UiSessionState } from "./state.js";

export interface Handlers {
  onCall: (call: "original" | "generated") => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderPayload(item: NextItem): HTMLElement {
  if (item.codec === "symbol-sequence" && Array.isArray(item.payload)) {
    const box = el("div", "chips");
    for (const symbol of item.payload) {
      box.appendChild(el("span", "chip", String(symbol)));
    }
    return box;
  }
  const pre = el("pre", "payload-text");
  pre.textContent = String(item.payload);
  return pre;
}

function renderJudging(state: UiSessionState, handlers: Handlers): HTMLElement {
  const view = el("div", "judging");
  const progress = el("div", "progress");
  const bar = el("div", "progress-bar");
  const total = state.total || 1;
  bar.style.width = `${(state.answered / total) * 100}%`;
  progress.appendChild(bar);
  view.appendChild(progress);
  view.appendChild(
    el("p", "progress-text", `${state.answered} of ${state.total} answered`),
  );

  if (state.item) {
    view.appendChild(renderPayload(state.item));
    if (state.error) {
      view.appendChild(el("p", "retry-note", `${state.error} — try again`));
    }
    const controls = el("div", "controls");
    for (const call of ["original", "generated"] as const) {
      const button = el("button", `call call-${call}`);
      button.textContent = call === "original" ? "Original" : "Generated";
      button.dataset.call = call;
      button.disabled = state.pending;
      button.onclick = () => handlers.onCall(call);
      controls.appendChild(button);
    }
    view.appendChild(controls);
  }
  return view;
}

function renderResults(state: UiSessionState): HTMLElement {
  const view = el("div", "results");
  const result = state.result;
  if (!result) {
    view.appendChild(el("p", "waiting", "Waiting for the session to close…"));
    return view;
  }
  const verdict = result.pass ? "pass" : "fail";
  const banner = el("div", `banner banner-${verdict}`);
  banner.appendChild(el("span", "delta-value", String(result.delta)));
  banner.appendChild(
    el("span", "verdict-text", ` — ${verdict} at ε=${String(result.epsilon)}`),
  );
  view.appendChild(banner);

  const table = el("table", "reveal");
  const head = el("tr");
  for (const title of ["item", "provenance", "fraction called original"]) {
    head.appendChild(el("th", undefined, title));
  }
  table.appendChild(head);
  for (const row of result.items) {
    const tr = el("tr");
    tr.appendChild(el("td", undefined, row.item_id));
    tr.appendChild(el("td", `prov prov-${row.provenance}`, row.provenance));
    tr.appendChild(el("td", undefined, String(row.fraction_original)));
    table.appendChild(tr);
  }
  view.appendChild(table);
  return view;
}

export function render(root: HTMLElement, state: UiSessionState, handlers: Handlers): void {
  root.textContent = "";
  const header = el("header");
  header.appendChild(el("h1", undefined, "Judging session"));
  header.appendChild(el("p", "session-line", `session ${state.sessionId} · judge ${state.judgeId}`));
  root.appendChild(header);

  switch (state.phase) {
    case "joining":
      root.appendChild(el("p", "joining", "Joining…"));
      break;
    case "judging":
      root.appendChild(renderJudging(state, handlers));
      break;
    case "done":
      root.appendChild(
        el("p", "done", "All items answered. Results appear when the session closes."),
      );
      root.appendChild(renderResults(state));
      break;
    case "results":
      root.appendChild(renderResults(state));
      break;
    case "error":
      root.appendChild(el("div", "banner banner-error", state.error ?? "Something went wrong"));
      break;
  }
}
