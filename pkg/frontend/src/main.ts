// Browser bootstrap: ?session=<id>&judge=<name> selects the session.

import { JudgeApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const sessionId = params.get("session") ?? "";
const judgeId = params.get("judge") ?? "";
const root = document.getElementById("app");

if (root instanceof HTMLElement) {
  if (!sessionId || !judgeId) {
    root.textContent = "Missing ?session=<id>&judge=<name> in the URL.";
  } else {
    const app = new JudgeApp({ root, sessionId, judgeId });
    void app.start();
  }
}
