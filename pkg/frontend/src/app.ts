// Wiring: drives the state machine against the API and re-renders on
// every transition. Exported separately from the bootstrap so tests can
// run a full session against a real service.

import { ApiError, JudgeApi } from "./api.js";
import type { Call } from "./api.js";
import { canSubmit, initialState, reduce } from "./state.js";
import type { UiEvent, UiSessionState } from "./state.js";
import { render } from "./render.js";

export interface AppOptions {
  root: HTMLElement;
  sessionId: string;
  judgeId: string;
  base?: string;
  resultPollMs?: number;
}

export class JudgeApp {
  private api: JudgeApi;
  state: UiSessionState;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(private options: AppOptions) {
    this.api = new JudgeApi(options.base ?? "");
    this.state = initialState(options.sessionId, options.judgeId);
    this.draw();
  }

  private dispatch(event: UiEvent): void {
    this.state = reduce(this.state, event);
    this.draw();
  }

  private draw(): void {
    render(this.options.root, this.state, { onCall: (call) => void this.submit(call) });
  }

  /** Join the session: fetch the first item or land on done/results. */
  async start(): Promise<void> {
    await this.advance();
  }

  private async advance(): Promise<void> {
    try {
      const item = await this.api.nextItem(this.state.sessionId, this.state.judgeId);
      if (item === null) {
        this.dispatch({ kind: "no-more-items" });
        await this.checkResult();
      } else {
        this.dispatch({ kind: "item-loaded", item });
      }
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.dispatch({ kind: "session-closed" });
        await this.checkResult();
      } else if (error instanceof ApiError && error.status === 404) {
        this.dispatch({ kind: "failed", message: `No such session: ${this.state.sessionId}` });
      } else {
        this.dispatch({ kind: "failed", message: String(error) });
      }
    }
  }

  /** Send one call; the button disables until the server acknowledges. */
  async submit(call: Call): Promise<void> {
    if (!canSubmit(this.state)) return;
    const item = this.state.item!;
    this.dispatch({ kind: "submit-started" });
    try {
      await this.api.submitVerdict(this.state.sessionId, this.state.judgeId, item.item_id, call);
      this.dispatch({ kind: "submit-acked" });
      await this.advance();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.dispatch({ kind: "session-closed" });
        await this.checkResult();
      } else {
        this.dispatch({ kind: "submit-failed", message: String(error) });
      }
    }
  }

  /** Poll for the revealed result until the session closes. */
  async checkResult(): Promise<void> {
    try {
      const result = await this.api.result(this.state.sessionId);
      if (result === null) {
        this.dispatch({ kind: "result-pending" });
        this.pollTimer = setTimeout(
          () => void this.checkResult(),
          this.options.resultPollMs ?? 1500,
        );
      } else {
        this.dispatch({ kind: "result-loaded", result });
      }
    } catch (error) {
      this.dispatch({ kind: "failed", message: String(error) });
    }
  }

  stop(): void {
    if (this.pollTimer !== null) clearTimeout(this.pollTimer);
  }
}
