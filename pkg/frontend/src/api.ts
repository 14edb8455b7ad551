// Typed client for the judging service HTTP API. The UI consumes these
// endpoints exactly; it never computes metrics itself.

export interface NextItem {
  item_id: string;
  payload: string | number[];
  codec: string;
  answered: number;
  total: number;
}

export type Call = "original" | "generated";

export interface ResultRow {
  item_id: string;
  provenance: Call;
  fraction_original: number;
}

export interface SessionResult {
  session_id: string;
  delta: number;
  epsilon: number;
  pass: boolean;
  items: ResultRow[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let message = response.statusText;
  try {
    const doc = await response.json();
    if (doc && typeof doc.error === "string") message = doc.error;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, message);
}

export class JudgeApi {
  constructor(private base: string = "") {}

  /** Next unanswered item for this judge, or null when they are done. */
  async nextItem(sessionId: string, judgeId: string): Promise<NextItem | null> {
    const response = await fetch(
      `${this.base}/sessions/${encodeURIComponent(sessionId)}/next?judge=${encodeURIComponent(judgeId)}`,
    );
    if (response.status === 204) return null;
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as NextItem;
  }

  /** Idempotent on the server: repeats of the same triple are no-ops. */
  async submitVerdict(
    sessionId: string,
    judgeId: string,
    itemId: string,
    call: Call,
  ): Promise<boolean> {
    const response = await fetch(
      `${this.base}/sessions/${encodeURIComponent(sessionId)}/verdicts`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ judge_id: judgeId, item_id: itemId, call }),
      },
    );
    if (!response.ok) throw await parseError(response);
    const doc = await response.json();
    return Boolean(doc.accepted);
  }

  /** Revealed result once the session is closed; null while still open. */
  async result(sessionId: string): Promise<SessionResult | null> {
    const response = await fetch(
      `${this.base}/sessions/${encodeURIComponent(sessionId)}/result`,
    );
    if (response.status === 409) return null;
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as SessionResult;
  }
}
