// Wire types mirroring the service's JSON contract.

export interface EventRecord {
  seq: number;
  ts: number;
  kind: string;
  session: string;
  round: number;
  payload: Record<string, any>;
}

export interface SessionSummary {
  id: string;
  status: string;
  rounds: RoundSummary[];
}

export interface RoundSummary {
  index: number;
  request: string;
  status: string;
  outcome: Record<string, any> | null;
}

export interface PlannedActionJson {
  operation: string;
  target: string | null;
  payload: Record<string, any>;
  rationale: string;
}

export function describeAction(action: PlannedActionJson | undefined): string {
  if (!action) return "(unknown action)";
  if (action.operation === "api_call") {
    return `api_call ${action.payload?.api ?? "?"}`;
  }
  let detail = "";
  if (action.operation === "type_text") detail = ` "${action.payload?.text ?? ""}"`;
  if (action.operation === "hotkey") detail = ` ${action.payload?.keys ?? ""}`;
  return `${action.operation} ${action.target ?? "?"}${detail}`;
}
