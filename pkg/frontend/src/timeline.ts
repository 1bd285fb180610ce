// Pure timeline state derived from the event stream. The reducer is the
// console's only state: rebuilding from events?since=0 after a page
// refresh must reproduce the identical timeline, so nothing in here may
// depend on when events arrived.

import { describeAction, type EventRecord } from "./types.js";

export interface TimelineItem {
  seq: number;
  round: number;
  cls: "state" | "action" | "meta" | "alert" | "verdict";
  label: string;
}

export interface RoundView {
  index: number;
  request: string;
  status: "running" | "finished" | "failed";
  verdict: string | null;
  failReason: string;
}

export interface PendingInfo {
  kind: "safeguard" | "clarification";
  round: number;
  seq: number;
  summary: string;
  actions: string[];
}

export interface TimelineState {
  lastSeq: number;
  items: TimelineItem[];
  rounds: RoundView[];
  pending: PendingInfo | null;
  sessionStatus: string;
}

export function emptyTimeline(): TimelineState {
  return { lastSeq: 0, items: [], rounds: [], pending: null, sessionStatus: "open" };
}

export function canCompose(state: TimelineState): boolean {
  if (state.sessionStatus !== "open") return false;
  return state.rounds.every((round) => round.status !== "running");
}

function roundView(state: TimelineState, index: number): RoundView | undefined {
  return state.rounds.find((round) => round.index === index);
}

export function applyEvents(state: TimelineState, events: EventRecord[]): TimelineState {
  const next: TimelineState = {
    lastSeq: state.lastSeq,
    items: [...state.items],
    rounds: state.rounds.map((round) => ({ ...round })),
    pending: state.pending ? { ...state.pending, actions: [...state.pending.actions] } : null,
    sessionStatus: state.sessionStatus,
  };

  for (const event of events) {
    if (event.seq <= next.lastSeq) continue;
    next.lastSeq = event.seq;
    const p = event.payload ?? {};
    const push = (cls: TimelineItem["cls"], label: string) =>
      next.items.push({ seq: event.seq, round: event.round, cls, label });

    switch (event.kind) {
      case "session_started":
        push("meta", `session started (catalog ${String(p.catalog_digest ?? "").slice(0, 10)})`);
        break;
      case "round_started":
        next.rounds.push({
          index: event.round,
          request: p.request ?? "",
          status: "running",
          verdict: null,
          failReason: "",
        });
        push("meta", `round ${event.round}: ${p.request ?? ""}`);
        break;
      case "host_output": {
        const subtasks = p.output?.subtask_plan?.subtasks ?? [];
        for (const [i, s] of subtasks.entries()) {
          push("meta", `plan[${i}] ${s.description} on ${s.target_app}`);
        }
        break;
      }
      case "host_transition":
        push("state", `host: ${p.from} -> ${p.to} (${p.event})`);
        break;
      case "app_transition":
        push("state", `${p.agent}: ${p.from} -> ${p.to} (${p.event})`);
        break;
      case "app_launched":
        push("meta", `launched ${p.app_id}`);
        break;
      case "subtask_started":
        push("meta", `subtask ${p.index}: ${p.description}`);
        break;
      case "subtask_finished":
        push("meta", `subtask ${p.index} ${String(p.state ?? "").toLowerCase()}`);
        break;
      case "observation":
        push(
          "meta",
          `observed ${p.control_count} controls (vision ${p.fusion?.vis_count ?? 0}, ` +
            `discarded ${p.fusion?.discarded_count ?? 0})`,
        );
        break;
      case "app_output": {
        const output = p.output ?? {};
        if (output.rationale) push("meta", `rationale: ${output.rationale}`);
        for (const action of output.batch?.actions ?? []) {
          push("meta", `planned: ${describeAction(action)}`);
        }
        break;
      }
      case "validation":
        if (!p.ok) push("alert", `validation failed: ${p.reason}`);
        break;
      case "action_outcome": {
        const outcome = p.outcome ?? {};
        const marker = outcome.fell_back ? " (gui fallback)" : "";
        const cls = outcome.status === "error" ? "alert" : "action";
        push(cls, `${describeAction(outcome.action)} -> ${outcome.status}${marker}`);
        break;
      }
      case "executor_action":
        if (p.via === "gui_fallback") {
          push("action", `fallback step: ${describeAction(p.action)}`);
        }
        break;
      case "action_aborted":
        push("alert", `aborted: ${describeAction(p.action)} (${p.reason})`);
        break;
      case "batch_report":
        if (p.halted_early) {
          push("alert", `batch ${p.executed_count}/${p.k} halted (${p.halt_reason}) -> replan`);
        } else {
          push("meta", `batch ${p.executed_count}/${p.k} completed`);
        }
        break;
      case "confirmation_requested":
        next.pending = {
          kind: "safeguard",
          round: event.round,
          seq: event.seq,
          summary: p.summary ?? "risky action pending",
          actions: (p.actions ?? []).map(describeAction),
        };
        push("alert", `awaiting approval: ${p.summary ?? ""}`);
        break;
      case "user_prompt":
        next.pending = {
          kind: "clarification",
          round: event.round,
          seq: event.seq,
          summary: p.prompt ?? "clarification needed",
          actions: [],
        };
        push("alert", `needs clarification: ${p.prompt ?? ""}`);
        break;
      case "confirmation": {
        next.pending = null;
        const word = p.reply ? `replied "${p.reply}"` : p.approve ? "approved" : "denied";
        push("state", `confirmation: ${word}${p.auto ? " (auto)" : ""}`);
        break;
      }
      case "blackboard_append": {
        const entry = p.entry ?? {};
        push("meta", `blackboard #${entry.seq} ${entry.kind} by ${entry.author}`);
        break;
      }
      case "evaluation": {
        push("verdict", `verdict: ${p.verdict}`);
        for (const criterion of p.criteria ?? []) {
          push("meta", `criterion: ${criterion.description} -> ${criterion.score}`);
        }
        const round = roundView(next, event.round);
        if (round) round.verdict = p.verdict ?? null;
        break;
      }
      case "round_finished": {
        const round = roundView(next, event.round);
        if (round) {
          round.status = p.status === "finished" ? "finished" : "failed";
          round.failReason = p.fail_reason ?? "";
          if (round.verdict === null && p.verdict !== undefined) round.verdict = p.verdict;
        }
        if (next.pending && next.pending.round === event.round) next.pending = null;
        const counts = p.counts ?? {};
        push(
          "state",
          `round ${event.round} ${p.status}` +
            (p.fail_reason ? ` (${p.fail_reason})` : "") +
            ` - ${counts.planner_calls_total ?? 0} planner calls, ` +
            `${counts.executor_actions ?? 0} executor actions`,
        );
        break;
      }
      case "session_finished":
        next.sessionStatus = p.status ?? "finished";
        push("meta", `session ${next.sessionStatus}`);
        break;
      default:
        push("meta", `${event.kind}`);
    }
  }
  return next;
}
