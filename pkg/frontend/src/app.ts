// DOM wiring for the session console. All rendering is a projection of
// the timeline reducer state; the page can be refreshed at any point and
// rebuilt from events?since=0.

import { ApiError, ServiceClient } from "./api.js";
import { EventPoller } from "./poller.js";
import { applyEvents, canCompose, emptyTimeline, type TimelineState } from "./timeline.js";

const base = (window as any).AGENTOS_BASE_URL ?? "";
const client = new ServiceClient(base);

let currentSession: string | null = null;
let timeline: TimelineState = emptyTimeline();
let poller: EventPoller | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string): void {
  const banner = document.createElement("div");
  banner.className = "toast";
  banner.textContent = message;
  el("toasts").appendChild(banner);
  setTimeout(() => banner.remove(), 5000);
}

function reportError(error: unknown): void {
  if (error instanceof ApiError) {
    toast(`${error.status} ${error.code}: ${error.message}`);
  } else {
    toast(String(error));
  }
}

async function refreshSessions(): Promise<void> {
  try {
    const sessions = await client.listSessions();
    const list = el<HTMLUListElement>("sessions");
    list.innerHTML = "";
    for (const session of sessions) {
      const row = document.createElement("li");
      const rounds = session.rounds.length;
      row.textContent = `${session.id} [${session.status}] ${rounds} round(s)`;
      row.onclick = () => void openSession(session.id);
      if (session.id === currentSession) row.classList.add("selected");
      list.appendChild(row);
    }
  } catch (error) {
    reportError(error);
  }
}

function renderTimeline(): void {
  const list = el<HTMLOListElement>("timeline");
  list.innerHTML = "";
  for (const item of timeline.items) {
    const row = document.createElement("li");
    row.className = `item ${item.cls}`;
    row.textContent = item.label;
    list.appendChild(row);
  }
  list.scrollTop = list.scrollHeight;

  const rounds = el<HTMLUListElement>("rounds");
  rounds.innerHTML = "";
  for (const round of timeline.rounds) {
    const row = document.createElement("li");
    const verdict = round.verdict ? ` verdict=${round.verdict}` : "";
    row.textContent = `#${round.index} ${round.request} [${round.status}]${verdict}`;
    rounds.appendChild(row);
  }

  el<HTMLButtonElement>("submit-round").disabled =
    currentSession === null || !canCompose(timeline);
  renderModal();
}

function renderModal(): void {
  const modal = el<HTMLDivElement>("modal");
  if (!timeline.pending) {
    modal.classList.add("hidden");
    return;
  }
  modal.classList.remove("hidden");
  el("modal-title").textContent =
    timeline.pending.kind === "safeguard" ? "Approval required" : "Clarification needed";
  el("modal-summary").textContent = timeline.pending.summary;
  const actions = el<HTMLUListElement>("modal-actions");
  actions.innerHTML = "";
  for (const label of timeline.pending.actions) {
    const row = document.createElement("li");
    row.textContent = label;
    actions.appendChild(row);
  }
  const isClarification = timeline.pending.kind === "clarification";
  el<HTMLInputElement>("modal-reply").classList.toggle("hidden", !isClarification);
  el<HTMLButtonElement>("modal-deny").classList.toggle("hidden", isClarification);
  el<HTMLButtonElement>("modal-approve").textContent = isClarification ? "Send" : "Approve";
}

async function openSession(id: string): Promise<void> {
  poller?.stop();
  currentSession = id;
  timeline = emptyTimeline();
  renderTimeline();
  el("session-title").textContent = `Session ${id}`;
  poller = new EventPoller(
    client,
    id,
    (events) => {
      timeline = applyEvents(timeline, events);
      renderTimeline();
    },
    reportError,
  );
  poller.start();
  await refreshSessions();
}

async function showTrace(): Promise<void> {
  if (!currentSession) return;
  try {
    const markdown = await client.fetchLog(currentSession);
    el<HTMLPreElement>("trace").textContent = markdown;
    el("trace-panel").classList.remove("hidden");
  } catch (error) {
    reportError(error);
  }
}

function wire(): void {
  el<HTMLButtonElement>("new-session").onclick = async () => {
    try {
      const created = await client.createSession();
      await openSession(created.session_id);
    } catch (error) {
      reportError(error);
    }
  };

  el<HTMLButtonElement>("submit-round").onclick = async () => {
    const input = el<HTMLInputElement>("request");
    if (!currentSession || !input.value.trim()) return;
    try {
      await client.startRound(currentSession, input.value.trim());
      input.value = "";
    } catch (error) {
      reportError(error);
    }
  };

  el<HTMLButtonElement>("cancel-round").onclick = async () => {
    if (!currentSession) return;
    try {
      await client.cancel(currentSession);
    } catch (error) {
      reportError(error);
    }
  };

  el<HTMLButtonElement>("modal-approve").onclick = async () => {
    if (!currentSession || !timeline.pending) return;
    try {
      if (timeline.pending.kind === "clarification") {
        await client.reply(currentSession, el<HTMLInputElement>("modal-reply").value);
      } else {
        await client.confirm(currentSession, "approve");
      }
    } catch (error) {
      reportError(error);
    }
  };

  el<HTMLButtonElement>("modal-deny").onclick = async () => {
    if (!currentSession) return;
    try {
      await client.confirm(currentSession, "deny");
    } catch (error) {
      reportError(error);
    }
  };

  el<HTMLButtonElement>("show-trace").onclick = () => void showTrace();
  el<HTMLButtonElement>("close-trace").onclick = () =>
    el("trace-panel").classList.add("hidden");

  void refreshSessions();
  setInterval(() => void refreshSessions(), 5000);
}

document.addEventListener("DOMContentLoaded", wire);
