/**
 * View state: a pure reducer over server messages. The client renders only
 * what the server sent — no local physics, no extrapolation.
 */

import {
  WireMessage,
  StateUpdate,
  GateEvent,
  HelloPayload,
  TrialCompletePayload,
} from "./protocol.js";

export type Banner = "normal" | "paused" | "override";

export interface ViewState {
  connected: boolean;
  sessionId: string | null;
  taskName: string | null;
  workspace: { lo: number[]; hi: number[] } | null;
  latest: StateUpdate | null;
  banner: Banner;
  lastCosine: number | null;
  trialIndex: number;
  nTrials: number;
  trialDone: boolean;
  completedSteps: number[]; // per-trial completion steps, for the bar chart
  finetuneEpoch: number | null;
  finetuneTotalEpochs: number;
  finetuneDone: boolean;
  sessionFinished: boolean;
  errorMessage: string | null;
}

export function initialView(): ViewState {
  return {
    connected: false,
    sessionId: null,
    taskName: null,
    workspace: null,
    latest: null,
    banner: "normal",
    lastCosine: null,
    trialIndex: 0,
    nTrials: 4,
    trialDone: false,
    completedSteps: [],
    finetuneEpoch: null,
    finetuneTotalEpochs: 10,
    finetuneDone: false,
    sessionFinished: false,
    errorMessage: null,
  };
}

export function reduce(view: ViewState, msg: WireMessage): ViewState {
  const next = { ...view };
  switch (msg.kind) {
    case "Hello": {
      const p = msg.payload as unknown as HelloPayload;
      next.sessionId = p.session_id;
      next.taskName = p.task.name;
      next.workspace = p.task.workspace as { lo: number[]; hi: number[] };
      next.trialIndex = p.trial;
      next.nTrials = p.n_trials;
      next.trialDone = false;
      next.finetuneEpoch = null;
      next.finetuneDone = false;
      next.banner = "normal";
      break;
    }
    case "StateUpdate": {
      next.latest = msg.payload as unknown as StateUpdate;
      next.trialIndex = next.latest.trial;
      break;
    }
    case "GateEvent": {
      const g = msg.payload as unknown as GateEvent;
      next.lastCosine = g.cosine;
      next.banner =
        g.outcome === "pause"
          ? "paused"
          : g.outcome === "execute_user" || g.outcome === "execute_rotation_bypass"
            ? "override"
            : "normal";
      break;
    }
    case "TrialComplete": {
      const t = msg.payload as unknown as TrialCompletePayload;
      next.trialDone = true;
      next.completedSteps = [...view.completedSteps, t.metrics.completion_steps];
      break;
    }
    case "FinetuneProgress": {
      next.finetuneEpoch = msg.payload.epoch as number;
      break;
    }
    case "MetricsSummary": {
      if (msg.payload.finetuned) next.finetuneDone = true;
      if (msg.payload.finished) next.sessionFinished = true;
      break;
    }
    case "Error": {
      next.errorMessage = String(msg.payload.message ?? "unknown error");
      break;
    }
  }
  return next;
}
