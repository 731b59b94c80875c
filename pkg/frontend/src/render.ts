/**
 * Scene rendering as abstract draw commands over two orthographic
 * projections: top-down (x/y) and side (x/z). A browser adapter executes the
 * commands on a 2D canvas; tests execute them on a recorder.
 */

import { ViewState } from "./view.js";

export interface Draw {
  clear(): void;
  rect(view: "top" | "side", x0: number, y0: number, x1: number, y1: number,
       style: string, fill: boolean): void;
  circle(view: "top" | "side", x: number, y: number, r: number, style: string): void;
  line(view: "top" | "side", x0: number, y0: number, x1: number, y1: number,
       style: string): void;
  text(line: number, s: string): void;
  bar(index: number, height01: number, label: string): void;
}

type Projector = (p: number[]) => [number, number];

function projectors(view: ViewState): { top: Projector; side: Projector } | null {
  if (!view.workspace) return null;
  const { lo, hi } = view.workspace;
  const top: Projector = (p) => [
    (p[0] - lo[0]) / (hi[0] - lo[0]),
    (p[1] - lo[1]) / (hi[1] - lo[1]),
  ];
  const side: Projector = (p) => [
    (p[0] - lo[0]) / (hi[0] - lo[0]),
    (p[2] - lo[2]) / (hi[2] - lo[2]),
  ];
  return { top, side };
}

const OBJECT_STYLES = ["object0", "object1", "object2", "object3"];

export function render(view: ViewState, draw: Draw): void {
  draw.clear();
  const proj = projectors(view);
  if (!proj || !view.latest) {
    draw.text(0, view.connected ? "waiting for state..." : "disconnected");
    return;
  }
  const s = view.latest;
  for (const name of ["top", "side"] as const) {
    const pr = proj[name];
    // obstacles
    for (const box of s.obstacles) {
      const [x0, y0] = pr(box.lo as unknown as number[]);
      const [x1, y1] = pr(box.hi as unknown as number[]);
      draw.rect(name, x0, y0, x1, y1, "obstacle", true);
    }
    // objects
    s.objects.forEach((pose, i) => {
      const [x, y] = pr(pose);
      draw.circle(name, x, y, 0.02, OBJECT_STYLES[i % OBJECT_STYLES.length]);
    });
    // end effector with orientation tick (roll shown in side view)
    const [ex, ey] = pr(s.ee);
    draw.circle(name, ex, ey, 0.015, s.gripper ? "ee-closed" : "ee-open");
    const roll = s.ee[3];
    draw.line(name, ex, ey, ex + 0.03 * Math.cos(roll), ey + 0.03 * Math.sin(roll),
              "ee-tick");
  }
  // HUD
  draw.text(0, `task ${view.taskName} | trial ${view.trialIndex + 1}/${view.nTrials}`
               + ` | tick ${s.tick} | subtask ${s.subtask}`);
  const bannerText =
    view.banner === "paused" ? "PAUSED - robot disagrees, hold course to take over"
    : view.banner === "override" ? "USER OVERRIDE"
    : "";
  draw.text(1, bannerText);
  if (view.lastCosine !== null) {
    draw.text(2, `gate cosine ${view.lastCosine.toFixed(2)}`);
  }
  if (view.finetuneEpoch !== null) {
    const frac = view.finetuneEpoch / view.finetuneTotalEpochs;
    draw.text(3, `fine-tuning ${(100 * frac).toFixed(0)}%`);
  }
  if (view.errorMessage) {
    draw.text(4, `error: ${view.errorMessage}`);
  }
  // per-trial completion bar chart
  const maxSteps = Math.max(1, ...view.completedSteps);
  view.completedSteps.forEach((steps, i) => {
    draw.bar(i, steps / maxSteps, `${steps}`);
  });
}
