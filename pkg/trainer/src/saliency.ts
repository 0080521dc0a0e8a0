/**
 * Input-gradient saliency over the 104 synopsis planes.  Two flavours:
 * per-batch saliency of the training loss, and per-bit saliency of the
 * chosen action's logit with the bits grouped by their value.  Both are
 * absolute-gradient averages, so every reported number is nonnegative.
 */

import { Tape, Tensor, gatherLogitSum } from "./tensor";
import { Model, actionOffset, forward } from "./model";
import { Prepared } from "./dataset";
import { batchLoss } from "./train";

export const NUM_PLANES = 104;
const PLANE_CELLS = 64;

export interface SaliencySnapshot {
  step: number;
  lossPbs: number[]; // mean |dLoss/dbit| per plane
  actionPbsZero: number[]; // mean |dLogit/dbit| per plane over bits that are 0
  actionPbsOne: number[]; // same over bits that are 1
}

export interface SaliencyReport {
  snapshots: SaliencySnapshot[];
  averageLossPbs: number[];
  averageActionPbsZero: number[];
  averageActionPbsOne: number[];
}

function planeMeans(x: Tensor): number[] {
  const n = x.shape[0];
  const out = new Array<number>(NUM_PLANES).fill(0);
  const g = x.grad!;
  for (let ni = 0; ni < n; ni++) {
    for (let p = 0; p < NUM_PLANES; p++) {
      let acc = 0;
      const base = (ni * NUM_PLANES + p) * PLANE_CELLS;
      for (let cell = 0; cell < PLANE_CELLS; cell++) acc += Math.abs(g[base + cell]);
      out[p] += acc;
    }
  }
  return out.map((v) => v / (n * PLANE_CELLS));
}

/** Mean absolute input gradient of the combined loss, one value per plane. */
export function lossSaliency(model: Model, batch: Prepared[], headset: string): number[] {
  const tape = new Tape();
  const result = batchLoss(tape, model, batch, headset, false, true);
  result.loss.grad![0] = 1;
  tape.backward();
  return planeMeans(result.x);
}

/**
 * Mean absolute gradient of each example's chosen-action logit, grouped by
 * the underlying bit value.  Bits at 1 are the members of a plane's mask;
 * bits at 0 are its complement.
 */
export function actionSaliency(
  model: Model,
  batch: Prepared[],
  headset: string,
): { zero: number[]; one: number[] } {
  const n = batch.length;
  const x = new Tensor([n, NUM_PLANES, 8, 8], undefined, true);
  for (let i = 0; i < n; i++) x.data.set(batch[i].input, i * NUM_PLANES * PLANE_CELLS);

  const tape = new Tape();
  const out = forward(tape, model, x, headset);
  const chosen = Int32Array.from(batch, (e, i) => actionOffset(i, e.legal[e.labelPos]));
  const probe = gatherLogitSum(tape, out.squareLogits, out.passLogits, chosen);
  probe.grad![0] = 1;
  tape.backward();

  const sums = { zero: new Float64Array(NUM_PLANES), one: new Float64Array(NUM_PLANES) };
  const counts = { zero: new Float64Array(NUM_PLANES), one: new Float64Array(NUM_PLANES) };
  const g = x.grad!;
  for (let ni = 0; ni < n; ni++) {
    for (let p = 0; p < NUM_PLANES; p++) {
      const base = (ni * NUM_PLANES + p) * PLANE_CELLS;
      for (let cell = 0; cell < PLANE_CELLS; cell++) {
        const side = x.data[base + cell] > 0 ? "one" : "zero";
        sums[side][p] += Math.abs(g[base + cell]);
        counts[side][p] += 1;
      }
    }
  }
  const mean = (side: "zero" | "one") =>
    Array.from(sums[side], (v, p) => (counts[side][p] ? v / counts[side][p] : 0));
  return { zero: mean("zero"), one: mean("one") };
}

export function snapshot(
  model: Model,
  batch: Prepared[],
  headset: string,
  step: number,
): SaliencySnapshot {
  const action = actionSaliency(model, batch, headset);
  return {
    step,
    lossPbs: lossSaliency(model, batch, headset),
    actionPbsZero: action.zero,
    actionPbsOne: action.one,
  };
}

export function buildReport(snapshots: SaliencySnapshot[]): SaliencyReport {
  const average = (pick: (s: SaliencySnapshot) => number[]) => {
    const out = new Array<number>(NUM_PLANES).fill(0);
    for (const s of snapshots) pick(s).forEach((v, p) => (out[p] += v));
    return out.map((v) => (snapshots.length ? v / snapshots.length : 0));
  };
  return {
    snapshots,
    averageLossPbs: average((s) => s.lossPbs),
    averageActionPbsZero: average((s) => s.actionPbsZero),
    averageActionPbsOne: average((s) => s.actionPbsOne),
  };
}
