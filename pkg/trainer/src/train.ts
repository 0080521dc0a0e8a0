/**
 * Vanilla SGD over the headset losses.  Each step trains exactly one
 * headset, chosen by smooth weighted round-robin, so long runs hit the
 * configured per-headset step ratios almost exactly.
 */

import {
  Tape, Tensor, combine, gatherSoftmaxCE, mseLoss, sigmoidBCE,
} from "./tensor";
import { Model, actionOffset, allParams, forward } from "./model";
import { Prepared, sampleBatch } from "./dataset";
import { Rng } from "./rng";

export const POLICY_WEIGHT = 1.0;
export const VALUE_WEIGHT = 1.0;
export const AUX_WEIGHT = 0.25;

export interface HeadsetSpec {
  name: string;
  weight: number;
  tags?: string[]; // undefined trains on every example
  stopGradient?: boolean; // head learns, trunk stays frozen
}

export interface TrainConfig {
  steps: number;
  batchSize: number;
  lr: number;
  seed: number;
  headsets: HeadsetSpec[];
}

export class TrainDivergedError extends Error {
  constructor(step: number, headset: string, loss: number) {
    super(`loss became ${loss} at step ${step} on headset '${headset}'`);
  }
}

export interface BatchLoss {
  loss: Tensor;
  x: Tensor;
  values: Tensor; // [N,1] value-head predictions
  correct: number;
  policyLoss: number;
  valueLoss: number;
}

/** Forward plus the combined loss for one batch of one headset. */
export function batchLoss(
  tape: Tape,
  model: Model,
  batch: Prepared[],
  headset: string,
  stopTrunk = false,
  inputGrad = false,
): BatchLoss {
  const n = batch.length;
  const x = new Tensor([n, 104, 8, 8], undefined, inputGrad);
  for (let i = 0; i < n; i++) x.data.set(batch[i].input, i * 104 * 64);

  const out = forward(tape, model, x, headset, stopTrunk);
  const offsets = batch.map((e, i) => {
    const offs = new Int32Array(e.legal.length);
    for (let k = 0; k < e.legal.length; k++) offs[k] = actionOffset(i, e.legal[k]);
    return offs;
  });
  const labels = Int32Array.from(batch, (e) => e.labelPos);
  const policy = gatherSoftmaxCE(tape, out.squareLogits, out.passLogits, offsets, labels);

  const valueTargets = Float32Array.from(batch, (e) => e.valueTarget);
  const value = mseLoss(tape, out.values, valueTargets);

  const soonTargets = new Float32Array(2 * n);
  const countTargets = new Float32Array(12 * n);
  for (let i = 0; i < n; i++) {
    soonTargets[2 * i] = batch[i].soonWin;
    soonTargets[2 * i + 1] = batch[i].soonLose;
    countTargets.set(batch[i].counts, 12 * i);
  }
  const soon = sigmoidBCE(tape, out.soonLogits, soonTargets);
  const counts = mseLoss(tape, out.countPreds, countTargets);

  const loss = combine(tape, [
    { loss: policy.loss, weight: POLICY_WEIGHT },
    { loss: value, weight: VALUE_WEIGHT },
    { loss: soon, weight: AUX_WEIGHT },
    { loss: counts, weight: AUX_WEIGHT },
  ]);
  return {
    loss,
    x,
    values: out.values,
    correct: policy.correct,
    policyLoss: policy.loss.data[0],
    valueLoss: value.data[0],
  };
}

/** Smooth weighted round-robin over headset indices. */
export function* roundRobin(weights: number[]): Generator<number> {
  const acc = new Float64Array(weights.length);
  const total = weights.reduce((a, b) => a + b, 0);
  while (true) {
    let pick = 0;
    for (let i = 0; i < weights.length; i++) {
      acc[i] += weights[i];
      if (acc[i] > acc[pick]) pick = i;
    }
    acc[pick] -= total;
    yield pick;
  }
}

export interface StepLog {
  step: number;
  headset: string;
  loss: number;
  accuracy: number;
}

export interface TrainResult {
  stepsPerHeadset: Map<string, number>;
  log: StepLog[];
}

/**
 * Runs the SGD loop in place.  Datasets are keyed by headset name and
 * already filtered to that headset's tags; onStep fires after each update
 * so callers can log saliency series at fixed intervals.
 */
export function train(
  model: Model,
  datasets: Map<string, Prepared[]>,
  cfg: TrainConfig,
  onStep?: (log: StepLog) => void,
): TrainResult {
  for (const spec of cfg.headsets) {
    const data = datasets.get(spec.name);
    if (!data || data.length === 0) {
      throw new Error(`headset '${spec.name}' has no training examples`);
    }
  }
  const rng = new Rng(cfg.seed);
  const params = allParams(model);
  const schedule = roundRobin(cfg.headsets.map((h) => h.weight));
  const stepsPerHeadset = new Map(cfg.headsets.map((h) => [h.name, 0]));
  const log: StepLog[] = [];

  for (let step = 0; step < cfg.steps; step++) {
    const spec = cfg.headsets[schedule.next().value];
    const data = datasets.get(spec.name)!;
    const batch = sampleBatch(data, Math.min(cfg.batchSize, data.length), rng);

    const tape = new Tape();
    const result = batchLoss(tape, model, batch, spec.name, spec.stopGradient ?? false);
    const lossValue = result.loss.data[0];
    if (!Number.isFinite(lossValue)) {
      throw new TrainDivergedError(step, spec.name, lossValue);
    }
    result.loss.grad![0] = 1;
    tape.backward();
    for (const p of params) {
      const g = p.grad!;
      for (let i = 0; i < p.size; i++) p.data[i] -= cfg.lr * g[i];
      g.fill(0);
    }

    stepsPerHeadset.set(spec.name, stepsPerHeadset.get(spec.name)! + 1);
    const entry = {
      step, headset: spec.name, loss: lossValue,
      accuracy: result.correct / batch.length,
    };
    log.push(entry);
    if (onStep) onStep(entry);
  }
  return { stepsPerHeadset, log };
}

/** Top-1 policy accuracy of one headset over a whole example list. */
export function accuracy(model: Model, examples: Prepared[], headset: string): number {
  if (!examples.length) return 0;
  let correct = 0;
  const chunk = 64;
  for (let at = 0; at < examples.length; at += chunk) {
    const batch = examples.slice(at, at + chunk);
    const result = batchLoss(new Tape(), model, batch, headset);
    correct += result.correct;
  }
  return correct / examples.length;
}
