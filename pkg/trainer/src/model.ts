/**
 * The toy residual network.  Tensor names, shapes, and forward semantics
 * match the engine's evaluator bit for bit: a 3x3 convolution trunk over
 * the 104-plane synopsis, one policy/value headset pair per named headset,
 * and shared auxiliary heads for the soon-over flags and piece counts.
 */

import {
  Tensor, Tape, param, conv3x3, conv1x1, relu, add, meanSpatial,
  dense, tanh, view, detach,
} from "./tensor";
import { NamedTensor, NUM_PLANES } from "./records";
import { Rng } from "./rng";

export const NUM_POLICY_CHANNELS = 65;
export const VALUE_CHANNELS = 8;
export const SENSE_BASE = 4096;
export const PASS_INDEX = 4160;
export const TOP_HEADSET = "Top";
export const ALL_HEADSET = "All";

export interface Headset {
  policyW: Tensor;
  policyB: Tensor;
  passW: Tensor;
  passB: Tensor;
  valueConvW: Tensor;
  valueConvB: Tensor;
  valueDenseW: Tensor;
  valueDenseB: Tensor;
}

export interface Model {
  width: number;
  trunkInW: Tensor;
  trunkInB: Tensor;
  residual: Array<{ w1: Tensor; b1: Tensor; w2: Tensor; b2: Tensor }>;
  heads: Map<string, Headset>;
  soonW: Tensor;
  soonB: Tensor;
  pieceW: Tensor;
  pieceB: Tensor;
}

function heInit(rng: Rng | null, ...shape: number[]): Tensor {
  const t = param(shape);
  if (rng) {
    const fanIn = shape.length > 1 ? shape.slice(1).reduce((a, b) => a * b, 1) : shape[0];
    const scale = Math.sqrt(2 / fanIn);
    for (let i = 0; i < t.size; i++) t.data[i] = rng.normal() * scale;
  }
  return t;
}

/** Fresh model; zero weights without an rng, matching the engine's init. */
export function initModel(
  width: number,
  depth: number,
  headsets: string[],
  rng: Rng | null,
): Model {
  const heads = new Map<string, Headset>();
  for (const name of headsets) {
    heads.set(name, {
      policyW: heInit(rng, NUM_POLICY_CHANNELS, width, 1, 1),
      policyB: param([NUM_POLICY_CHANNELS]),
      passW: param([width]),
      passB: param([1]),
      valueConvW: heInit(rng, VALUE_CHANNELS, width, 1, 1),
      valueConvB: param([VALUE_CHANNELS]),
      valueDenseW: param([1, VALUE_CHANNELS * 64]),
      valueDenseB: param([1]),
    });
  }
  return {
    width,
    trunkInW: heInit(rng, width, NUM_PLANES, 3, 3),
    trunkInB: param([width]),
    residual: Array.from({ length: depth }, () => ({
      w1: heInit(rng, width, width, 3, 3),
      b1: param([width]),
      w2: heInit(rng, width, width, 3, 3),
      b2: param([width]),
    })),
    heads,
    soonW: param([2, width]),
    soonB: param([2]),
    pieceW: param([12, width]),
    pieceB: param([12]),
  };
}

export function trunkParams(model: Model): Tensor[] {
  const out = [model.trunkInW, model.trunkInB];
  for (const r of model.residual) out.push(r.w1, r.b1, r.w2, r.b2);
  return out;
}

export function allParams(model: Model): Tensor[] {
  const out = trunkParams(model);
  for (const h of model.heads.values()) {
    out.push(h.policyW, h.policyB, h.passW, h.passB,
             h.valueConvW, h.valueConvB, h.valueDenseW, h.valueDenseB);
  }
  out.push(model.soonW, model.soonB, model.pieceW, model.pieceB);
  return out;
}

/** Tensor list in the engine's canonical export order. */
export function exportTensors(model: Model): NamedTensor[] {
  const out: NamedTensor[] = [
    { name: "trunk.in.w", shape: model.trunkInW.shape, data: model.trunkInW.data },
    { name: "trunk.in.b", shape: model.trunkInB.shape, data: model.trunkInB.data },
  ];
  model.residual.forEach((r, i) => {
    out.push({ name: `trunk.res${i}.conv1.w`, shape: r.w1.shape, data: r.w1.data });
    out.push({ name: `trunk.res${i}.conv1.b`, shape: r.b1.shape, data: r.b1.data });
    out.push({ name: `trunk.res${i}.conv2.w`, shape: r.w2.shape, data: r.w2.data });
    out.push({ name: `trunk.res${i}.conv2.b`, shape: r.b2.shape, data: r.b2.data });
  });
  for (const [name, h] of model.heads) {
    const base = `head.${name}.`;
    out.push({ name: base + "policy.w", shape: h.policyW.shape, data: h.policyW.data });
    out.push({ name: base + "policy.b", shape: h.policyB.shape, data: h.policyB.data });
    out.push({ name: base + "pass.w", shape: h.passW.shape, data: h.passW.data });
    out.push({ name: base + "pass.b", shape: h.passB.shape, data: h.passB.data });
    out.push({ name: base + "value.conv.w", shape: h.valueConvW.shape, data: h.valueConvW.data });
    out.push({ name: base + "value.conv.b", shape: h.valueConvB.shape, data: h.valueConvB.data });
    out.push({ name: base + "value.dense.w", shape: h.valueDenseW.shape, data: h.valueDenseW.data });
    out.push({ name: base + "value.dense.b", shape: h.valueDenseB.shape, data: h.valueDenseB.data });
  }
  out.push({ name: "aux.soon.w", shape: model.soonW.shape, data: model.soonW.data });
  out.push({ name: "aux.soon.b", shape: model.soonB.shape, data: model.soonB.data });
  out.push({ name: "aux.piece.w", shape: model.pieceW.shape, data: model.pieceW.data });
  out.push({ name: "aux.piece.b", shape: model.pieceB.shape, data: model.pieceB.data });
  return out;
}

/** Rebuild a model from a weight file's tensors, validating the schema. */
export function modelFromTensors(tensors: NamedTensor[]): Model {
  const byName = new Map(tensors.map((t) => [t.name, t]));
  const take = (name: string, shape?: number[]): Tensor => {
    const t = byName.get(name);
    if (!t) throw new Error(`missing tensor '${name}'`);
    byName.delete(name);
    if (shape && (t.shape.length !== shape.length || t.shape.some((d, i) => d !== shape[i]))) {
      throw new Error(`${name}: expected shape ${shape}, found ${t.shape}`);
    }
    return param(t.shape, t.data.slice());
  };

  const inW = take("trunk.in.w");
  if (inW.shape.length !== 4 || inW.shape[1] !== NUM_PLANES) {
    throw new Error(`trunk.in.w: bad shape ${inW.shape}`);
  }
  const width = inW.shape[0];
  const residual: Model["residual"] = [];
  for (let i = 0; byName.has(`trunk.res${i}.conv1.w`); i++) {
    residual.push({
      w1: take(`trunk.res${i}.conv1.w`, [width, width, 3, 3]),
      b1: take(`trunk.res${i}.conv1.b`, [width]),
      w2: take(`trunk.res${i}.conv2.w`, [width, width, 3, 3]),
      b2: take(`trunk.res${i}.conv2.b`, [width]),
    });
  }

  const headNames = new Set<string>();
  for (const name of byName.keys()) {
    if (name.startsWith("head.")) headNames.add(name.split(".")[1]);
  }
  for (const required of [TOP_HEADSET, ALL_HEADSET]) {
    if (!headNames.has(required)) throw new Error(`weight file lacks the '${required}' headset`);
  }
  const heads = new Map<string, Headset>();
  for (const name of headNames) {
    const base = `head.${name}.`;
    heads.set(name, {
      policyW: take(base + "policy.w", [NUM_POLICY_CHANNELS, width, 1, 1]),
      policyB: take(base + "policy.b", [NUM_POLICY_CHANNELS]),
      passW: take(base + "pass.w", [width]),
      passB: take(base + "pass.b", [1]),
      valueConvW: take(base + "value.conv.w", [VALUE_CHANNELS, width, 1, 1]),
      valueConvB: take(base + "value.conv.b", [VALUE_CHANNELS]),
      valueDenseW: take(base + "value.dense.w", [1, VALUE_CHANNELS * 64]),
      valueDenseB: take(base + "value.dense.b", [1]),
    });
  }

  const model: Model = {
    width,
    trunkInW: inW,
    trunkInB: take("trunk.in.b", [width]),
    residual,
    heads,
    soonW: take("aux.soon.w", [2, width]),
    soonB: take("aux.soon.b", [2]),
    pieceW: take("aux.piece.w", [12, width]),
    pieceB: take("aux.piece.b", [12]),
  };
  if (byName.size) {
    throw new Error(`unknown tensor '${[...byName.keys()].sort()[0]}'`);
  }
  return model;
}

/** Unpack 104 little-endian square masks into a 104x8x8 float grid. */
export function planesToInput(planes: Uint8Array): Float32Array {
  const out = new Float32Array(NUM_PLANES * 64);
  for (let p = 0; p < NUM_PLANES; p++) {
    for (let r = 0; r < 8; r++) {
      const byte = planes[p * 8 + r];
      if (byte === 0) continue;
      for (let f = 0; f < 8; f++) out[p * 64 + r * 8 + f] = (byte >> f) & 1;
    }
  }
  return out;
}

/** Stack example planes into one [N,104,8,8] input tensor. */
export function batchInput(planes: Uint8Array[], requiresGrad = false): Tensor {
  const n = planes.length;
  const x = new Tensor([n, NUM_PLANES, 8, 8], undefined, requiresGrad);
  for (let i = 0; i < n; i++) x.data.set(planesToInput(planes[i]), i * NUM_PLANES * 64);
  return x;
}

/** Flat offset of an action's logit inside squareLogits, -1 for pass. */
export function actionOffset(example: number, index: number): number {
  if (index === PASS_INDEX) return -1;
  if (index >= SENSE_BASE) {
    return (example * NUM_POLICY_CHANNELS + 64) * 64 + (index - SENSE_BASE);
  }
  return (example * NUM_POLICY_CHANNELS + index % 64) * 64 + Math.floor(index / 64);
}

export interface ForwardOut {
  squareLogits: Tensor; // [N,65,64]
  passLogits: Tensor; // [N,1]
  values: Tensor; // [N,1], tanh applied
  soonLogits: Tensor; // [N,2], pre-sigmoid
  countPreds: Tensor; // [N,12]
}

/**
 * Full forward pass for one headset.  With stopTrunk the heads read a
 * detached copy of the trunk so their gradients never reach the tower.
 */
export function forward(
  tape: Tape,
  model: Model,
  x: Tensor,
  headset: string,
  stopTrunk = false,
): ForwardOut {
  const head = model.heads.get(headset);
  if (!head) throw new Error(`unknown headset '${headset}'`);
  const n = x.shape[0];

  let trunk = relu(tape, conv3x3(tape, x, model.trunkInW, model.trunkInB));
  for (const r of model.residual) {
    const inner = relu(tape, conv3x3(tape, trunk, r.w1, r.b1));
    trunk = relu(tape, add(tape, trunk, conv3x3(tape, inner, r.w2, r.b2)));
  }
  if (stopTrunk) trunk = detach(trunk);
  const pooled = meanSpatial(tape, trunk);

  const policyMaps = conv1x1(tape, trunk, head.policyW, head.policyB);
  const squareLogits = view(policyMaps, [n, NUM_POLICY_CHANNELS, 64]);
  const passLogits = dense(tape, pooled, view(head.passW, [1, model.width]), head.passB);

  const valueMaps = relu(tape, conv1x1(tape, trunk, head.valueConvW, head.valueConvB));
  const flat = view(valueMaps, [n, VALUE_CHANNELS * 64]);
  const values = tanh(tape, dense(tape, flat, head.valueDenseW, head.valueDenseB));

  const soonLogits = dense(tape, pooled, model.soonW, model.soonB);
  const countPreds = dense(tape, pooled, model.pieceW, model.pieceB);
  return { squareLogits, passLogits, values, soonLogits, countPreds };
}
