import { afterAll, beforeAll, describe, expect, test } from "vitest";
import {
  Tape, Tensor, add, combine, conv1x1, conv3x3, dense, detach,
  gatherSoftmaxCE, meanSpatial, mseLoss, param, relu, setPrecision,
  sigmoidBCE, tanh, view,
} from "../src/tensor";
import { Rng } from "../src/rng";

beforeAll(() => setPrecision("f64"));
afterAll(() => setPrecision("f32"));

function fill(t: Tensor, rng: Rng, scale = 1): Tensor {
  for (let i = 0; i < t.size; i++) t.data[i] = rng.normal() * scale;
  return t;
}

/**
 * Central-difference check: project the op output onto a fixed random
 * direction so the whole thing is scalar, then compare analytic input
 * gradients against (f(x+h) - f(x-h)) / 2h element by element.
 */
function checkGrad(
  build: (tape: Tape) => Tensor,
  inputs: Tensor[],
  rng: Rng,
  indices?: Map<Tensor, number[]>,
  eps = 1e-5,
  tol = 1e-6,
): void {
  const probeTape = new Tape();
  const out = build(probeTape);
  const proj = Float64Array.from({ length: out.size }, () => rng.normal());
  const scalarOf = (o: Tensor) => {
    let s = 0;
    for (let i = 0; i < o.size; i++) s += o.data[i] * proj[i];
    return s;
  };
  out.grad!.set(proj);
  probeTape.backward();

  for (const input of inputs) {
    const where = indices?.get(input) ?? [...input.data.keys()];
    for (const i of where) {
      const saved = input.data[i];
      input.data[i] = saved + eps;
      const plus = scalarOf(build(new Tape()));
      input.data[i] = saved - eps;
      const minus = scalarOf(build(new Tape()));
      input.data[i] = saved;
      const fd = (plus - minus) / (2 * eps);
      const analytic = input.grad![i];
      const denom = Math.max(Math.abs(fd), Math.abs(analytic), 1e-4);
      expect(Math.abs(fd - analytic) / denom).toBeLessThan(tol);
    }
    input.zeroGrad();
  }
}

describe("backward passes agree with finite differences", () => {
  test("conv3x3, including zero input cells", () => {
    const rng = new Rng(1);
    const x = fill(param([2, 3, 8, 8]), rng);
    for (let i = 0; i < x.size; i += 3) x.data[i] = 0; // exercise the sparse path
    const w = fill(param([2, 3, 3, 3]), rng, 0.5);
    const b = fill(param([2]), rng, 0.5);
    const sample = [0, 5, 63, 64 + 17, 2 * 64 + 50, 3 * 64 + 33, x.size - 1];
    checkGrad((tape) => conv3x3(tape, x, w, b), [x, w, b],
      rng, new Map([[x, sample]]));
  });

  test("conv1x1", () => {
    const rng = new Rng(2);
    const x = fill(param([2, 3, 8, 8]), rng);
    const w = fill(param([4, 3]), rng, 0.5);
    const b = fill(param([4]), rng, 0.5);
    checkGrad((tape) => conv1x1(tape, x, w, b), [x, w, b],
      rng, new Map([[x, [0, 100, 200, x.size - 1]]]));
  });

  test("dense", () => {
    const rng = new Rng(3);
    const x = fill(param([3, 5]), rng);
    const w = fill(param([4, 5]), rng, 0.5);
    const b = fill(param([4]), rng, 0.5);
    checkGrad((tape) => dense(tape, x, w, b), [x, w, b], rng);
  });

  test("relu away from its kink", () => {
    const rng = new Rng(4);
    const x = param([40]);
    for (let i = 0; i < x.size; i++) {
      const v = rng.normal();
      x.data[i] = v + Math.sign(v || 1) * 0.1;
    }
    checkGrad((tape) => relu(tape, x), [x], rng);
  });

  test("tanh, add, meanSpatial composition", () => {
    const rng = new Rng(5);
    const a = fill(param([2, 3, 8, 8]), rng, 0.3);
    const b = fill(param([2, 3, 8, 8]), rng, 0.3);
    checkGrad(
      (tape) => tanh(tape, meanSpatial(tape, add(tape, a, b))),
      [a, b], rng,
      new Map([[a, [0, 77, 191, 383]], [b, [1, 78, 190, 382]]]),
    );
  });

  test("softmax cross-entropy over gathered offsets", () => {
    const rng = new Rng(6);
    const square = fill(param([2, 65, 64]), rng, 0.5);
    const pass = fill(param([2, 1]), rng, 0.5);
    const offsets = [Int32Array.of(0, 70, 300, -1), Int32Array.of(4500, 4600, -1)];
    const labels = Int32Array.of(2, 1);
    const touched = offsets.flatMap((o) => [...o].filter((v) => v >= 0));
    checkGrad(
      (tape) => gatherSoftmaxCE(tape, square, pass, offsets, labels).loss,
      [square, pass], rng,
      new Map([[square, touched]]),
    );
  });

  test("sigmoid binary cross-entropy", () => {
    const rng = new Rng(7);
    const logits = fill(param([6]), rng);
    const targets = Float32Array.of(0, 1, 1, 0, 1, 0);
    checkGrad((tape) => sigmoidBCE(tape, logits, targets), [logits], rng);
  });

  test("mean squared error", () => {
    const rng = new Rng(8);
    const pred = fill(param([8]), rng);
    const targets = Float32Array.from({ length: 8 }, () => rng.normal());
    checkGrad((tape) => mseLoss(tape, pred, targets), [pred], rng);
  });

  test("weighted combination routes gradients by weight", () => {
    const rng = new Rng(9);
    const a = fill(param([5]), rng);
    const b = fill(param([5]), rng);
    const ta = Float32Array.from({ length: 5 }, () => rng.normal());
    const tb = Float32Array.from({ length: 5 }, () => rng.normal());
    checkGrad(
      (tape) => combine(tape, [
        { loss: mseLoss(tape, a, ta), weight: 1.0 },
        { loss: mseLoss(tape, b, tb), weight: 0.25 },
      ]),
      [a, b], rng,
    );
  });
});

describe("tape plumbing", () => {
  test("view shares gradient storage with its source", () => {
    const rng = new Rng(10);
    const x = fill(param([2, 6]), rng);
    const tape = new Tape();
    const flat = view(x, [12]);
    const loss = mseLoss(tape, flat, new Float32Array(12));
    loss.grad![0] = 1;
    tape.backward();
    expect(x.grad![3]).not.toBe(0);
    expect(x.grad![3]).toBe(flat.grad![3]);
  });

  test("detach blocks gradient flow", () => {
    const rng = new Rng(11);
    const x = fill(param([4]), rng);
    const tape = new Tape();
    const cut = detach(x);
    const loss = mseLoss(tape, relu(tape, cut), new Float32Array(4));
    loss.grad![0] = 1;
    tape.backward();
    expect(Array.from(x.grad!)).toEqual([0, 0, 0, 0]);
  });

  test("gradients accumulate across shared inputs", () => {
    const rng = new Rng(12);
    const x = fill(param([3]), rng);
    const tape = new Tape();
    const doubled = add(tape, x, x);
    const loss = mseLoss(tape, doubled, new Float32Array(3));
    loss.grad![0] = 1;
    tape.backward();
    for (let i = 0; i < 3; i++) {
      expect(x.grad![i]).toBeCloseTo((2 * 2 * 2 * x.data[i]) / 3, 9);
    }
  });
});
