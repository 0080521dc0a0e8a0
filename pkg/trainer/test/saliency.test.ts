import { afterAll, beforeAll, describe, expect, test } from "vitest";
import * as path from "path";
import { Tape, setPrecision } from "../src/tensor";
import { initModel, modelFromTensors } from "../src/model";
import { readExamples, readWeights } from "../src/records";
import { Prepared, prepare } from "../src/dataset";
import { batchLoss } from "../src/train";
import { actionSaliency, buildReport, lossSaliency, snapshot } from "../src/saliency";
import { Rng } from "../src/rng";

const DATA = path.join(__dirname, "data");

function examples(count: number): Prepared[] {
  return readExamples(path.join(DATA, "sample.pnbs")).slice(0, count).map(prepare);
}

describe("saliency sanity", () => {
  test("a zero model has exactly zero saliency everywhere", () => {
    const model = initModel(8, 1, ["Top", "All"], null);
    const batch = examples(8);
    const loss = lossSaliency(model, batch, "Top");
    const action = actionSaliency(model, batch, "Top");
    expect(loss).toHaveLength(104);
    expect(loss.every((v) => v === 0)).toBe(true);
    expect(action.zero.every((v) => v === 0)).toBe(true);
    expect(action.one.every((v) => v === 0)).toBe(true);
  });

  test("a trained-style model reports 104 nonnegative planes", () => {
    const model = modelFromTensors(readWeights(path.join(DATA, "parity.pnbw")));
    const batch = examples(6);
    const report = buildReport([
      snapshot(model, batch, "Top", 0),
      snapshot(model, batch, "All", 10),
    ]);
    expect(report.snapshots).toHaveLength(2);
    for (const series of [
      report.averageLossPbs, report.averageActionPbsZero, report.averageActionPbsOne,
    ]) {
      expect(series).toHaveLength(104);
      expect(series.every((v) => v >= 0)).toBe(true);
    }
    expect(Math.max(...report.averageLossPbs)).toBeGreaterThan(0);
  });

  test("an empty bit-value group reads as zero, not NaN", () => {
    const model = modelFromTensors(readWeights(path.join(DATA, "parity.pnbw")));
    const batch = examples(4);
    const action = actionSaliency(model, batch, "Top");
    // Some synopsis planes are constant across a batch (all-ones or
    // all-zeros masks), which leaves the opposite value group empty.
    let sawConstant = 0;
    for (let p = 0; p < 104; p++) {
      const cells: number[] = [];
      for (const e of batch) {
        for (let c = 0; c < 64; c++) cells.push(e.input[p * 64 + c]);
      }
      if (cells.every((v) => v === 1)) {
        expect(action.zero[p]).toBe(0);
        sawConstant++;
      } else if (cells.every((v) => v === 0)) {
        expect(action.one[p]).toBe(0);
        sawConstant++;
      }
    }
    expect(sawConstant).toBeGreaterThan(0);
    expect(action.zero.every((v) => Number.isFinite(v))).toBe(true);
    expect(action.one.every((v) => Number.isFinite(v))).toBe(true);
  });
});

describe("input gradients match finite differences", () => {
  beforeAll(() => setPrecision("f64"));
  afterAll(() => setPrecision("f32"));

  test("ten probed cells within 1e-3 relative", () => {
    const model = initModel(8, 1, ["Top", "All"], new Rng(77));
    const batch = examples(3);

    const tape = new Tape();
    const result = batchLoss(tape, model, batch, "Top", false, true);
    result.loss.grad![0] = 1;
    tape.backward();
    const analytic = result.x.grad!;

    const lossAt = () => batchLoss(new Tape(), model, batch, "Top", false, true)
      .loss.data[0];
    const rng = new Rng(5);
    const eps = 1e-4;
    let probed = 0;
    while (probed < 10) {
      const idx = rng.int(result.x.size);
      if (Math.abs(analytic[idx]) < 1e-7) continue; // skip numerically dead cells
      const e = Math.floor(idx / (104 * 64));
      const cell = idx % (104 * 64);
      const saved = batch[e].input[cell];
      batch[e].input[cell] = saved + eps;
      const plus = lossAt();
      batch[e].input[cell] = saved - eps;
      const minus = lossAt();
      batch[e].input[cell] = saved;
      const fd = (plus - minus) / (2 * eps);
      const rel = Math.abs(fd - analytic[idx]) / Math.max(Math.abs(fd), Math.abs(analytic[idx]));
      expect(rel).toBeLessThan(1e-3);
      probed++;
    }
  }, 60_000);
});
