import { test } from "vitest";
import * as path from "path";
import { readExamples } from "../src/records";
import { prepare } from "../src/dataset";
import { initModel } from "../src/model";
import { train, accuracy } from "../src/train";
import { Rng } from "../src/rng";

const DATA = path.join(__dirname, "data");

test("calibrate overfit", () => {
  const examples = readExamples(path.join(DATA, "sample.pnbs")).slice(0, 100).map(prepare);
  for (const [width, depth, steps, batch, lr] of [
    [16, 1, 600, 20, 0.02],
    [16, 1, 1200, 20, 0.02],
    [16, 1, 1200, 20, 0.05],
  ] as const) {
    const t0 = Date.now();
    const model = initModel(width, depth, ["Top", "All"], new Rng(9));
    const datasets = new Map([["Top", examples], ["All", examples]]);
    train(model, datasets, {
      steps, batchSize: batch, lr, seed: 1,
      headsets: [{ name: "Top", weight: 1 }, { name: "All", weight: 1 }],
    });
    const accTop = accuracy(model, examples, "Top");
    const accAll = accuracy(model, examples, "All");
    console.log(`w${width} d${depth} s${steps} b${batch} lr${lr}: ` +
      `Top ${(100 * accTop).toFixed(1)}% All ${(100 * accAll).toFixed(1)}% ` +
      `in ${((Date.now() - t0) / 1000).toFixed(1)}s`);
  }
}, 600_000);
