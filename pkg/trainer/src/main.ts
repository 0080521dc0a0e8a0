/**
 * Command-line driver: read a synopsis dump, train the toy network, and
 * write the weight file, parity fixtures, saliency report, and a summary.
 *
 *   npm run train -- --data games/examples.pnbs --out run1 --steps 2000
 */

import * as fs from "fs";
import * as path from "path";
import { parseArgs } from "util";
import { readExamples } from "./records";
import { Prepared, forTags, sampleBatch, splitExamples } from "./dataset";
import { ALL_HEADSET, TOP_HEADSET, initModel } from "./model";
import { HeadsetSpec, TrainConfig, accuracy, train } from "./train";
import { SaliencySnapshot, buildReport, snapshot } from "./saliency";
import { exportWeights, verifyParity, writeFixtures } from "./export";
import { Rng } from "./rng";
import { Tape } from "./tensor";
import { batchLoss } from "./train";

function num(value: string | undefined, fallback: number): number {
  if (value === undefined) return fallback;
  const parsed = Number(value);
  if (!Number.isFinite(parsed)) throw new Error(`not a number: '${value}'`);
  return parsed;
}

function mostCommonTag(examples: Prepared[]): string {
  const counts = new Map<string, number>();
  for (const e of examples) counts.set(e.tag, (counts.get(e.tag) ?? 0) + 1);
  let best = "";
  for (const [tag, count] of counts) {
    if (!best || count > (counts.get(best) ?? 0)) best = tag;
  }
  return best;
}

/** Sign agreement between the value head and the recorded outcome. */
function winnerAccuracy(model: ReturnType<typeof initModel>, examples: Prepared[]): number {
  if (!examples.length) return 0;
  let agree = 0;
  for (let at = 0; at < examples.length; at += 64) {
    const batch = examples.slice(at, at + 64);
    const result = batchLoss(new Tape(), model, batch, TOP_HEADSET);
    for (let i = 0; i < batch.length; i++) {
      if (result.values.data[i] * batch[i].valueTarget > 0) agree++;
    }
  }
  return agree / examples.length;
}

function main(): number {
  const { values: args } = parseArgs({
    options: {
      data: { type: "string" },
      out: { type: "string" },
      steps: { type: "string" },
      batch: { type: "string" },
      lr: { type: "string" },
      width: { type: "string" },
      depth: { type: "string" },
      seed: { type: "string" },
      salt: { type: "string", default: "v1" },
      "top-tag": { type: "string" },
      "top-weight": { type: "string" },
      "all-weight": { type: "string" },
      "random-tag": { type: "string" },
      "saliency-every": { type: "string" },
      fixtures: { type: "string" },
    },
  });
  if (!args.data || !args.out) {
    console.error("usage: train --data examples.pnbs --out dir [--steps N ...]");
    return 2;
  }

  const records = readExamples(args.data);
  const split = splitExamples(records, args.salt!);
  console.log(`loaded ${records.length} examples: ` +
    `${split.train.length} train, ${split.validation.length} validation`);

  const topTag = args["top-tag"] ?? mostCommonTag(split.train);
  const headsets: HeadsetSpec[] = [
    { name: TOP_HEADSET, weight: num(args["top-weight"], 15), tags: [topTag] },
    { name: ALL_HEADSET, weight: num(args["all-weight"], 5) },
  ];
  if (args["random-tag"]) {
    headsets.push({
      name: "Random", weight: 1, tags: [args["random-tag"]], stopGradient: true,
    });
  }

  const cfg: TrainConfig = {
    steps: num(args.steps, 2000),
    batchSize: num(args.batch, 16),
    lr: num(args.lr, 0.0005),
    seed: num(args.seed, 7),
    headsets,
  };
  const width = num(args.width, 32);
  const depth = num(args.depth, 2);
  const model = initModel(width, depth, headsets.map((h) => h.name), new Rng(cfg.seed));

  const datasets = new Map(
    headsets.map((h) => [h.name, forTags(split.train, h.tags)] as const),
  );
  for (const [name, data] of datasets) {
    console.log(`headset ${name}: ${data.length} examples`);
  }

  const saliencyEvery = num(args["saliency-every"], Math.max(1, Math.floor(cfg.steps / 10)));
  const probePool = split.validation.length ? split.validation : split.train;
  const probeRng = new Rng(cfg.seed + 1);
  const probe = sampleBatch(probePool, Math.min(32, probePool.length), probeRng);
  const snapshots: SaliencySnapshot[] = [snapshot(model, probe, TOP_HEADSET, 0)];

  const started = Date.now();
  train(model, datasets, cfg, (log) => {
    if ((log.step + 1) % saliencyEvery === 0) {
      snapshots.push(snapshot(model, probe, TOP_HEADSET, log.step + 1));
    }
    if ((log.step + 1) % Math.max(1, Math.floor(cfg.steps / 20)) === 0) {
      console.log(`step ${log.step + 1}/${cfg.steps} [${log.headset}] ` +
        `loss ${log.loss.toFixed(4)} acc ${(100 * log.accuracy).toFixed(1)}%`);
    }
  });
  console.log(`trained ${cfg.steps} steps in ${((Date.now() - started) / 1000).toFixed(1)}s`);

  fs.mkdirSync(args.out, { recursive: true });
  const weightsPath = path.join(args.out, "toy.pnbw");
  exportWeights(model, weightsPath);
  const fixturesPath = path.join(args.out, "fixtures.json");
  writeFixtures(model, records, fixturesPath, "toy.pnbw", num(args.fixtures, 64));
  const parity = verifyParity(weightsPath, fixturesPath);
  console.log(`exported ${weightsPath} (reload parity ${parity.toExponential(2)})`);

  fs.writeFileSync(
    path.join(args.out, "saliency.json"),
    JSON.stringify(buildReport(snapshots), null, 1),
  );

  const summary = {
    steps: cfg.steps,
    width, depth,
    topTag,
    trainAccuracy: Object.fromEntries(
      headsets.map((h) => [h.name, accuracy(model, datasets.get(h.name)!, h.name)]),
    ),
    validationAccuracy: Object.fromEntries(
      headsets.map((h) => [h.name, accuracy(model, forTags(split.validation, h.tags), h.name)]),
    ),
    winnerAccuracy: winnerAccuracy(model, probePool),
  };
  fs.writeFileSync(path.join(args.out, "summary.json"), JSON.stringify(summary, null, 1));
  for (const [name, acc] of Object.entries(summary.validationAccuracy)) {
    console.log(`validation top-1 [${name}]: ${(100 * (acc as number)).toFixed(1)}%`);
  }
  return 0;
}

process.exit(main());
