/**
 * Weight export plus the parity fixtures that ride along with it.  The
 * fixtures pin this trainer's forward outputs on a handful of synopses so
 * the engine can verify, after loading the exported file, that the two
 * implementations agree to float tolerance.
 */

import * as fs from "fs";
import { Tape } from "./tensor";
import {
  Model, actionOffset, batchInput, exportTensors, forward, modelFromTensors,
} from "./model";
import { ExampleRecord, readWeights, writeWeights } from "./records";

export interface Fixture {
  headset: string;
  planes: string[]; // 104 u64 masks as decimal strings
  legal: number[];
  policy: number[];
  value: number;
  soon_win: number;
  soon_lose: number;
  piece_counts: number[];
}

export interface FixtureFile {
  weights: string; // file name of the weight file the outputs came from
  fixtures: Fixture[];
}

export function exportWeights(model: Model, path: string): void {
  writeWeights(path, exportTensors(model));
}

function planeStrings(planes: Uint8Array): string[] {
  const out: string[] = [];
  for (let p = 0; p < 104; p++) {
    let mask = 0n;
    for (let r = 7; r >= 0; r--) mask = (mask << 8n) | BigInt(planes[p * 8 + r]);
    out.push(mask.toString());
  }
  return out;
}

/** One forward evaluation in the engine's output terms. */
function evaluateOne(model: Model, record: ExampleRecord, headset: string): Fixture {
  const tape = new Tape();
  const x = batchInput([record.planes]);
  const out = forward(tape, model, x, headset);

  const offsets = Int32Array.from(record.legal, (idx) => actionOffset(0, idx));
  const logits = new Float64Array(offsets.length);
  let max = -Infinity;
  for (let k = 0; k < offsets.length; k++) {
    logits[k] = offsets[k] < 0 ? out.passLogits.data[0] : out.squareLogits.data[offsets[k]];
    max = Math.max(max, logits[k]);
  }
  let sum = 0;
  const policy = new Array<number>(offsets.length);
  for (let k = 0; k < offsets.length; k++) {
    policy[k] = Math.exp(logits[k] - max);
    sum += policy[k];
  }
  for (let k = 0; k < offsets.length; k++) policy[k] /= sum;

  return {
    headset,
    planes: planeStrings(record.planes),
    legal: Array.from(record.legal),
    policy,
    value: out.values.data[0],
    soon_win: 1 / (1 + Math.exp(-out.soonLogits.data[0])),
    soon_lose: 1 / (1 + Math.exp(-out.soonLogits.data[1])),
    piece_counts: Array.from(out.countPreds.data),
  };
}

/** Evaluate up to `count` records, cycling headsets, and write the JSON. */
export function writeFixtures(
  model: Model,
  records: ExampleRecord[],
  path: string,
  weightsName: string,
  count = 64,
): FixtureFile {
  const headsets = [...model.heads.keys()];
  const fixtures: Fixture[] = [];
  for (let i = 0; i < Math.min(count, records.length); i++) {
    fixtures.push(evaluateOne(model, records[i], headsets[i % headsets.length]));
  }
  const file: FixtureFile = { weights: weightsName, fixtures };
  fs.writeFileSync(path, JSON.stringify(file, null, 1));
  return file;
}

function fixtureRecord(f: Fixture): ExampleRecord {
  const planes = new Uint8Array(104 * 8);
  f.planes.forEach((text, p) => {
    let mask = BigInt(text);
    for (let r = 0; r < 8; r++) {
      planes[p * 8 + r] = Number(mask & 0xffn);
      mask >>= 8n;
    }
  });
  return {
    planes, perspective: 0, action: f.legal[0], winner: 0, soonWin: 0,
    soonLose: 0, pieceCounts: new Uint8Array(12),
    legal: Int32Array.from(f.legal), gameId: "", tag: "",
  };
}

/**
 * Reload the weight file, replay every fixture, and return the largest
 * absolute difference across all recorded outputs.
 */
export function verifyParity(weightsPath: string, fixturesPath: string): number {
  const model = modelFromTensors(readWeights(weightsPath));
  const file: FixtureFile = JSON.parse(fs.readFileSync(fixturesPath, "utf8"));
  let worst = 0;
  const check = (a: number, b: number) => {
    worst = Math.max(worst, Math.abs(a - b));
  };
  for (const fixture of file.fixtures) {
    const fresh = evaluateOne(model, fixtureRecord(fixture), fixture.headset);
    fixture.policy.forEach((p, k) => check(p, fresh.policy[k]));
    check(fixture.value, fresh.value);
    check(fixture.soon_win, fresh.soon_win);
    check(fixture.soon_lose, fresh.soon_lose);
    fixture.piece_counts.forEach((c, k) => check(c, fresh.piece_counts[k]));
  }
  return worst;
}
