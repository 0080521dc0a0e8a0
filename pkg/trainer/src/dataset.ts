/**
 * Turns raw synopsis records into training-ready examples and carves the
 * train/validation split.  Split membership is a pure function of the game
 * identifier and a salt, so re-extraction never shuffles games across the
 * boundary.
 */

import { ExampleRecord } from "./records";
import { planesToInput } from "./model";
import { Rng } from "./rng";

export interface Prepared {
  input: Float32Array; // 104*64 floats, planes already unpacked
  legal: Int32Array;
  labelPos: number; // position of the taken action inside legal
  valueTarget: number; // +1 perspective win, -1 loss
  soonWin: number;
  soonLose: number;
  counts: Float32Array; // 12 true piece counts
  gameId: string;
  tag: string;
}

/** FNV-1a over salt and id; buckets 0..9, bucket 0 is validation. */
export function splitBucket(gameId: string, salt: string): number {
  const text = `${salt}:${gameId}`;
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h % 10;
}

export function prepare(record: ExampleRecord): Prepared {
  let labelPos = -1;
  for (let i = 0; i < record.legal.length; i++) {
    if (record.legal[i] === record.action) {
      labelPos = i;
      break;
    }
  }
  if (labelPos < 0) {
    throw new Error(`action ${record.action} missing from its legal list`);
  }
  return {
    input: planesToInput(record.planes),
    legal: record.legal,
    labelPos,
    valueTarget: record.winner ? 1 : -1,
    soonWin: record.soonWin,
    soonLose: record.soonLose,
    counts: Float32Array.from(record.pieceCounts),
    gameId: record.gameId,
    tag: record.tag,
  };
}

export interface Split {
  train: Prepared[];
  validation: Prepared[];
}

export function splitExamples(records: ExampleRecord[], salt: string): Split {
  const train: Prepared[] = [];
  const validation: Prepared[] = [];
  for (const record of records) {
    const target = splitBucket(record.gameId, salt) === 0 ? validation : train;
    target.push(prepare(record));
  }
  return { train, validation };
}

/** Examples visible to a headset: all of them, or only the listed tags. */
export function forTags(examples: Prepared[], tags?: string[]): Prepared[] {
  if (!tags) return examples;
  const wanted = new Set(tags);
  return examples.filter((e) => wanted.has(e.tag));
}

export function sampleBatch(examples: Prepared[], size: number, rng: Rng): Prepared[] {
  const batch: Prepared[] = [];
  for (let i = 0; i < size; i++) batch.push(examples[rng.int(examples.length)]);
  return batch;
}
