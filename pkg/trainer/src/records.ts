/**
 * Binary IO shared with the engine: synopsis example records in, weight
 * files out.  Byte layouts mirror the engine's serialisers exactly so the
 * two sides can exchange files without translation steps.
 */

import * as fs from "fs";

export const EXAMPLE_MAGIC = "PNBS1";
export const WEIGHTS_MAGIC = "PNBW1";
export const NUM_PLANES = 104;

export interface ExampleRecord {
  /** 104 planes as raw little-endian u64 bytes: byte r of plane p is rank r. */
  planes: Uint8Array;
  perspective: number;
  action: number;
  winner: number;
  soonWin: number;
  soonLose: number;
  pieceCounts: Uint8Array;
  legal: Int32Array;
  gameId: string;
  tag: string;
}

export function parseExamples(blob: Buffer): ExampleRecord[] {
  const out: ExampleRecord[] = [];
  let pos = 0;
  while (pos < blob.length) {
    if (blob.toString("latin1", pos, pos + 5) !== EXAMPLE_MAGIC) {
      throw new Error(`bad synopsis record magic at byte ${pos}`);
    }
    pos += 5;
    const planes = Uint8Array.prototype.slice.call(blob, pos, pos + NUM_PLANES * 8);
    pos += NUM_PLANES * 8;
    const perspective = blob.readUInt8(pos);
    const action = blob.readUInt16LE(pos + 1);
    const winner = blob.readUInt8(pos + 3);
    const soonWin = blob.readUInt8(pos + 4);
    const soonLose = blob.readUInt8(pos + 5);
    pos += 6;
    const pieceCounts = Uint8Array.prototype.slice.call(blob, pos, pos + 12);
    pos += 12;
    const nLegal = blob.readUInt16LE(pos);
    pos += 2;
    const legal = new Int32Array(nLegal);
    for (let i = 0; i < nLegal; i++) legal[i] = blob.readUInt16LE(pos + 2 * i);
    pos += nLegal * 2;
    const gidLen = blob.readUInt8(pos);
    const gameId = blob.toString("utf8", pos + 1, pos + 1 + gidLen);
    pos += 1 + gidLen;
    const tagLen = blob.readUInt8(pos);
    const tag = blob.toString("utf8", pos + 1, pos + 1 + tagLen);
    pos += 1 + tagLen;
    out.push({
      planes, perspective, action, winner, soonWin, soonLose,
      pieceCounts, legal, gameId, tag,
    });
  }
  return out;
}

export function readExamples(path: string): ExampleRecord[] {
  return parseExamples(fs.readFileSync(path));
}

// ---------------------------------------------------------------------------
// CRC32, zlib polynomial

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let i = 0; i < 256; i++) {
    let c = i;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[i] = c >>> 0;
  }
  return table;
})();

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

// ---------------------------------------------------------------------------
// Weight files

export interface NamedTensor {
  name: string;
  shape: number[];
  data: Float32Array | Float64Array;
}

export function serializeWeights(tensors: NamedTensor[]): Buffer {
  const chunks: Buffer[] = [Buffer.from(WEIGHTS_MAGIC, "latin1")];
  const count = Buffer.alloc(4);
  count.writeUInt32LE(tensors.length, 0);
  chunks.push(count);
  for (const t of tensors) {
    const name = Buffer.from(t.name, "utf8");
    const head = Buffer.alloc(2 + name.length + 1 + 4 * t.shape.length);
    head.writeUInt16LE(name.length, 0);
    name.copy(head, 2);
    head.writeUInt8(t.shape.length, 2 + name.length);
    t.shape.forEach((dim, i) => head.writeUInt32LE(dim, 3 + name.length + 4 * i));
    chunks.push(head);
    const data = Buffer.alloc(4 * t.data.length);
    for (let i = 0; i < t.data.length; i++) data.writeFloatLE(t.data[i], 4 * i);
    chunks.push(data);
  }
  const body = Buffer.concat(chunks);
  const tail = Buffer.alloc(4);
  tail.writeUInt32LE(crc32(body), 0);
  return Buffer.concat([body, tail]);
}

export function writeWeights(path: string, tensors: NamedTensor[]): void {
  fs.writeFileSync(path, serializeWeights(tensors));
}

export function parseWeights(blob: Buffer): NamedTensor[] {
  if (blob.length < 13 || blob.toString("latin1", 0, 5) !== WEIGHTS_MAGIC) {
    throw new Error("not a weight file");
  }
  const stored = blob.readUInt32LE(blob.length - 4);
  if (crc32(blob.subarray(0, blob.length - 4)) !== stored) {
    throw new Error("weight file checksum mismatch");
  }
  const count = blob.readUInt32LE(5);
  const tensors: NamedTensor[] = [];
  let pos = 9;
  for (let t = 0; t < count; t++) {
    const nameLen = blob.readUInt16LE(pos);
    const name = blob.toString("utf8", pos + 2, pos + 2 + nameLen);
    pos += 2 + nameLen;
    const rank = blob.readUInt8(pos);
    pos += 1;
    const shape: number[] = [];
    for (let i = 0; i < rank; i++) shape.push(blob.readUInt32LE(pos + 4 * i));
    pos += 4 * rank;
    const size = shape.reduce((a, b) => a * b, 1);
    const data = new Float32Array(size);
    for (let i = 0; i < size; i++) data[i] = blob.readFloatLE(pos + 4 * i);
    pos += 4 * size;
    tensors.push({ name, shape, data });
  }
  if (pos !== blob.length - 4) throw new Error("trailing bytes in weight file");
  return tensors;
}

export function readWeights(path: string): NamedTensor[] {
  return parseWeights(fs.readFileSync(path));
}
