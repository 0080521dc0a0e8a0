import { describe, expect, test } from "vitest";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { initModel } from "../src/model";
import { readExamples } from "../src/records";
import { exportWeights, verifyParity, writeFixtures } from "../src/export";
import { Rng } from "../src/rng";

const DATA = path.join(__dirname, "data");

describe("export and parity fixtures", () => {
  const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "export-"));
  const model = initModel(8, 1, ["Top", "All"], new Rng(123));
  const records = readExamples(path.join(DATA, "sample.pnbs"));
  const weightsPath = path.join(tmp, "toy.pnbw");
  const fixturesPath = path.join(tmp, "fixtures.json");

  test("fixtures cycle headsets and cap at the requested count", () => {
    exportWeights(model, weightsPath);
    const file = writeFixtures(model, records, fixturesPath, "toy.pnbw", 10);
    expect(file.fixtures).toHaveLength(10);
    expect(file.fixtures[0].headset).not.toBe(file.fixtures[1].headset);
    for (const f of file.fixtures) {
      expect(f.planes).toHaveLength(104);
      expect(f.policy).toHaveLength(f.legal.length);
      const sum = f.policy.reduce((a, b) => a + b, 0);
      expect(sum).toBeCloseTo(1, 6);
    }
  });

  test("reload reproduces the recorded outputs exactly", () => {
    expect(verifyParity(weightsPath, fixturesPath)).toBe(0);
  });

  test("a corrupted weight file refuses to verify", () => {
    const blob = fs.readFileSync(weightsPath);
    blob[40] ^= 0x01;
    const corrupt = path.join(tmp, "corrupt.pnbw");
    fs.writeFileSync(corrupt, blob);
    expect(() => verifyParity(corrupt, fixturesPath)).toThrow(/checksum/);
  });
});
