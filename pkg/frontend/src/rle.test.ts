import { describe, expect, it } from "vitest";

import { decodeRuns, encodeRuns } from "./rle.js";

describe("decodeRuns", () => {
  it("empty runs give an all-zero slice", () => {
    expect([...decodeRuns([], 8)]).toEqual([0, 0, 0, 0, 0, 0, 0, 0]);
  });

  it("a single full run fills the slice", () => {
    expect([...decodeRuns([[0, 6]], 6)]).toEqual([1, 1, 1, 1, 1, 1]);
  });

  it("decodes disjoint segments", () => {
    expect([...decodeRuns([[1, 2], [5, 1]], 8)]).toEqual([0, 1, 1, 0, 0, 1, 0, 0]);
  });
});

describe("round trip", () => {
  it("decode(encode(bits)) == bits for random masks", () => {
    let seed = 1234;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) % 2 ** 31;
      return seed / 2 ** 31;
    };
    for (let trial = 0; trial < 20; trial++) {
      const bits = new Uint8Array(256);
      for (let i = 0; i < bits.length; i++) bits[i] = rand() < 0.3 ? 1 : 0;
      const runs = encodeRuns(bits);
      expect([...decodeRuns(runs, bits.length)]).toEqual([...bits]);
      for (const [start, len] of runs) {
        expect(len).toBeGreaterThan(0);
        expect(start + len).toBeLessThanOrEqual(bits.length);
      }
    }
  });
});
