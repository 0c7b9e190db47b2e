/** Run-length coding of mask slices, matching the service wire format. */

import type { Run } from "./api.js";

/** Expand [[start, len], ...] into a 0/1 byte array of the given length. */
export function decodeRuns(runs: readonly Run[], length: number): Uint8Array {
  const bits = new Uint8Array(length);
  for (const [start, len] of runs) {
    bits.fill(1, start, start + len);
  }
  return bits;
}

/** Inverse of decodeRuns; the tests' round-trip oracle. */
export function encodeRuns(bits: Uint8Array): Run[] {
  const runs: Run[] = [];
  let i = 0;
  while (i < bits.length) {
    if (bits[i]) {
      const start = i;
      while (i < bits.length && bits[i]) i++;
      runs.push([start, i - start]);
    } else {
      i++;
    }
  }
  return runs;
}
