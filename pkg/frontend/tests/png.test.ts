import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { base64ToBytes, bytesToBase64, decodeGrayPng, encodeGrayPng } from "../src/png.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

function randomImage(width: number, height: number, seed: number) {
  // tiny deterministic LCG so tests never depend on Math.random
  let state = seed >>> 0;
  const next = () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state;
  };
  const data = new Uint8Array(width * height);
  for (let i = 0; i < data.length; i++) data[i] = next() & 0xff;
  return { width, height, data };
}

describe("gray PNG codec", () => {
  it("round-trips random images of assorted sizes", async () => {
    for (const [w, h, seed] of [[1, 1, 1], [3, 5, 2], [64, 64, 3], [17, 9, 4]] as const) {
      const image = randomImage(w, h, seed);
      const decoded = await decodeGrayPng(await encodeGrayPng(image));
      expect(decoded.width).toBe(w);
      expect(decoded.height).toBe(h);
      expect(Array.from(decoded.data)).toEqual(Array.from(image.data));
    }
  });

  it("rejects inconsistent dimensions", async () => {
    await expect(encodeGrayPng({ width: 2, height: 2, data: new Uint8Array(3) })).rejects.toThrow(
      /inconsistent/,
    );
  });

  it("rejects non-PNG bytes", async () => {
    await expect(decodeGrayPng(new TextEncoder().encode("hello"))).rejects.toThrow(/not a PNG/);
  });

  it("decodes the service's sparse labelmap PNG bit-exactly", async () => {
    const expected = JSON.parse(readFileSync(join(FIXTURES, "expected.json"), "utf-8"));
    const image = await decodeGrayPng(new Uint8Array(readFileSync(join(FIXTURES, "sparse.png"))));
    expect(image.width).toBe(expected.width);
    expect(image.height).toBe(expected.height);
    expect(Array.from(image.data)).toEqual(expected.sparse);
  });

  it("decodes the service's dense and boundary PNGs", async () => {
    const expected = JSON.parse(readFileSync(join(FIXTURES, "expected.json"), "utf-8"));
    const dense = await decodeGrayPng(new Uint8Array(readFileSync(join(FIXTURES, "dense.png"))));
    expect(Array.from(dense.data)).toEqual(expected.dense);
    const boundary = await decodeGrayPng(
      new Uint8Array(readFileSync(join(FIXTURES, "boundary.png"))),
    );
    expect(Array.from(boundary.data)).toEqual(expected.boundary);
  });

  it("base64 helpers round-trip", () => {
    const bytes = randomImage(16, 4, 9).data;
    expect(Array.from(base64ToBytes(bytesToBase64(bytes)))).toEqual(Array.from(bytes));
  });
});
