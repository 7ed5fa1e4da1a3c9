import { describe, expect, it } from "vitest";

import { defaultIntrinsics, liftDepth, liftPointMap } from "../src/backproject.js";
import { EmptyMask } from "../src/errors.js";
import { farthestPointSample } from "../src/fps.js";
import { FloatMap } from "../src/netpbm.js";
import { mulberry32 } from "../src/rng.js";

function depthMap(width: number, height: number, fill: (x: number, y: number) => number): FloatMap {
  const data = new Float32Array(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) data[y * width + x] = fill(x, y);
  }
  return { width, height, channels: 1, data };
}

function fullMask(width: number, height: number) {
  return { width, height, data: new Uint8Array(width * height).fill(255) };
}

describe("back-projection", () => {
  it("recovers synthetic pinhole geometry", () => {
    // project known 3D points through known intrinsics, then lift back
    const k = { fx: 50, fy: 40, cx: 4.5, cy: 3.5 };
    const width = 10, height = 8;
    const depth = depthMap(width, height, (x, y) => 1.0 + 0.05 * x + 0.02 * y);
    const lifted = liftDepth(depth, fullMask(width, height), k);
    expect(lifted.pixels.length).toBe(width * height);
    for (let i = 0; i < lifted.pixels.length; i++) {
      const pix = lifted.pixels[i];
      const x = pix % width, y = Math.floor(pix / width);
      const z = depth.data[pix];
      expect(lifted.points[3 * i + 2]).toBeCloseTo(z, 6);
      expect(lifted.points[3 * i]).toBeCloseTo(((x - k.cx) / k.fx) * z, 10);
      expect(lifted.points[3 * i + 1]).toBeCloseTo(((y - k.cy) / k.fy) * z, 10);
    }
  });

  it("skips invalid depth and respects the mask", () => {
    const depth = depthMap(4, 2, (x) => (x === 0 ? -1 : x === 1 ? NaN : 2.0));
    const mask = { width: 4, height: 2, data: Uint8Array.from([255, 255, 255, 0, 255, 255, 255, 0]) };
    const lifted = liftDepth(depth, mask, defaultIntrinsics(4, 2));
    expect(Array.from(lifted.pixels)).toEqual([2, 6]);
  });

  it("raises EmptyMask when nothing survives", () => {
    const depth = depthMap(3, 3, () => 1.0);
    const mask = { width: 3, height: 3, data: new Uint8Array(9) };
    expect(() => liftDepth(depth, mask, defaultIntrinsics(3, 3))).toThrow(EmptyMask);
  });

  it("lifts point maps verbatim", () => {
    const data = new Float32Array(2 * 2 * 3);
    data.set([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]);
    const pm: FloatMap = { width: 2, height: 2, channels: 3, data };
    const mask = { width: 2, height: 2, data: Uint8Array.from([255, 0, 0, 255]) };
    const lifted = liftPointMap(pm, mask);
    expect(Array.from(lifted.points)).toEqual([1, 2, 3, 10, 11, 12]);
  });
});

describe("farthest-point sampling", () => {
  it("is deterministic and starts at index 0", () => {
    const rand = mulberry32(3);
    const pts = Float64Array.from({ length: 300 }, () => rand());
    const a = farthestPointSample(pts, 20);
    const b = farthestPointSample(pts, 20);
    expect(Array.from(a)).toEqual(Array.from(b));
    expect(a[0]).toBe(0);
    expect(new Set(a).size).toBe(20);
  });

  it("returns everything when k >= n", () => {
    const pts = Float64Array.from([0, 0, 0, 1, 1, 1]);
    expect(Array.from(farthestPointSample(pts, 10))).toEqual([0, 1]);
  });

  it("picks spread-out points on a line", () => {
    // 11 points on the x axis: first picks must hit both ends
    const pts = new Float64Array(33);
    for (let i = 0; i <= 10; i++) pts[3 * i] = i / 10;
    const picks = farthestPointSample(pts, 3);
    expect(Array.from(picks)).toEqual([0, 10, 5]);
  });
});
