/** Lift masked pixels to 3D, from either a depth map or a point map. */

import { FloatMap, GrayImage } from "./netpbm.js";
import { EmptyMask } from "./errors.js";

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

export function defaultIntrinsics(width: number, height: number): Intrinsics {
  const f = Math.max(width, height);
  return { fx: f, fy: f, cx: (width - 1) / 2, cy: (height - 1) / 2 };
}

export interface LiftedPixels {
  /** n*3 */
  points: Float64Array;
  /** flat pixel index (y*width + x) per point */
  pixels: Int32Array;
}

/** Pinhole back-projection of masked pixels with finite positive depth. */
export function liftDepth(depth: FloatMap, mask: GrayImage, k: Intrinsics): LiftedPixels {
  if (depth.channels !== 1) throw new Error("liftDepth expects a 1-channel map");
  const pts: number[] = [];
  const pix: number[] = [];
  for (let y = 0; y < depth.height; y++) {
    for (let x = 0; x < depth.width; x++) {
      const idx = y * depth.width + x;
      if (mask.data[idx] === 0) continue;
      const z = depth.data[idx];
      if (!Number.isFinite(z) || z <= 0) continue;
      pts.push(((x - k.cx) / k.fx) * z, ((y - k.cy) / k.fy) * z, z);
      pix.push(idx);
    }
  }
  if (!pix.length) throw new EmptyMask("mask selects no pixels with valid depth");
  return { points: Float64Array.from(pts), pixels: Int32Array.from(pix) };
}

/** Take 3D points directly from a 3-channel point map. */
export function liftPointMap(pm: FloatMap, mask: GrayImage): LiftedPixels {
  if (pm.channels !== 3) throw new Error("liftPointMap expects a 3-channel map");
  const pts: number[] = [];
  const pix: number[] = [];
  for (let y = 0; y < pm.height; y++) {
    for (let x = 0; x < pm.width; x++) {
      const idx = y * pm.width + x;
      if (mask.data[idx] === 0) continue;
      const px = pm.data[3 * idx];
      const py = pm.data[3 * idx + 1];
      const pz = pm.data[3 * idx + 2];
      if (![px, py, pz].every(Number.isFinite)) continue;
      pts.push(px, py, pz);
      pix.push(idx);
    }
  }
  if (!pix.length) throw new EmptyMask("mask selects no pixels with valid 3D points");
  return { points: Float64Array.from(pts), pixels: Int32Array.from(pix) };
}
