/** Per-pixel dense feature backends.
 *
 * The default "patch" backend is a deterministic local descriptor: color
 * and gradient statistics over a non-overlapping patch grid, projected to
 * the output width by a seeded Gaussian matrix and bilinearly upsampled
 * to pixel resolution before masking, mirroring how transformer patch
 * features are used. It needs no model weights and is exactly
 * reproducible. Vision-transformer backends ("dinov2") need a model
 * runtime plus local weights and raise ModelUnavailable here.
 */

import { ModelUnavailable } from "./errors.js";
import { RgbImage } from "./netpbm.js";
import { gaussianStream } from "./rng.js";

export interface FeatureBackend {
  readonly name: string;
  readonly dim: number;
  /** Dense per-pixel features, h*w*dim interleaved. */
  pixelFeatures(image: RgbImage): Float64Array;
}

const RAW_STATS = 12;
const PROJECTION_SEED = 0x5eed01;

export class PatchStatsBackend implements FeatureBackend {
  readonly name = "patch";
  readonly dim: number;
  readonly patchSize: number;
  private readonly projection: Float64Array; // dim x RAW_STATS

  constructor(dim = 64, patchSize = 8) {
    if (dim < 1 || patchSize < 2) throw new Error("need dim >= 1 and patchSize >= 2");
    this.dim = dim;
    this.patchSize = patchSize;
    const gauss = gaussianStream(PROJECTION_SEED);
    this.projection = new Float64Array(dim * RAW_STATS);
    for (let i = 0; i < this.projection.length; i++) {
      this.projection[i] = gauss() / Math.sqrt(RAW_STATS);
    }
  }

  /** Mean/std of RGB and luminance plus gradient statistics per patch. */
  private patchStats(image: RgbImage): { grid: Float64Array; gw: number; gh: number } {
    const { width: w, height: h, data } = image;
    const p = this.patchSize;
    const gw = Math.ceil(w / p);
    const gh = Math.ceil(h / p);
    const lum = new Float64Array(w * h);
    for (let i = 0; i < w * h; i++) {
      lum[i] = 0.299 * data[3 * i] + 0.587 * data[3 * i + 1] + 0.114 * data[3 * i + 2];
    }
    const grid = new Float64Array(gw * gh * RAW_STATS);
    for (let gy = 0; gy < gh; gy++) {
      for (let gx = 0; gx < gw; gx++) {
        const x0 = gx * p, x1 = Math.min(w, x0 + p);
        const y0 = gy * p, y1 = Math.min(h, y0 + p);
        const count = (x1 - x0) * (y1 - y0);
        const sums = new Float64Array(4);
        const sqs = new Float64Array(4);
        let gxSum = 0, gySum = 0, gxAbs = 0, gyAbs = 0;
        for (let y = y0; y < y1; y++) {
          for (let x = x0; x < x1; x++) {
            const i = y * w + x;
            for (let c = 0; c < 3; c++) {
              const v = data[3 * i + c];
              sums[c] += v;
              sqs[c] += v * v;
            }
            sums[3] += lum[i];
            sqs[3] += lum[i] * lum[i];
            const dx = lum[y * w + Math.min(w - 1, x + 1)] - lum[y * w + Math.max(0, x - 1)];
            const dy = lum[Math.min(h - 1, y + 1) * w + x] - lum[Math.max(0, y - 1) * w + x];
            gxSum += dx;
            gySum += dy;
            gxAbs += Math.abs(dx);
            gyAbs += Math.abs(dy);
          }
        }
        const base = (gy * gw + gx) * RAW_STATS;
        for (let c = 0; c < 4; c++) {
          const mean = sums[c] / count;
          grid[base + c] = mean;
          grid[base + 4 + c] = Math.sqrt(Math.max(0, sqs[c] / count - mean * mean));
        }
        grid[base + 8] = gxSum / count;
        grid[base + 9] = gySum / count;
        grid[base + 10] = gxAbs / count;
        grid[base + 11] = gyAbs / count;
      }
    }
    return { grid, gw, gh };
  }

  pixelFeatures(image: RgbImage): Float64Array {
    const { width: w, height: h } = image;
    const p = this.patchSize;
    const { grid, gw, gh } = this.patchStats(image);

    // project patch stats to the output width first (cheaper than per pixel)
    const projected = new Float64Array(gw * gh * this.dim);
    for (let g = 0; g < gw * gh; g++) {
      for (let d = 0; d < this.dim; d++) {
        let acc = 0;
        for (let s = 0; s < RAW_STATS; s++) {
          acc += this.projection[d * RAW_STATS + s] * grid[g * RAW_STATS + s];
        }
        projected[g * this.dim + d] = acc;
      }
    }

    const out = new Float64Array(w * h * this.dim);
    const center = (p - 1) / 2;
    for (let y = 0; y < h; y++) {
      const fy = Math.min(gh - 1, Math.max(0, (y - center) / p));
      const y0 = Math.floor(fy), y1 = Math.min(gh - 1, y0 + 1);
      const wy = fy - y0;
      for (let x = 0; x < w; x++) {
        const fx = Math.min(gw - 1, Math.max(0, (x - center) / p));
        const x0 = Math.floor(fx), x1 = Math.min(gw - 1, x0 + 1);
        const wx = fx - x0;
        const o = (y * w + x) * this.dim;
        const g00 = (y0 * gw + x0) * this.dim;
        const g01 = (y0 * gw + x1) * this.dim;
        const g10 = (y1 * gw + x0) * this.dim;
        const g11 = (y1 * gw + x1) * this.dim;
        for (let d = 0; d < this.dim; d++) {
          out[o + d] =
            (1 - wy) * ((1 - wx) * projected[g00 + d] + wx * projected[g01 + d]) +
            wy * ((1 - wx) * projected[g10 + d] + wx * projected[g11 + d]);
        }
      }
    }
    return out;
  }
}

export function createBackend(name: string, dim: number): FeatureBackend {
  if (name === "patch") return new PatchStatsBackend(dim);
  if (name === "dinov2") {
    throw new ModelUnavailable(
      "dinov2 backend needs a vision-transformer runtime with local weights; " +
        "none is available in this environment (use the 'patch' backend)",
    );
  }
  throw new Error(`unknown feature backend '${name}'`);
}
