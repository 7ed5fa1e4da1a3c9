/** Extraction job: image + mask + depth (or point map) in, FCLD feature
 * cloud + task embedding files + a manifest fragment out. All outputs are
 * in the primary component's formats; the fragment merges via its
 * `ingest --fragment` once a grasp is attached.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { defaultIntrinsics, Intrinsics, liftDepth, liftPointMap } from "./backproject.js";
import { encodeEmbedding } from "./embedding.js";
import { FormatError } from "./errors.js";
import { encodeFcld } from "./fcld.js";
import { createBackend } from "./features.js";
import { farthestPointSample } from "./fps.js";
import { decodePfm, decodePgm, decodePpm } from "./netpbm.js";
import { createTextBackend } from "./textembed.js";

export interface ExtractionJob {
  imagePath: string;
  maskPath: string;
  depthPath: string;
  objectName: string;
  tasks: string[];
  outDir: string;
  backend?: string;
  textBackend?: string;
  featureDim?: number;
  embedDim?: number;
  maxPoints?: number;
  intrinsics?: Partial<Intrinsics>;
}

export interface ExtractionResult {
  cloudPath: string;
  embeddingPaths: string[];
  fragmentPath: string;
  pointCount: number;
  featureDim: number;
  embedDim: number;
}

export const DEFAULT_MAX_POINTS = 8192;

function slug(text: string): string {
  return text.trim().toLowerCase().replace(/[^a-z0-9]+/g, "-").replace(/^-|-$/g, "");
}

export function runExtraction(job: ExtractionJob): ExtractionResult {
  const image = decodePpm(fs.readFileSync(job.imagePath));
  const mask = decodePgm(fs.readFileSync(job.maskPath));
  const depth = decodePfm(fs.readFileSync(job.depthPath));
  if (mask.width !== image.width || mask.height !== image.height) {
    throw new FormatError("mask resolution differs from the image");
  }
  if (depth.width !== image.width || depth.height !== image.height) {
    throw new FormatError("depth/point map resolution differs from the image");
  }

  const lifted = depth.channels === 1
    ? liftDepth(depth, mask, { ...defaultIntrinsics(image.width, image.height), ...job.intrinsics })
    : liftPointMap(depth, mask);

  const backend = createBackend(job.backend ?? "patch", job.featureDim ?? 64);
  const dense = backend.pixelFeatures(image);

  const maxPoints = job.maxPoints ?? DEFAULT_MAX_POINTS;
  const keep = farthestPointSample(lifted.points, maxPoints);
  const n = keep.length;
  const points = new Float64Array(n * 3);
  const features = new Float64Array(n * backend.dim);
  for (let i = 0; i < n; i++) {
    const src = keep[i];
    points.set(lifted.points.subarray(3 * src, 3 * src + 3), 3 * i);
    const pixel = lifted.pixels[src];
    features.set(dense.subarray(pixel * backend.dim, (pixel + 1) * backend.dim), i * backend.dim);
  }

  fs.mkdirSync(job.outDir, { recursive: true });
  const base = slug(job.objectName) || "object";
  const cloudFile = `${base}.fcld`;
  fs.writeFileSync(path.join(job.outDir, cloudFile),
                   encodeFcld({ points, features, dim: backend.dim }));

  const descriptor = new Array(backend.dim).fill(0);
  for (let i = 0; i < n; i++) {
    for (let d = 0; d < backend.dim; d++) descriptor[d] += features[i * backend.dim + d];
  }
  for (let d = 0; d < backend.dim; d++) descriptor[d] /= n;

  const text = createTextBackend(job.textBackend ?? "hashed", job.embedDim ?? 512);
  const embeddingPaths: string[] = [];
  const entries = [];
  for (const task of job.tasks) {
    const embFile = `${base}__${slug(task)}.emb`;
    fs.writeFileSync(path.join(job.outDir, embFile), encodeEmbedding(text.embed(task)));
    embeddingPaths.push(path.join(job.outDir, embFile));
    entries.push({
      object_name: job.objectName,
      task,
      task_embedding_path: embFile,
      cloud_path: cloudFile,
      global_descriptor: descriptor,
      grasp: null,
    });
  }

  const fragment = {
    feature_dim: backend.dim,
    embedding_dim: text.dim,
    entries,
  };
  const fragmentPath = path.join(job.outDir, `${base}__fragment.json`);
  fs.writeFileSync(fragmentPath, JSON.stringify(fragment, null, 2) + "\n");

  return {
    cloudPath: path.join(job.outDir, cloudFile),
    embeddingPaths,
    fragmentPath,
    pointCount: n,
    featureDim: backend.dim,
    embedDim: text.dim,
  };
}
