/** Embedding vector file: u32 dimension header, then little-endian float32s. */

import { FormatError } from "./errors.js";

export function l2Normalize(vec: Float64Array): Float64Array {
  let sq = 0;
  for (const v of vec) sq += v * v;
  const norm = Math.sqrt(sq);
  if (norm < 1e-12) throw new FormatError("cannot normalize a zero vector");
  return vec.map((v) => v / norm);
}

export function encodeEmbedding(vec: Float64Array): Buffer {
  const buf = Buffer.alloc(4 + 4 * vec.length);
  buf.writeUInt32LE(vec.length, 0);
  for (let i = 0; i < vec.length; i++) buf.writeFloatLE(vec[i], 4 + 4 * i);
  return buf;
}

export function decodeEmbedding(buf: Buffer): Float64Array {
  if (buf.length < 4) throw new FormatError("truncated embedding header");
  const dim = buf.readUInt32LE(0);
  if (buf.length !== 4 + 4 * dim) {
    throw new FormatError(`embedding size ${buf.length} != expected ${4 + 4 * dim}`);
  }
  const out = new Float64Array(dim);
  for (let i = 0; i < dim; i++) out[i] = buf.readFloatLE(4 + 4 * i);
  return out;
}
