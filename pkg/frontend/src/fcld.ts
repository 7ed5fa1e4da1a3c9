/** FCLD v1: the primary component's binary feature-cloud format.
 *
 * Little-endian: magic "FCLD", version u32 = 1, point count u64, feature
 * dim u32, then N*3 float32 positions followed by N*D float32 features.
 */

import { FormatError } from "./errors.js";

const MAGIC = "FCLD";
const VERSION = 1;
const HEADER_BYTES = 4 + 4 + 8 + 4;

export interface Cloud {
  /** n*3 */
  points: Float64Array;
  /** n*dim */
  features: Float64Array;
  dim: number;
}

export function encodeFcld(cloud: Cloud): Buffer {
  const n = cloud.points.length / 3;
  if (!Number.isInteger(n) || n < 1) throw new FormatError("points must be n*3 with n >= 1");
  if (cloud.features.length !== n * cloud.dim) {
    throw new FormatError("features length must equal n * dim");
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * n * (3 + cloud.dim));
  buf.write(MAGIC, 0, "latin1");
  buf.writeUInt32LE(VERSION, 4);
  buf.writeBigUInt64LE(BigInt(n), 8);
  buf.writeUInt32LE(cloud.dim, 16);
  let off = HEADER_BYTES;
  for (let k = 0; k < cloud.points.length; k++, off += 4) {
    buf.writeFloatLE(cloud.points[k], off);
  }
  for (let k = 0; k < cloud.features.length; k++, off += 4) {
    buf.writeFloatLE(cloud.features[k], off);
  }
  return buf;
}

export function decodeFcld(buf: Buffer): Cloud {
  if (buf.length < HEADER_BYTES) throw new FormatError("truncated FCLD header");
  if (buf.toString("latin1", 0, 4) !== MAGIC) throw new FormatError("bad FCLD magic");
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) throw new FormatError(`unsupported FCLD version ${version}`);
  const n = Number(buf.readBigUInt64LE(8));
  const dim = buf.readUInt32LE(16);
  const expect = HEADER_BYTES + 4 * n * (3 + dim);
  if (buf.length !== expect) {
    throw new FormatError(`FCLD size ${buf.length} != expected ${expect}`);
  }
  const points = new Float64Array(n * 3);
  const features = new Float64Array(n * dim);
  let off = HEADER_BYTES;
  for (let k = 0; k < points.length; k++, off += 4) points[k] = buf.readFloatLE(off);
  for (let k = 0; k < features.length; k++, off += 4) features[k] = buf.readFloatLE(off);
  return { points, features, dim };
}
