/** Readers for the netpbm family used as extractor inputs.
 *
 * Images are binary PPM (P6, maxval 255), masks binary PGM (P5, maxval
 * 255, nonzero = object), and depth / point maps are PFM ("Pf" single
 * channel depth in meters, "PF" three-channel XYZ point map). PFM rows
 * are stored bottom-up per the format; readers return top-down data.
 */

import { FormatError } from "./errors.js";

export interface RgbImage {
  width: number;
  height: number;
  /** h*w*3 interleaved, [0, 1] */
  data: Float64Array;
}

export interface GrayImage {
  width: number;
  height: number;
  /** h*w */
  data: Uint8Array;
}

export interface FloatMap {
  width: number;
  height: number;
  channels: 1 | 3;
  /** h*w*channels interleaved, row 0 = top */
  data: Float32Array;
}

function parseHeader(buf: Buffer, magic: string, fields: number): { values: number[]; offset: number } {
  if (buf.length < 2 || buf.toString("latin1", 0, 2) !== magic) {
    throw new FormatError(`expected ${magic} header`);
  }
  const values: number[] = [];
  let i = 2;
  let token = "";
  let inComment = false;
  while (values.length < fields) {
    if (i >= buf.length) throw new FormatError(`truncated ${magic} header`);
    const ch = String.fromCharCode(buf[i]);
    i += 1;
    if (inComment) {
      if (ch === "\n") inComment = false;
      continue;
    }
    if (ch === "#") {
      inComment = true;
      continue;
    }
    if (/\s/.test(ch)) {
      if (token.length) {
        const v = Number(token);
        if (!Number.isFinite(v)) throw new FormatError(`bad ${magic} header token ${token}`);
        values.push(v);
        token = "";
      }
      continue;
    }
    token += ch;
  }
  return { values, offset: i };
}

export function decodePpm(buf: Buffer): RgbImage {
  const { values, offset } = parseHeader(buf, "P6", 3);
  const [width, height, maxval] = values;
  if (maxval !== 255) throw new FormatError(`only maxval 255 supported, got ${maxval}`);
  const n = width * height * 3;
  if (buf.length < offset + n) throw new FormatError("truncated P6 pixel data");
  const data = new Float64Array(n);
  for (let k = 0; k < n; k++) data[k] = buf[offset + k] / 255.0;
  return { width, height, data };
}

export function decodePgm(buf: Buffer): GrayImage {
  const { values, offset } = parseHeader(buf, "P5", 3);
  const [width, height, maxval] = values;
  if (maxval !== 255) throw new FormatError(`only maxval 255 supported, got ${maxval}`);
  const n = width * height;
  if (buf.length < offset + n) throw new FormatError("truncated P5 pixel data");
  return { width, height, data: Uint8Array.prototype.slice.call(buf, offset, offset + n) };
}

export function decodePfm(buf: Buffer): FloatMap {
  const head = buf.toString("latin1", 0, 2);
  if (head !== "PF" && head !== "Pf") throw new FormatError("expected PF/Pf header");
  const channels = head === "PF" ? 3 : 1;
  const { values, offset } = parseHeader(buf, head, 3);
  const [width, height, scale] = values;
  const littleEndian = scale < 0;
  const n = width * height * channels;
  if (buf.length < offset + 4 * n) throw new FormatError("truncated PFM data");
  const view = new DataView(buf.buffer, buf.byteOffset + offset, 4 * n);
  const data = new Float32Array(n);
  // PFM scanlines run bottom-to-top; flip to top-down on read
  for (let y = 0; y < height; y++) {
    const srcRow = height - 1 - y;
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < channels; c++) {
        const src = (srcRow * width + x) * channels + c;
        data[(y * width + x) * channels + c] = view.getFloat32(4 * src, littleEndian);
      }
    }
  }
  return { width, height, channels, data };
}

/** Test helper: encode a top-down float map as PFM (little-endian). */
export function encodePfm(map: FloatMap): Buffer {
  const magic = map.channels === 3 ? "PF" : "Pf";
  const header = Buffer.from(`${magic}\n${map.width} ${map.height}\n-1.0\n`, "latin1");
  const body = Buffer.alloc(4 * map.data.length);
  for (let y = 0; y < map.height; y++) {
    const dstRow = map.height - 1 - y;
    for (let x = 0; x < map.width; x++) {
      for (let c = 0; c < map.channels; c++) {
        const src = (y * map.width + x) * map.channels + c;
        const dst = (dstRow * map.width + x) * map.channels + c;
        body.writeFloatLE(map.data[src], 4 * dst);
      }
    }
  }
  return Buffer.concat([header, body]);
}

export function encodePpm(img: RgbImage): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, "latin1");
  const body = Buffer.alloc(img.data.length);
  for (let k = 0; k < img.data.length; k++) {
    body[k] = Math.max(0, Math.min(255, Math.round(img.data[k] * 255)));
  }
  return Buffer.concat([header, body]);
}

export function encodePgm(img: GrayImage): Buffer {
  const header = Buffer.from(`P5\n${img.width} ${img.height}\n255\n`, "latin1");
  return Buffer.concat([header, Buffer.from(img.data)]);
}
