/** Task-string embedding backends.
 *
 * The offline "hashed" backend folds character n-grams and whole words
 * into a fixed-width signed-hash vector and L2-normalizes it. It is
 * deterministic and dimension-stable but carries no semantics beyond
 * surface overlap; a real text encoder ("clip") raises ModelUnavailable
 * here since no weights or runtime exist in this environment.
 */

import { l2Normalize } from "./embedding.js";
import { ModelUnavailable } from "./errors.js";

export interface TextBackend {
  readonly name: string;
  readonly dim: number;
  /** Unit-norm embedding of a task string. */
  embed(task: string): Float64Array;
}

function fnv1a(text: string, salt: number): number {
  let h = (0x811c9dc5 ^ salt) >>> 0;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h;
}

export class HashedNgramBackend implements TextBackend {
  readonly name = "hashed";
  readonly dim: number;

  constructor(dim = 512) {
    if (dim < 2) throw new Error("embedding dim must be >= 2");
    this.dim = dim;
  }

  embed(task: string): Float64Array {
    const text = task.trim().toLowerCase();
    if (!text) throw new Error("task string is empty");
    const padded = ` ${text} `;
    const tokens: string[] = text.split(/\s+/);
    for (const n of [3, 4, 5]) {
      for (let i = 0; i + n <= padded.length; i++) {
        tokens.push(padded.slice(i, i + n));
      }
    }
    const vec = new Float64Array(this.dim);
    for (const token of tokens) {
      const idx = fnv1a(token, 0) % this.dim;
      const sign = fnv1a(token, 0x9e3779b9) & 1 ? 1.0 : -1.0;
      vec[idx] += sign;
    }
    return l2Normalize(vec);
  }
}

export function createTextBackend(name: string, dim: number): TextBackend {
  if (name === "hashed") return new HashedNgramBackend(dim);
  if (name === "clip") {
    throw new ModelUnavailable(
      "clip text backend needs an encoder runtime with local weights; " +
        "none is available in this environment (use the 'hashed' backend)",
    );
  }
  throw new Error(`unknown text backend '${name}'`);
}
