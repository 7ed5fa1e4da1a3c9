/** Farthest-point subsampling keeps clouds tractable for the alignment
 * inner loops. Deterministic: starts at index 0, ties keep the lowest
 * index. O(n * k).
 */

export function farthestPointSample(points: Float64Array, k: number): Int32Array {
  const n = points.length / 3;
  if (k >= n) return Int32Array.from({ length: n }, (_, i) => i);
  const chosen = new Int32Array(k);
  const minSq = new Float64Array(n).fill(Infinity);
  let current = 0;
  chosen[0] = 0;
  for (let round = 1; round < k; round++) {
    const cx = points[3 * current];
    const cy = points[3 * current + 1];
    const cz = points[3 * current + 2];
    let best = -1;
    let bestSq = -1;
    for (let i = 0; i < n; i++) {
      const dx = points[3 * i] - cx;
      const dy = points[3 * i + 1] - cy;
      const dz = points[3 * i + 2] - cz;
      const sq = dx * dx + dy * dy + dz * dz;
      if (sq < minSq[i]) minSq[i] = sq;
      if (minSq[i] > bestSq) {
        bestSq = minSq[i];
        best = i;
      }
    }
    chosen[round] = best;
    current = best;
  }
  return chosen;
}
