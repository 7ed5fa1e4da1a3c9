/** `extract` CLI: images + masks + depth in, graspmem-format files out.
 *
 *   extract --image F.ppm --mask F.pgm --depth F.pfm --object NAME \
 *     --out DIR [--tasks "t1,t2"] [--feature-dim D] [--embed-dim E] \
 *     [--backend patch|dinov2] [--text-backend hashed|clip] \
 *     [--max-points N] [--fx X --fy X --cx X --cy X]
 *
 * A 1-channel PFM is a depth map (pinhole intrinsics apply; sensible
 * defaults are derived from the resolution); a 3-channel PFM is taken as
 * a per-pixel XYZ point map and intrinsics are ignored.
 */

import { EmptyMask, FormatError, ModelUnavailable } from "./errors.js";
import { ExtractionJob, runExtraction } from "./extract.js";

const USAGE =
  "usage: extract --image F --mask F --depth F --object NAME --out DIR " +
  "[--tasks \"t1,t2\"] [--feature-dim D] [--embed-dim E] [--backend NAME] " +
  "[--text-backend NAME] [--max-points N] [--fx X] [--fy X] [--cx X] [--cy X]";

function parseArgs(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  let i = 0;
  if (argv[0] === "extract") i = 1;
  for (; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--")) throw new Error(`expected a flag, got '${key}'`);
    if (i + 1 >= argv.length) throw new Error(`flag ${key} needs a value`);
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

function need(flags: Map<string, string>, key: string): string {
  const value = flags.get(key);
  if (value === undefined) throw new Error(`missing required --${key}`);
  return value;
}

export function main(argv: string[]): number {
  if (argv.includes("--help") || argv.includes("-h") || argv.length === 0) {
    console.log(USAGE);
    return argv.length === 0 ? 2 : 0;
  }
  let job: ExtractionJob;
  try {
    const flags = parseArgs(argv);
    const tasks = (flags.get("tasks") ?? "")
      .split(",")
      .map((t) => t.trim())
      .filter((t) => t.length > 0);
    const intrinsics: Record<string, number> = {};
    for (const k of ["fx", "fy", "cx", "cy"]) {
      const v = flags.get(k);
      if (v !== undefined) intrinsics[k] = Number(v);
    }
    job = {
      imagePath: need(flags, "image"),
      maskPath: need(flags, "mask"),
      depthPath: need(flags, "depth"),
      objectName: need(flags, "object"),
      outDir: need(flags, "out"),
      tasks,
      backend: flags.get("backend"),
      textBackend: flags.get("text-backend"),
      featureDim: flags.has("feature-dim") ? Number(flags.get("feature-dim")) : undefined,
      embedDim: flags.has("embed-dim") ? Number(flags.get("embed-dim")) : undefined,
      maxPoints: flags.has("max-points") ? Number(flags.get("max-points")) : undefined,
      intrinsics,
    };
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    console.error(USAGE);
    return 2;
  }
  try {
    const result = runExtraction(job);
    console.log(JSON.stringify({
      cloud: result.cloudPath,
      embeddings: result.embeddingPaths,
      fragment: result.fragmentPath,
      points: result.pointCount,
      feature_dim: result.featureDim,
      embedding_dim: result.embedDim,
    }, null, 2));
    return 0;
  } catch (err) {
    if (err instanceof EmptyMask || err instanceof ModelUnavailable || err instanceof FormatError) {
      console.error(`error: ${(err as Error).message}`);
      return 1;
    }
    throw err;
  }
}

process.exit(main(process.argv.slice(2)));
