#!/usr/bin/env python3
"""Build a throwaway synthetic world and run the whole pipeline once.

Creates a small memory store of seeded tool clouds, fabricates a scene by
transforming one of them, and walks retrieve -> align -> transfer ->
select, printing each stage's result. Useful as a smoke test and as a
worked example of the library API.
"""

import argparse
import sys
import tempfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from graspmem.alignment import AlignmentConfig, align_detailed
from graspmem.geometry import GraspPose, apply_transform, bbox_diagonal, global_descriptor
from graspmem.io import write_fcld
from graspmem.memory import MemoryInstance, ingest, load_store
from graspmem.retrieval import SceneQuery, retrieve
from graspmem.synth import (
    canonical_handle_grasp,
    make_tool_cloud,
    random_rotation,
    random_sim_transform,
)
from graspmem.transfer import CandidateGrasp, TransferConfig, select_grasp, transfer_grasp

TASKS = ["scoop", "grate", "pour", "flip", "brush"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--objects", type=int, default=5)
    parser.add_argument("--points", type=int, default=800)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    work = Path(tempfile.mkdtemp(prefix="graspmem-demo-"))
    store_dir = work / "store"

    for i in range(args.objects):
        cloud_path = work / f"mem{i}.fcld"
        write_fcld(cloud_path, make_tool_cloud(rng, args.points))
        emb = np.zeros(8)
        emb[i % 8] = 1.0
        ingest(MemoryInstance(
            object_name=f"tool{i}", task=TASKS[i % len(TASKS)],
            task_embedding=emb, cloud_path=cloud_path,
            global_descriptor=np.zeros(0), grasp=canonical_handle_grasp(),
        ), store_dir)
    store = load_store(store_dir)
    print(f"store: {len(store)} instances in {store_dir}")

    target_idx = int(rng.integers(0, args.objects))
    truth = random_sim_transform(rng)
    scene = apply_transform(truth, store[target_idx].load_cloud())
    query = SceneQuery(global_descriptor(scene), store[target_idx].task_embedding,
                       store[target_idx].task)
    print(f"scene: {store[target_idx].object_name} under scale {truth.scale:.3f}")

    instance, joint = retrieve(query, store)
    print(f"retrieved: id {instance.instance_id} ({instance.object_name}/{instance.task}) "
          f"joint score {joint:.4f}")

    result = align_detailed(instance.load_cloud(), scene, AlignmentConfig(), pca_dim=8)
    moved = result.transform.apply_points(instance.load_cloud().points)
    rms = float(np.sqrt(((moved - scene.points) ** 2).sum(axis=1).mean()))
    print(f"aligned: score {result.final_score:.3e}, scale {result.transform.scale:.3f}, "
          f"RMS {rms:.2e} ({rms / bbox_diagonal(scene):.2%} of scene diagonal)")

    target = transfer_grasp(instance.grasp, result.transform)
    candidates = [CandidateGrasp(
        GraspPose(random_rotation(rng), target.translation + rng.normal(scale=0.2, size=3),
                  0.04, 0.05),
        float(rng.uniform()),
    ) for _ in range(19)]
    candidates.append(CandidateGrasp(target, 0.9))
    best, ranking = select_grasp(candidates, target, TransferConfig())
    print(f"selected: candidate {best.index} of {len(ranking)} "
          f"(s_task {best.s_task:.4f}, s_final {best.s_final:.4f})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
