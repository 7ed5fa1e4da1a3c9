"""Command-line entry point.

JSON results go to stdout, diagnostics and stage timings to stderr, so the
output is machine-composable: the ``align`` JSON feeds ``transfer``, and
``pipeline`` chains retrieve -> align -> transfer -> select in one call.
Given identical inputs and flags the stdout bytes are identical run to run.

Exit codes: 2 config error, 3 retrieval failure, 4 alignment failure,
5 transfer failure, 1 anything else.
"""

from __future__ import annotations

import os
import sys

# Pin BLAS pools before numpy loads so results cannot drift with the host's
# thread configuration; --threads only controls this package's own pool.
if "numpy" not in sys.modules:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, "1")

import argparse
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluation, memory
from .alignment import AlignmentConfig, AlignmentResult, align_detailed
from .errors import GraspMemError
from .geometry import FeatureCloud, SimTransform, global_descriptor
from .io import (
    grasp_from_dict,
    grasp_to_dict,
    read_embedding,
    read_fcld,
    read_grasp,
    write_fcld,
    write_ply_rgb,
)
from .pca import PcaModel, fit_pca, visualization_projection
from .retrieval import SceneQuery, combine_excludes, exclude_objects, exclude_tasks, retrieve
from .transfer import ScoredGrasp, TransferConfig, load_candidates, select_grasp, transfer_grasp

__all__ = ["main", "run_pipeline", "viz_export", "PipelineResult"]

EXIT_CONFIG = 2
EXIT_RETRIEVAL = 3
EXIT_ALIGNMENT = 4
EXIT_TRANSFER = 5

_STAGE_CODES = {
    "config": EXIT_CONFIG,
    "retrieval": EXIT_RETRIEVAL,
    "alignment": EXIT_ALIGNMENT,
    "transfer": EXIT_TRANSFER,
}

CONFIG_DEFAULTS = {
    "euler_step_deg": 45.0,
    "k_eval": 5,
    "k_orient": 5,
    "w_g": 1.0,
    "w_f": 1.0,
    "coarse_distance_threshold": None,
    "final_distance_threshold": None,
    "icp_max_iterations": 50,
    "icp_tolerance": 1e-6,
    "pca_dim": 32,
    "sigma": 0.1,
    "w_task": 0.95,
    "w_geo": 0.05,
    "geometric_only": False,
    "seed": 0,
    "threads": 1,
}

# argparse dest -> config key, for flags that override the config file
_FLAG_KEYS = {
    "euler_step_deg": "euler_step_deg",
    "keval": "k_eval",
    "korient": "k_orient",
    "wg": "w_g",
    "wf": "w_f",
    "pca_dim": "pca_dim",
    "sigma": "sigma",
    "wtask": "w_task",
    "wgeo": "w_geo",
    "geometric_only": "geometric_only",
    "seed": "seed",
    "threads": "threads",
}


class StageFailure(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage} stage failed: {message}")
        self.stage = stage
        self.code = _STAGE_CODES.get(stage, 1)


@dataclass
class PipelineResult:
    retrieved_id: int
    object_name: str
    task: str
    joint_score: float
    transform: SimTransform
    final_alignment_score: float
    candidates_evaluated: int
    selected_grasp: ScoredGrasp
    config: dict
    timings_ms: dict

    def to_json_dict(self) -> dict:
        # Timings are real wall-clock and would break byte-reproducibility;
        # they are reported on stderr instead. Execution knobs (threads) do
        # not affect results and are likewise kept out of the stdout bytes.
        config = {k: v for k, v in self.config.items() if k != "threads"}
        return {
            "retrieved_id": self.retrieved_id,
            "object_name": self.object_name,
            "task": self.task,
            "joint_score": self.joint_score,
            "transform": _transform_dict(self.transform),
            "final_alignment_score": self.final_alignment_score,
            "candidates_evaluated": self.candidates_evaluated,
            "selected_grasp": _scored_grasp_dict(self.selected_grasp),
            "config": config,
        }


def _transform_dict(t: SimTransform) -> dict:
    return {
        "scale": float(t.scale),
        "rotation": [float(v) for v in t.rotation.reshape(-1)],
        "translation": [float(v) for v in t.translation],
    }


def _scored_grasp_dict(s: ScoredGrasp) -> dict:
    return {
        "index": s.index,
        "s_task": s.s_task,
        "s_final": s.s_final,
        "stability": s.candidate.stability,
        "pose": grasp_to_dict(s.candidate.pose),
    }


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def _load_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StageFailure("config", f"cannot read config file {path}: {exc}")
    if not isinstance(doc, dict):
        raise StageFailure("config", f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - set(CONFIG_DEFAULTS))
    if unknown:
        raise StageFailure("config", f"{path}: unknown config keys {unknown}")
    return doc


def effective_config(args) -> dict:
    """Built-in defaults, overridden by --config file, overridden by flags."""
    cfg = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(_load_config_file(args.config))
    for dest, key in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None and value is not False:
            cfg[key] = value
    return cfg


def _alignment_config(cfg: dict) -> AlignmentConfig:
    w_f = 0.0 if cfg["geometric_only"] else cfg["w_f"]
    try:
        return AlignmentConfig(
            euler_step=math.radians(cfg["euler_step_deg"]),
            k_eval=int(cfg["k_eval"]),
            k_orient=int(cfg["k_orient"]),
            w_g=cfg["w_g"],
            w_f=w_f,
            coarse_distance_threshold=cfg["coarse_distance_threshold"],
            final_distance_threshold=cfg["final_distance_threshold"],
            icp_max_iterations=int(cfg["icp_max_iterations"]),
            icp_tolerance=cfg["icp_tolerance"],
        )
    except ValueError as exc:
        raise StageFailure("config", str(exc))


def _transfer_config(cfg: dict) -> TransferConfig:
    try:
        return TransferConfig(w_task=cfg["w_task"], w_geo=cfg["w_geo"], sigma=cfg["sigma"])
    except ValueError as exc:
        raise StageFailure("config", str(exc))


def _load_query(scene_cloud_path, embedding_path, task: str) -> tuple[FeatureCloud, SceneQuery]:
    cloud = read_fcld(scene_cloud_path)
    emb = read_embedding(embedding_path)
    norm = np.linalg.norm(emb)
    if norm < 1e-12:
        raise GraspMemError(f"task embedding {embedding_path} has zero norm")
    return cloud, SceneQuery(global_descriptor(cloud), emb / norm, task)


def _exclude_from_args(args):
    preds = []
    if args.exclude_object:
        preds.append(exclude_objects(args.exclude_object))
    if args.exclude_task:
        preds.append(exclude_tasks(args.exclude_task))
    return combine_excludes(*preds) if preds else None


def run_pipeline(args, cfg: dict) -> PipelineResult:
    """retrieve -> align -> transfer -> select, with per-stage failure codes."""
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    try:
        store = memory.load_store(args.store)
        scene_cloud, query = _load_query(args.scene_cloud, args.task_embedding, args.task or "")
        instance, joint = retrieve(query, store, _exclude_from_args(args))
    except (GraspMemError, ValueError) as exc:
        raise StageFailure("retrieval", str(exc))
    timings["retrieve"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    try:
        memory_cloud = instance.load_cloud()
        result: AlignmentResult = align_detailed(
            memory_cloud, scene_cloud, _alignment_config(cfg), int(cfg["pca_dim"]))
    except StageFailure:
        raise
    except (GraspMemError, ValueError) as exc:
        raise StageFailure("alignment", str(exc))
    timings["align"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    try:
        candidates = load_candidates(args.candidates)
        target = transfer_grasp(instance.grasp, result.transform)
        best, _ = select_grasp(candidates, target, _transfer_config(cfg))
    except StageFailure:
        raise
    except (GraspMemError, ValueError) as exc:
        raise StageFailure("transfer", str(exc))
    timings["transfer"] = (time.perf_counter() - t0) * 1e3

    return PipelineResult(
        retrieved_id=instance.instance_id if instance.instance_id is not None else -1,
        object_name=instance.object_name,
        task=instance.task,
        joint_score=joint,
        transform=result.transform,
        final_alignment_score=result.final_score,
        candidates_evaluated=result.candidates_evaluated,
        selected_grasp=best,
        config=cfg,
        timings_ms=timings,
    )


def _viz_model(features: np.ndarray) -> PcaModel:
    """3-component model, padding with orthonormal completions when the
    feature matrix has rank below 3 (constant channels then map to 0.5)."""
    features = np.asarray(features, dtype=np.float64)
    dim = features.shape[1]
    if dim < 3:
        raise StageFailure("config", f"viz-export needs feature_dim >= 3, got {dim}")
    empty = np.zeros((0, dim))
    centered = features - features.mean(axis=0)
    rank = min(int(np.linalg.matrix_rank(centered)), features.shape[0], 3)
    if rank == 3:
        return fit_pca(features, empty, 3)
    if rank > 0:
        partial = fit_pca(features, empty, rank)
        rows = list(partial.components)
        variances = [float(v) for v in partial.explained_variance]
    else:
        rows, variances = [], []
    for basis in np.eye(dim):
        if len(rows) == 3:
            break
        vec = basis.copy()
        for row in rows:
            vec -= (vec @ row) * row
        norm = np.linalg.norm(vec)
        if norm > 0.5:
            rows.append(vec / norm)
            variances.append(0.0)
    return PcaModel(features.mean(axis=0), np.vstack(rows), np.asarray(variances))


def viz_export(cloud: FeatureCloud, pca3: PcaModel, out) -> None:
    """ASCII PLY with RGB from the 3-dim feature projection."""
    write_ply_rgb(out, cloud.points, visualization_projection(pca3, cloud))


# --- subcommand handlers ---------------------------------------------------

def _cmd_retrieve(args) -> int:
    effective_config(args)  # validates --config even though retrieve has no tunables
    try:
        store = memory.load_store(args.store)
        cloud, query = _load_query(args.scene_cloud, args.task_embedding, args.task or "")
        instance, score = retrieve(query, store, _exclude_from_args(args))
    except (GraspMemError, ValueError) as exc:
        raise StageFailure("retrieval", str(exc))
    _emit({
        "instance_id": instance.instance_id,
        "object_name": instance.object_name,
        "task": instance.task,
        "score": score,
    })
    return 0


def _cmd_align(args) -> int:
    cfg = effective_config(args)
    try:
        mem_cloud = read_fcld(args.memory_cloud)
        scene_cloud = read_fcld(args.scene_cloud)
        result = align_detailed(mem_cloud, scene_cloud,
                                _alignment_config(cfg), int(cfg["pca_dim"]))
    except StageFailure:
        raise
    except (GraspMemError, ValueError) as exc:
        raise StageFailure("alignment", str(exc))
    doc = _transform_dict(result.transform)
    doc["final_score"] = result.final_score
    doc["candidates_evaluated"] = result.candidates_evaluated
    _emit(doc)
    if args.out_cloud:
        from .geometry import apply_transform
        write_fcld(args.out_cloud, apply_transform(result.transform, mem_cloud))
    return 0


def _cmd_transfer(args) -> int:
    cfg = effective_config(args)
    try:
        grasp = read_grasp(args.memory_grasp)
        alignment_doc = json.loads(Path(args.alignment).read_text())
        transform = SimTransform(
            scale=float(alignment_doc["scale"]),
            rotation=np.asarray(alignment_doc["rotation"], dtype=np.float64).reshape(3, 3),
            translation=np.asarray(alignment_doc["translation"], dtype=np.float64),
        )
        candidates = load_candidates(args.candidates)
        target = transfer_grasp(grasp, transform)
        _, ranking = select_grasp(candidates, target, _transfer_config(cfg))
    except StageFailure:
        raise
    except (GraspMemError, ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        raise StageFailure("transfer", str(exc))
    _emit([_scored_grasp_dict(s) for s in ranking])
    return 0


def _cmd_eval(args) -> int:
    cfg = effective_config(args)
    split = args.split.replace("-", "_")
    try:
        store = memory.load_store(args.store)
        scenes = _load_scenes(args.scenes)
        report = evaluation.evaluate_pipeline(
            store, scenes, split,
            align_cfg=_alignment_config(cfg),
            transfer_cfg=_transfer_config(cfg),
            pca_dim=int(cfg["pca_dim"]),
            threads=int(cfg["threads"]),
        )
        baseline = evaluation.random_baseline(scenes, split, seed=int(cfg["seed"]))
    except StageFailure:
        raise
    except (GraspMemError, ValueError) as exc:
        raise StageFailure("retrieval", str(exc))
    doc = report.to_json_dict()
    doc["random_baseline_mean_ap"] = baseline.mean_ap
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    _emit(doc)
    return 0


def _cmd_viz_export(args) -> int:
    effective_config(args)
    try:
        cloud = read_fcld(args.cloud)
        viz_export(cloud, _viz_model(cloud.features), args.out)
    except StageFailure:
        raise
    except (GraspMemError, ValueError) as exc:
        raise StageFailure("config", str(exc))
    _emit({"written": str(args.out), "vertices": len(cloud)})
    return 0


def _cmd_pipeline(args) -> int:
    cfg = effective_config(args)
    result = run_pipeline(args, cfg)
    _emit(result.to_json_dict())
    if not args.quiet:
        parts = " ".join(f"{k}={v:.1f}" for k, v in result.timings_ms.items())
        print(f"stage timings (ms): {parts}", file=sys.stderr)
    return 0


def _cmd_ingest(args) -> int:
    effective_config(args)
    try:
        ids = _run_ingest(args)
    except (GraspMemError, ValueError) as exc:
        raise StageFailure("config", str(exc))
    _emit({"ingested_ids": ids})
    return 0


def _run_ingest(args) -> list[int]:
    fallback_grasp = read_grasp(args.grasp) if args.grasp else None
    if args.fragment:
        frag_path = Path(args.fragment)
        doc = json.loads(frag_path.read_text())
        entries = doc.get("entries", [])
        ids = []
        for i, entry in enumerate(entries):
            if entry.get("grasp"):
                grasp = grasp_from_dict(entry["grasp"])
            elif fallback_grasp is not None:
                grasp = fallback_grasp
            else:
                raise ValueError(f"fragment entry {i} has no grasp and no --grasp fallback")
            if "task_embedding" in entry and entry["task_embedding"] is not None:
                emb = np.asarray(entry["task_embedding"], dtype=np.float64)
            else:
                emb = read_embedding(frag_path.parent / entry["task_embedding_path"])
            ids.append(memory.ingest(memory.MemoryInstance(
                object_name=entry["object_name"],
                task=entry["task"],
                task_embedding=emb / np.linalg.norm(emb),
                cloud_path=frag_path.parent / entry["cloud_path"],
                global_descriptor=np.zeros(0),  # recomputed by ingest
                grasp=grasp,
            ), args.store))
        return ids
    for name in ("cloud", "object", "task", "task_embedding"):
        if getattr(args, name) in (None, ""):
            raise ValueError(f"--{name.replace('_', '-')} is required without --fragment")
    if fallback_grasp is None:
        raise ValueError("--grasp is required without --fragment")
    emb = read_embedding(args.task_embedding)
    return [memory.ingest(memory.MemoryInstance(
        object_name=args.object,
        task=args.task,
        task_embedding=emb / np.linalg.norm(emb),
        cloud_path=args.cloud,
        global_descriptor=np.zeros(0),
        grasp=fallback_grasp,
    ), args.store)]


def _load_scenes(manifest_path):
    path = Path(manifest_path)
    doc = json.loads(path.read_text())
    scenes = []
    for entry in doc["scenes"]:
        base = path.parent
        cloud = read_fcld(base / entry["scene_cloud"])
        emb = read_embedding(base / entry["task_embedding"])
        query = SceneQuery(global_descriptor(cloud), emb / np.linalg.norm(emb),
                           entry["task"])
        labeled = evaluation.load_labeled_grasps(
            base / entry["labeled_grasps"], entry["object_name"], entry["task"])
        scenes.append((cloud, query, labeled))
    return scenes


# --- parser ----------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="JSON config file; flags override it")
    common.add_argument("--seed", type=int, default=None, help="seed for stochastic baselines")
    common.add_argument("--threads", type=int, default=None, help="worker threads for batch stages")
    common.add_argument("--quiet", action="store_true", help="suppress stderr diagnostics")

    align_flags = argparse.ArgumentParser(add_help=False)
    align_flags.add_argument("--euler-step-deg", type=float, default=None,
                             help="rotation grid step in degrees")
    align_flags.add_argument("--wg", type=float, default=None, help="geometric term weight")
    align_flags.add_argument("--wf", type=float, default=None, help="feature term weight")
    align_flags.add_argument("--keval", type=int, default=None,
                             help="scene neighbors per memory point")
    align_flags.add_argument("--korient", type=int, default=None,
                             help="coarse candidates kept for ICP")
    align_flags.add_argument("--pca-dim", type=int, default=None,
                             help="feature dims after PCA projection")
    align_flags.add_argument("--geometric-only", action="store_true", default=None,
                             help="drop the feature term (sets wf to 0)")

    transfer_flags = argparse.ArgumentParser(add_help=False)
    transfer_flags.add_argument("--sigma", type=float, default=None,
                                help="positional decay scale (meters)")
    transfer_flags.add_argument("--wtask", type=float, default=None,
                                help="task-compatibility weight")
    transfer_flags.add_argument("--wgeo", type=float, default=None,
                                help="stability weight")

    parser = argparse.ArgumentParser(
        prog="graspmem",
        description="Retrieve a stored object-task grasp, align its cloud to the scene, "
                    "and transfer and re-score the grasp.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("retrieve", parents=[common],
                       help="pick the best memory instance for a scene + task")
    p.add_argument("--store", required=True, help="memory store directory")
    p.add_argument("--scene-cloud", required=True, help="scene FCLD file")
    p.add_argument("--task-embedding", required=True, help="task embedding file")
    p.add_argument("--task", default="", help="scene task string (metadata)")
    p.add_argument("--exclude-object", action="append", default=[], metavar="NAME")
    p.add_argument("--exclude-task", action="append", default=[], metavar="NAME")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("align", parents=[common, align_flags],
                       help="align a memory cloud onto a scene cloud")
    p.add_argument("--memory-cloud", required=True)
    p.add_argument("--scene-cloud", required=True)
    p.add_argument("--out-cloud", default=None, help="write the transformed memory cloud")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("transfer", parents=[common, transfer_flags],
                       help="transfer a grasp through an alignment and rank candidates")
    p.add_argument("--memory-grasp", required=True, help="grasp JSON file")
    p.add_argument("--alignment", required=True, help="align output JSON file")
    p.add_argument("--candidates", required=True, help="candidate grasps JSON file")
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser("eval", parents=[common, align_flags, transfer_flags],
                       help="average-precision evaluation over a scene fixture")
    p.add_argument("--store", required=True)
    p.add_argument("--scenes", required=True, help="scene fixture manifest JSON")
    p.add_argument("--split", default="all",
                   choices=["all", "held-out-objects", "held-out-tasks"])
    p.add_argument("--out", default=None, help="write the report JSON here too")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("viz-export", parents=[common],
                       help="write a PLY colored by 3-dim feature projection")
    p.add_argument("--cloud", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_viz_export)

    p = sub.add_parser("pipeline", parents=[common, align_flags, transfer_flags],
                       help="end-to-end retrieve / align / transfer / select")
    p.add_argument("--store", required=True)
    p.add_argument("--scene-cloud", required=True)
    p.add_argument("--task-embedding", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--task", default="", help="scene task string (metadata)")
    p.add_argument("--exclude-object", action="append", default=[], metavar="NAME")
    p.add_argument("--exclude-task", action="append", default=[], metavar="NAME")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("ingest", parents=[common],
                       help="add instances to a memory store")
    p.add_argument("--store", required=True)
    p.add_argument("--fragment", default=None, help="extractor manifest fragment JSON")
    p.add_argument("--cloud", default=None, help="FCLD file (single-instance mode)")
    p.add_argument("--object", default=None, help="object name (single-instance mode)")
    p.add_argument("--task", default=None, help="task string (single-instance mode)")
    p.add_argument("--task-embedding", default=None, help="embedding file (single-instance mode)")
    p.add_argument("--grasp", default=None, help="grasp JSON (also fragment fallback)")
    p.set_defaults(func=_cmd_ingest)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except GraspMemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
