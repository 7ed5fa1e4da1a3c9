"""Memory retrieval by joint visual-semantic similarity.

The query carries a global object descriptor plus a unit-norm task
embedding; each stored instance is scored by the product of the two
cosine similarities and the argmax wins, ties going to the lowest id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimMismatch, EmptyMemory, ZeroVector
from .memory import MemoryInstance

__all__ = [
    "SceneQuery",
    "cosine_similarity",
    "joint_score",
    "retrieve",
    "retrieve_top_k",
    "exclude_objects",
    "exclude_tasks",
    "combine_excludes",
]

_ZERO_NORM = 1e-12
_UNIT_TOL = 1e-6


@dataclass(frozen=True)
class SceneQuery:
    """Scene-side retrieval inputs: global descriptor + task embedding."""

    scene_descriptor: np.ndarray
    task_embedding: np.ndarray
    scene_task: str = ""

    def __post_init__(self):
        desc = np.asarray(self.scene_descriptor, dtype=np.float64).reshape(-1)
        emb = np.asarray(self.task_embedding, dtype=np.float64).reshape(-1)
        if abs(np.linalg.norm(emb) - 1.0) > _UNIT_TOL:
            raise ValueError("task_embedding must have unit L2 norm (normalize at load)")
        for arr in (desc, emb):
            arr.flags.writeable = False
        object.__setattr__(self, "scene_descriptor", desc)
        object.__setattr__(self, "task_embedding", emb)


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|); raises ZeroVector when either norm is below 1e-12."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimMismatch(f"cosine of {a.shape[0]}-dim vs {b.shape[0]}-dim vector")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < _ZERO_NORM or nb < _ZERO_NORM:
        raise ZeroVector("cosine similarity of a (near-)zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


def joint_score(query: SceneQuery, instance: MemoryInstance) -> float:
    """Product of the object-descriptor and task-embedding cosines."""
    obj = cosine_similarity(query.scene_descriptor, instance.global_descriptor)
    task = cosine_similarity(query.task_embedding, instance.task_embedding)
    return obj * task


def exclude_objects(names: Iterable[str]) -> Callable[[MemoryInstance], bool]:
    """Predicate dropping instances whose object_name is in ``names``."""
    names = frozenset(names)
    return lambda inst: inst.object_name in names


def exclude_tasks(names: Iterable[str]) -> Callable[[MemoryInstance], bool]:
    """Predicate dropping instances whose task string is in ``names``."""
    names = frozenset(names)
    return lambda inst: inst.task in names


def combine_excludes(*predicates) -> Callable[[MemoryInstance], bool]:
    preds = [p for p in predicates if p is not None]
    return lambda inst: any(p(inst) for p in preds)


def _effective_id(instance: MemoryInstance, position: int) -> int:
    return instance.instance_id if instance.instance_id is not None else position

def retrieve(
    query: SceneQuery,
    store: Sequence[MemoryInstance],
    exclude: Callable[[MemoryInstance], bool] | None = None,
) -> tuple[MemoryInstance, float]:
    """Instance with the highest joint score among those not excluded.

    Ties break toward the lowest instance id, so the result is stable
    under any permutation of the store.
    """
    best = None
    best_score = -np.inf
    best_id = None
    for pos, inst in enumerate(store):
        if exclude is not None and exclude(inst):
            continue
        score = joint_score(query, inst)
        eid = _effective_id(inst, pos)
        if score > best_score or (score == best_score and best_id is not None and eid < best_id):
            best, best_score, best_id = inst, score, eid
    if best is None:
        raise EmptyMemory("no memory instance survives the exclusion filter")
    return best, float(best_score)


def retrieve_top_k(
    query: SceneQuery,
    store: Sequence[MemoryInstance],
    k: int,
    exclude: Callable[[MemoryInstance], bool] | None = None,
) -> list[tuple[MemoryInstance, float]]:
    """Diagnostic ranked list; carries no contract beyond ordering."""
    scored = []
    for pos, inst in enumerate(store):
        if exclude is not None and exclude(inst):
            continue
        scored.append((joint_score(query, inst), _effective_id(inst, pos), inst))
    if not scored:
        raise EmptyMemory("no memory instance survives the exclusion filter")
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [(inst, float(s)) for s, _, inst in scored[:k]]
