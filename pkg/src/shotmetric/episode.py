"""Core value types: episodes, head configuration and class logits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import ValidationError

HEADS = ("proto_euclidean", "proto_cosine", "frn_full", "frn_simplified", "frn_cosine")
REGULARIZERS = ("frobenius", "legacy")

HeadName = Literal["proto_euclidean", "proto_cosine", "frn_full", "frn_simplified", "frn_cosine"]
RegularizerName = Literal["frobenius", "legacy"]


def _frozen(a, ndim=2, name="array"):
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Episode:
    """One few-shot task: per-class support matrices and a query matrix.

    ``support[c]`` is a ``(k_c, d)`` array for ``class_ids[c]``; ``query`` is
    ``(m, d)``. Arrays are copied and made read-only on construction.
    """

    support: tuple[np.ndarray, ...]
    query: np.ndarray
    class_ids: tuple[str, ...]

    def __init__(self, support: Sequence, query, class_ids: Sequence | None = None):
        sup = tuple(_frozen(s, name="support matrix") for s in support)
        q = _frozen(query, name="query")
        ids = tuple(str(c) for c in (class_ids if class_ids is not None else range(len(sup))))
        if len(sup) < 2:
            raise ValidationError(f"an episode needs at least 2 classes, got {len(sup)}")
        if len(ids) != len(sup):
            raise ValidationError("class_ids and support have different lengths")
        if len(set(ids)) != len(ids):
            raise ValidationError("class_ids must be distinct")
        if q.shape[0] < 1:
            raise ValidationError("query must contain at least one row")
        d = q.shape[1]
        if d < 1:
            raise ValidationError("feature dimension must be >= 1")
        for c, s in zip(ids, sup):
            if s.shape[0] < 1:
                raise ValidationError(f"class {c!r} has no support rows")
            if s.shape[1] != d:
                raise ValidationError(
                    f"class {c!r} support has dimension {s.shape[1]}, query has {d}"
                )
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "query", q)
        object.__setattr__(self, "class_ids", ids)

    @property
    def way(self) -> int:
        return len(self.support)

    @property
    def dim(self) -> int:
        return self.query.shape[1]

    @property
    def shots(self) -> tuple[int, ...]:
        return tuple(s.shape[0] for s in self.support)

    def to_json_obj(self) -> dict:
        return {
            "classes": [
                {"id": c, "support": s.tolist()} for c, s in zip(self.class_ids, self.support)
            ],
            "query": self.query.tolist(),
        }

    @classmethod
    def from_json_obj(cls, obj) -> "Episode":
        try:
            classes = obj["classes"]
            support = [c["support"] for c in classes]
            ids = [c["id"] for c in classes]
            query = obj["query"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed episode object: {exc!r}") from exc
        try:
            return cls(support, query, ids)
        except ValueError as exc:
            # ragged nested lists end up here
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed episode arrays: {exc}") from exc


def load_episode(path) -> Episode:
    """Read an episode from the JSON format used by ``shotmetric classify``."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return Episode.from_json_obj(obj)


def save_episode(episode: Episode, path) -> None:
    Path(path).write_text(json.dumps(episode.to_json_obj()), encoding="utf-8")


@dataclass(frozen=True)
class HeadConfig:
    """Classifier head selection plus its scalar hyperparameters.

    ``temperature`` and ``frn_lambda`` are learned during training in the
    original models; here they are plain inputs.
    """

    head: HeadName = "proto_euclidean"
    temperature: float = 1.0
    frn_lambda: float = 0.5
    frn_regularizer: RegularizerName = "frobenius"

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValidationError(f"unknown head {self.head!r}; expected one of {HEADS}")
        if self.frn_regularizer not in REGULARIZERS:
            raise ValidationError(
                f"unknown regularizer {self.frn_regularizer!r}; expected one of {REGULARIZERS}"
            )
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValidationError(f"temperature must be positive, got {self.temperature}")
        if not (np.isfinite(self.frn_lambda) and self.frn_lambda > 0):
            raise ValidationError(f"frn_lambda must be positive, got {self.frn_lambda}")

    def as_dict(self) -> dict:
        return {
            "head": self.head,
            "temperature": float(self.temperature),
            "frn_lambda": float(self.frn_lambda),
            "frn_regularizer": self.frn_regularizer,
        }


@dataclass(frozen=True)
class ClassLogits:
    """Per-query, per-class scores, shape ``(m, n)``, before the softmax."""

    scores: np.ndarray
    class_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64)
        if s.ndim != 2:
            raise ValidationError(f"scores must be 2-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValidationError("logits contain NaN or Inf")
        ids = tuple(self.class_ids) if self.class_ids else tuple(str(i) for i in range(s.shape[1]))
        if len(ids) != s.shape[1]:
            raise ValidationError("class_ids length does not match number of score columns")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "class_ids", ids)
