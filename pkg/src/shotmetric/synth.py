"""Synthetic Gaussian episodes and episodic evaluation.

Every random draw comes from a PCG64 stream keyed by ``(seed, trial, role)``,
so a trial's query set does not depend on how many support sets were drawn
before it, and trials can run in any order or in parallel.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .episode import Episode, HeadConfig
from .errors import ValidationError
from .heads import class_logits

ROLE_QUERY = 0
ROLE_SUPPORT = 1
ROLE_RESAMPLED_SUPPORT = 2
ROLE_SPEC = 3

DEFAULT_STDDEV = 0.6
THREADS_ENV = "SHOTMETRIC_THREADS"


def stream(seed: int, trial: int, role: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial, role])))


@dataclass(frozen=True)
class ClusterSpec:
    """Isotropic Gaussian class clusters: one mean per class, shared stddev."""

    means: np.ndarray
    stddev: float

    def __post_init__(self):
        m = np.array(self.means, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 1:
            raise ValidationError(f"means must be (way >= 2, dim >= 1), got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValidationError("means contain non-finite values")
        if not (math.isfinite(self.stddev) and self.stddev > 0):
            raise ValidationError(f"stddev must be positive, got {self.stddev}")
        m.setflags(write=False)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "stddev", float(self.stddev))

    @property
    def way(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_json_obj(self) -> dict:
        return {"means": self.means.tolist(), "stddev": self.stddev}


def _directions(way, dim, min_angle_deg, rng, max_tries=100_000):
    cos_max = math.cos(math.radians(min_angle_deg))
    dirs = []
    tries = 0
    while len(dirs) < way:
        tries += 1
        if tries > max_tries:
            raise ValidationError(
                f"could not place {way} directions in {dim}-D at >= {min_angle_deg} degrees"
            )
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        if all(v @ u <= cos_max for u in dirs):
            dirs.append(v)
    return np.array(dirs)


def make_cluster_spec(
    way: int,
    dim: int,
    mean_norm_range=(0.5, 2.0),
    min_angle_deg: float = 0.0,
    seed: int = 0,
    stddev: float = DEFAULT_STDDEV,
) -> ClusterSpec:
    """Draw class means with random directions and norms.

    Directions are uniform on the sphere, rejection-sampled so every pair is
    at least ``min_angle_deg`` apart; norms are uniform in ``mean_norm_range``.
    """
    lo, hi = mean_norm_range
    if not 0 <= lo <= hi:
        raise ValidationError(f"invalid mean_norm_range {mean_norm_range}")
    rng = stream(seed, 0, ROLE_SPEC)
    dirs = _directions(way, dim, min_angle_deg, rng)
    norms = rng.uniform(lo, hi, size=way)
    return ClusterSpec(dirs * norms[:, None], stddev)


def reference_spec(seed: int = 11) -> ClusterSpec:
    """5-way, 16-D clusters used for the support-resampling experiment."""
    return make_cluster_spec(5, 16, (0.5, 2.0), 45.0, seed=seed, stddev=0.6)


def cluster_spec_from_json_obj(obj) -> ClusterSpec:
    """Build a spec from either explicit means or generator parameters."""
    if not isinstance(obj, dict):
        raise ValidationError("cluster spec must be a JSON object")
    try:
        if "means" in obj:
            return ClusterSpec(np.asarray(obj["means"], dtype=np.float64), float(obj["stddev"]))
        return make_cluster_spec(
            int(obj["way"]),
            int(obj["dim"]),
            tuple(obj.get("mean_norm_range", (0.5, 2.0))),
            float(obj.get("min_angle_deg", 0.0)),
            int(obj.get("seed", 0)),
            float(obj.get("stddev", DEFAULT_STDDEV)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed cluster spec: {exc!r}") from exc


def load_cluster_spec(path) -> ClusterSpec:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return cluster_spec_from_json_obj(obj)


def _draw(spec: ClusterSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal((spec.way, count, spec.dim))
    return spec.means[:, None, :] + spec.stddev * noise


def sample_episode(
    spec: ClusterSpec,
    shot: int,
    queries_per_class: int,
    rng_seed: int,
    trial: int = 0,
    support_role: int = ROLE_SUPPORT,
) -> tuple[Episode, np.ndarray]:
    """Draw one episode and the true class index of each query row.

    Queries are ordered class by class. ``support_role`` selects an
    alternative support stream while keeping the same queries.
    """
    if shot < 1 or queries_per_class < 1:
        raise ValidationError("shot and queries_per_class must be >= 1")
    support = _draw(spec, shot, stream(rng_seed, trial, support_role))
    query = _draw(spec, queries_per_class, stream(rng_seed, trial, ROLE_QUERY))
    episode = Episode(list(support), query.reshape(-1, spec.dim))
    labels = np.repeat(np.arange(spec.way), queries_per_class)
    return episode, labels


def _predicted(episode: Episode, head: HeadConfig) -> np.ndarray:
    # argmax takes the first maximum: the lowest-index tie rule of predict()
    return np.argmax(class_logits(episode, head).scores, axis=1)


def resolve_workers(workers: int | None) -> int:
    """``None`` reads SHOTMETRIC_THREADS; 0 means one worker per CPU."""
    if workers is None:
        raw = os.environ.get(THREADS_ENV, "1").strip() or "1"
        try:
            workers = int(raw)
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if workers < 0:
        raise ValidationError("worker count must be >= 0")
    return workers or (os.cpu_count() or 1)


def _run_trials(fn, trials: int, workers: int | None) -> list:
    n = resolve_workers(workers)
    if n == 1 or trials == 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        # map preserves trial order, so accumulation below is order-fixed
        return list(pool.map(fn, range(trials)))


@dataclass(frozen=True)
class EvalSummary:
    mean_accuracy: float
    half_ci95: float
    trials: int


def evaluate(
    spec: ClusterSpec,
    head: HeadConfig,
    shot: int,
    queries_per_class: int,
    trials: int,
    rng_seed: int,
    workers: int | None = 1,
) -> EvalSummary:
    """Mean episode accuracy (percent) with a normal-approximation 95% CI."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")

    def one(t):
        ep, labels = sample_episode(spec, shot, queries_per_class, rng_seed, t)
        return 100.0 * float(np.mean(_predicted(ep, head) == labels))

    acc = np.array(_run_trials(one, trials, workers))
    mean = math.fsum(acc) / trials
    half = 1.96 * float(np.std(acc, ddof=1)) / math.sqrt(trials) if trials > 1 else 0.0
    return EvalSummary(mean, half, trials)


def consistency_rate(
    spec: ClusterSpec,
    predict_head: HeadConfig,
    shot: int,
    queries_per_class: int,
    trials: int,
    rng_seed: int,
    workers: int | None = 1,
) -> float:
    """Fraction of query predictions unchanged when the support set is redrawn.

    Each trial fixes one query set, classifies it against two independently
    drawn support sets and counts agreeing predictions; counts are pooled
    over all trials.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")

    def one(t):
        a, _ = sample_episode(spec, shot, queries_per_class, rng_seed, t, ROLE_SUPPORT)
        b, _ = sample_episode(spec, shot, queries_per_class, rng_seed, t, ROLE_RESAMPLED_SUPPORT)
        return int(np.sum(_predicted(a, predict_head) == _predicted(b, predict_head)))

    agree = sum(_run_trials(one, trials, workers))
    return agree / (trials * spec.way * queries_per_class)
