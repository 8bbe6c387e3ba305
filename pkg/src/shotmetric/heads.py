"""Prototype heads (Euclidean and cosine), FEAT refinement and prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import frn
from .episode import ClassLogits, Episode, HeadConfig
from .errors import DimensionMismatch, ValidationError, ZeroNormVector

ZERO_NORM_EPS = 1e-12
LAYER_NORM_EPS = 1e-6


def compute_prototypes(episode: Episode) -> np.ndarray:
    """Class centroids, one row per class in ``class_ids`` order."""
    return np.stack([s.mean(axis=0) for s in episode.support])


def squared_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape ``(len(x), len(centers))``."""
    diff = x[:, None, :] - centers[None, :, :]
    return np.einsum("mnd,mnd->mn", diff, diff)


def euclidean_proto_logits(
    episode: Episode, config: HeadConfig | None = None, prototypes: np.ndarray | None = None
) -> ClassLogits:
    """Negative squared distance to each prototype, scaled by ``temperature / d``.

    ``d`` is the feature dimension of the episode, so logits stay comparable
    across network widths.
    """
    config = config or HeadConfig()
    protos = compute_prototypes(episode) if prototypes is None else prototypes
    scale = config.temperature / episode.dim
    return ClassLogits(-scale * squared_distances(episode.query, protos), episode.class_ids)


def _unit_rows(a: np.ndarray, what: str, eps: float) -> np.ndarray:
    norms = np.linalg.norm(a, axis=1)
    bad = np.flatnonzero(norms < eps)
    if bad.size:
        raise ZeroNormVector(f"{what} row {int(bad[0])} has norm {norms[bad[0]]:.3g} < {eps:g}")
    return a / norms[:, None]


def cosine_proto_logits(
    episode: Episode,
    config: HeadConfig | None = None,
    prototypes: np.ndarray | None = None,
    eps: float = ZERO_NORM_EPS,
) -> ClassLogits:
    """``temperature * cos(query, prototype)``; bounded by +/- temperature.

    Raises
    ------
    ZeroNormVector
        If any query or prototype has norm below ``eps``.
    """
    config = config or HeadConfig()
    protos = compute_prototypes(episode) if prototypes is None else prototypes
    xq = _unit_rows(episode.query, "query", eps)
    mu = _unit_rows(protos, "prototype", eps)
    cos = np.clip(xq @ mu.T, -1.0, 1.0)
    return ClassLogits(config.temperature * cos, episode.class_ids)


@dataclass(frozen=True)
class FeatWeights:
    """Weights of a single-head self-attention block over prototypes."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    layer_norm: bool = False
    ln_gain: np.ndarray | None = None
    ln_bias: np.ndarray | None = None

    def __post_init__(self):
        d = np.shape(self.w_q)[0] if np.ndim(self.w_q) == 2 else -1
        for name in ("w_q", "w_k", "w_v"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.shape != (d, d):
                raise ValidationError(f"{name} must be square ({d}, {d}), got {m.shape}")
            object.__setattr__(self, name, m)
        if self.layer_norm:
            gain = np.ones(d) if self.ln_gain is None else np.asarray(self.ln_gain, float)
            bias = np.zeros(d) if self.ln_bias is None else np.asarray(self.ln_bias, float)
            if gain.shape != (d,) or bias.shape != (d,):
                raise ValidationError("ln_gain and ln_bias must have length d")
            object.__setattr__(self, "ln_gain", gain)
            object.__setattr__(self, "ln_bias", bias)

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, scale: float = 1.0, layer_norm=False):
        w = scale / np.sqrt(dim)
        return cls(
            w_q=w * rng.standard_normal((dim, dim)),
            w_k=w * rng.standard_normal((dim, dim)),
            w_v=w * rng.standard_normal((dim, dim)),
            layer_norm=layer_norm,
        )


def softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x: np.ndarray, gain=None, bias=None, eps: float = LAYER_NORM_EPS) -> np.ndarray:
    """Row-wise LayerNorm: recenter, divide by the population std, then affine."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    out = (x - mu) / np.sqrt(var + eps)
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out


def feat_refine(prototypes, weights: FeatWeights) -> np.ndarray:
    """Task-condition prototypes with one residual self-attention block.

    ``refined = P + softmax((P Wq)(P Wk)^T / sqrt(d)) (P Wv)``, followed by
    LayerNorm when ``weights.layer_norm`` is set. Leaving LayerNorm off keeps
    prototype norms meaningful, which the Euclidean head depends on.
    """
    p = np.asarray(prototypes, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != weights.dim:
        raise DimensionMismatch(
            f"prototypes of shape {p.shape} do not match attention width {weights.dim}"
        )
    d = p.shape[1]
    scores = (p @ weights.w_q) @ (p @ weights.w_k).T / np.sqrt(d)
    refined = p + softmax(scores, axis=1) @ (p @ weights.w_v)
    if weights.layer_norm:
        refined = layer_norm(refined, weights.ln_gain, weights.ln_bias)
    return refined


@dataclass(frozen=True)
class Prediction:
    """Argmax class per query plus the full softmax distribution."""

    labels: tuple[str, ...]
    indices: np.ndarray
    probabilities: np.ndarray


def predict(logits: ClassLogits) -> Prediction:
    """Softmax rows and argmax labels; ties go to the lowest class index."""
    probs = softmax(logits.scores, axis=1)
    # np.argmax returns the first maximal entry, which is the tie rule we want
    idx = np.argmax(logits.scores, axis=1)
    labels = tuple(logits.class_ids[i] for i in idx)
    return Prediction(labels=labels, indices=idx, probabilities=probs)


def frn_class_logits(episode: Episode, config: HeadConfig) -> ClassLogits:
    """Run an FRN-family head on an episode.

    Each class's stacked support rows form its pool and every query row is
    scored as a one-row query pool. Scores are multiplied by ``temperature``.
    """
    m, n = episode.query.shape[0], episode.way
    scores = np.empty((m, n))
    for c, s in enumerate(episode.support):
        for i in range(m):
            q = episode.query[i : i + 1]
            if config.head == "frn_full":
                z = frn.frn_logit_full(s, q, config)
            elif config.head == "frn_simplified":
                z = frn.frn_logit_simplified(s, q, config)
            else:
                z = frn.frn_logit_cosine(s, q)
            scores[i, c] = z
    return ClassLogits(config.temperature * scores, episode.class_ids)


def class_logits(
    episode: Episode, config: HeadConfig, feat: FeatWeights | None = None
) -> ClassLogits:
    """Dispatch to the head named by ``config.head``.

    If ``feat`` is given, prototypes are refined before a prototype head scores
    them; it is ignored by FRN heads.
    """
    if config.head in ("proto_euclidean", "proto_cosine"):
        protos = compute_prototypes(episode)
        if feat is not None:
            protos = feat_refine(protos, feat)
        if config.head == "proto_euclidean":
            return euclidean_proto_logits(episode, config, protos)
        return cosine_proto_logits(episode, config, protos)
    return frn_class_logits(episode, config)


def classify(episode: Episode, config: HeadConfig, feat: FeatWeights | None = None):
    """Logits and predictions for every query in ``episode``."""
    logits = class_logits(episode, config, feat)
    return logits, predict(logits)
