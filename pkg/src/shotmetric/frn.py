"""Feature-map reconstruction heads.

A class support pool ``S`` (``n_s x d``) reconstructs a query pool ``Q``
(``m_q x d``) through the ridge solution

    W = argmin ||Q - W S||^2 + rho ||W||^2

where ``rho = lam * ||S^T S||_F`` (the scale-aware "frobenius" regularizer)
or ``rho = lam * n_s / d`` (the "legacy" regularizer). The class logit is the
negative squared reconstruction residual, or one of its covariance-based
simplifications.

Throughout, ``sigma_s = S^T S`` and ``sigma_q = Q^T Q``. The expansion of the
residual uses ``sum(A * B)`` (the Frobenius inner product, equal to
``tr(A^T B)``) wherever the derivation writes an entrywise 1-norm of an
elementwise product; with absolute values the identity would not hold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import linalg

from .episode import HeadConfig
from .errors import (
    DegenerateRatio,
    DimensionMismatch,
    FactorizationError,
    ValidationError,
    ZeroQuery,
    ZeroSupport,
)

Branch = Literal["auto", "gram", "covariance"]

RATIO_EPS = 1e-12


def rel_error(a, b) -> float:
    """``||a - b||_F / max(||a||_F, ||b||_F, 1e-30)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / max(na, nb, 1e-30))


def as_pool(x, name="pool") -> np.ndarray:
    """Validate a feature pool: a finite 2-D array with at least one row and column."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _check_pair(support, query):
    s = as_pool(support, "support")
    q = as_pool(query, "query")
    if s.shape[1] != q.shape[1]:
        raise DimensionMismatch(
            f"support has dimension {s.shape[1]} but query has {q.shape[1]}"
        )
    return s, q


def ridge_coefficient(support, lam: float, regularizer: str = "frobenius") -> float:
    """The scalar ``rho`` of the ridge term for a support pool."""
    s = as_pool(support, "support")
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    if regularizer == "frobenius":
        norm = np.linalg.norm(s.T @ s)
        if norm == 0.0:
            raise ZeroSupport("support covariance has zero Frobenius norm; ridge term vanishes")
        return float(lam * norm)
    if regularizer == "legacy":
        n, d = s.shape
        return float(lam * n / d)
    raise ValidationError(f"unknown regularizer {regularizer!r}")


def _cho(a):
    try:
        return linalg.cho_factor(a, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise FactorizationError(f"Cholesky factorization failed: {exc}") from exc


def ridge_weights(support, query, rho: float, branch: Branch = "auto") -> np.ndarray:
    """Closed-form ridge weights ``W`` (``m_q x n_s``) for a given ``rho``.

    ``"gram"`` solves the ``n_s x n_s`` system ``W = Q S^T (S S^T + rho I)^-1``;
    ``"covariance"`` solves the ``d x d`` system
    ``W = Q (S^T S + rho I)^-1 S^T``. The two agree by the Woodbury identity.
    ``"auto"`` picks whichever system is smaller.
    """
    s, q = _check_pair(support, query)
    if not rho > 0:
        raise ValidationError(f"rho must be positive, got {rho}")
    n_s, d = s.shape
    if branch == "auto":
        branch = "gram" if n_s <= d else "covariance"
    if branch == "gram":
        factor = _cho(s @ s.T + rho * np.eye(n_s))
        # system is symmetric, so W^T = (S S^T + rho I)^-1 S Q^T
        return linalg.cho_solve(factor, s @ q.T, check_finite=False).T
    if branch == "covariance":
        factor = _cho(s.T @ s + rho * np.eye(d))
        return linalg.cho_solve(factor, q.T, check_finite=False).T @ s.T
    raise ValidationError(f"unknown branch {branch!r}")


@dataclass(frozen=True)
class ReconstructionResult:
    weights: np.ndarray
    reconstruction: np.ndarray
    rho: float


def frn_reconstruct(support, query, config: HeadConfig | None = None, branch: Branch = "auto"):
    """Reconstruct ``query`` from the rows of ``support`` by ridge regression.

    Parameters
    ----------
    support : array_like, shape (n_s, d)
    query : array_like, shape (m_q, d)
    config : HeadConfig, optional
        Supplies ``frn_lambda`` and ``frn_regularizer``. Defaults to
        ``HeadConfig()``.
    branch : {"auto", "gram", "covariance"}
        Which closed form to solve; see :func:`ridge_weights`.

    Returns
    -------
    ReconstructionResult
        ``weights`` (``m_q x n_s``), ``reconstruction = weights @ support``
        and the ridge coefficient ``rho`` actually used.
    """
    config = config or HeadConfig()
    s, q = _check_pair(support, query)
    rho = ridge_coefficient(s, config.frn_lambda, config.frn_regularizer)
    w = ridge_weights(s, q, rho, branch=branch)
    return ReconstructionResult(weights=w, reconstruction=w @ s, rho=rho)


def _shrinkage(s, rho):
    """``X = (sigma_s + rho I)^-1 sigma_s`` and ``sigma_s``."""
    sigma_s = s.T @ s
    factor = _cho(sigma_s + rho * np.eye(s.shape[1]))
    x = linalg.cho_solve(factor, sigma_s, check_finite=False)
    return x, sigma_s


def frn_terms(support, query, config: HeadConfig | None = None):
    """The three terms of the expanded residual, ``(term1, trace_q, term3)``.

    ``-||W S - Q||^2 = term1 - trace_q - term3`` with
    ``term1 = 2 sum(X * sigma_q)``, ``trace_q = tr(sigma_q)`` and
    ``term3 = tr(X sigma_q sigma_s (sigma_s + rho I)^-1)``.
    """
    config = config or HeadConfig()
    s, q = _check_pair(support, query)
    rho = ridge_coefficient(s, config.frn_lambda, config.frn_regularizer)
    x, _ = _shrinkage(s, rho)
    sigma_q = q.T @ q
    term1 = 2.0 * float(np.sum(x * sigma_q))
    # sigma_s (sigma_s + rho I)^-1 == X^T, both being functions of sigma_s
    term3 = float(np.trace(x @ sigma_q @ x.T))
    return term1, float(np.trace(sigma_q)), term3


def frn_logit_full(support, query, config: HeadConfig | None = None) -> float:
    """Negative squared reconstruction residual, via the covariance expansion."""
    term1, trace_q, term3 = frn_terms(support, query, config)
    return term1 - trace_q - term3


def frn_logit_simplified(support, query, config: HeadConfig | None = None) -> float:
    """``sum((sigma_s + rho I)^-1 sigma_s * sigma_q)``; always >= 0."""
    config = config or HeadConfig()
    s, q = _check_pair(support, query)
    rho = ridge_coefficient(s, config.frn_lambda, config.frn_regularizer)
    x, _ = _shrinkage(s, rho)
    return float(np.sum(x * (q.T @ q)))


def frn_logit_cosine(support, query) -> float:
    """Cosine similarity between the flattened support and query covariances.

    Lies in ``[0, 1]`` because both covariances are positive semi-definite.
    """
    s, q = _check_pair(support, query)
    sigma_s = s.T @ s
    sigma_q = q.T @ q
    ns = np.linalg.norm(sigma_s)
    nq = np.linalg.norm(sigma_q)
    if ns == 0.0:
        raise ZeroSupport("support covariance has zero Frobenius norm")
    if nq == 0.0:
        raise ZeroQuery("query covariance has zero Frobenius norm")
    return float(np.sum((sigma_s / ns) * (sigma_q / nq)))


def frn_term_ratio(support, query, config: HeadConfig | None = None) -> float:
    """Ratio of the leading expansion term to the dropped quadratic term.

    A diagnostic for how well the simplified logit tracks the full one: when
    the ratio is nearly constant across classes, dropping the quadratic term
    changes logits only by a common factor.
    """
    term1, _, term3 = frn_terms(support, query, config)
    if abs(term3) < RATIO_EPS:
        raise DegenerateRatio(f"quadratic term is {term3:.3g}; ratio undefined")
    return term1 / term3


# ---------------------------------------------------------------------------
# invariance checks


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    worst: float
    tolerance: float


@dataclass(frozen=True)
class InvarianceReport:
    regularizer: str
    trials: int
    shot: PropertyResult
    scale: PropertyResult
    dimension: PropertyResult

    @property
    def properties(self) -> tuple[PropertyResult, ...]:
        return (self.shot, self.scale, self.dimension)

    @property
    def all_passed(self) -> bool:
        return all(p.passed for p in self.properties)


def random_instance(rng: np.random.Generator, max_rows=20, max_dim=20, max_query=5):
    """A random ``(support, query, lam)`` triple for property checks."""
    n_s = int(rng.integers(1, max_rows + 1))
    d = int(rng.integers(1, max_dim + 1))
    m_q = int(rng.integers(1, max_query + 1))
    lam = float(10 ** rng.uniform(-3, 1))
    return rng.standard_normal((n_s, d)), rng.standard_normal((m_q, d)), lam


def check_invariances(
    trials: int = 100,
    rng_seed: int = 0,
    regularizer: str = "frobenius",
    alpha: float | None = None,
    tol: float = 1e-8,
) -> InvarianceReport:
    """Numerically check shot invariance, scale and dimensionality equivariance.

    For each random instance:

    * shot: duplicating every support row leaves the reconstruction unchanged;
    * scale: scaling support and query by ``alpha`` scales the reconstruction
      by ``alpha`` (``alpha`` drawn log-uniformly from [0.1, 10] per trial
      unless given);
    * dimension: concatenating every feature vector to itself yields the
      original reconstruction concatenated to itself.

    Worst-case relative errors are reported per property.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    worst = {"shot": 0.0, "scale": 0.0, "dimension": 0.0}
    for _ in range(trials):
        s, q, lam = random_instance(rng)
        a = alpha if alpha is not None else float(10 ** rng.uniform(-1, 1))
        cfg = HeadConfig(frn_lambda=lam, frn_regularizer=regularizer)
        base = frn_reconstruct(s, q, cfg).reconstruction

        doubled = frn_reconstruct(np.vstack([s, s]), q, cfg).reconstruction
        worst["shot"] = max(worst["shot"], rel_error(doubled, base))

        scaled = frn_reconstruct(a * s, a * q, cfg).reconstruction
        worst["scale"] = max(worst["scale"], rel_error(scaled, a * base))

        wide = frn_reconstruct(np.hstack([s, s]), np.hstack([q, q]), cfg).reconstruction
        worst["dimension"] = max(worst["dimension"], rel_error(wide, np.hstack([base, base])))

    def result(name):
        return PropertyResult(name, worst[name] <= tol, worst[name], tol)

    return InvarianceReport(
        regularizer=regularizer,
        trials=trials,
        shot=result("shot"),
        scale=result("scale"),
        dimension=result("dimension"),
    )
