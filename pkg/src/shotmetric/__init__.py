"""Metric few-shot classifier heads and shot-sensitivity analysis."""

from .episode import ClassLogits, Episode, HeadConfig, load_episode, save_episode
from .errors import (
    AxisMismatch,
    DegenerateRatio,
    DimensionMismatch,
    FactorizationError,
    NumericalError,
    ShotMetricError,
    ValidationError,
    ZeroNormVector,
    ZeroQuery,
    ZeroSupport,
)
from .frn import (
    InvarianceReport,
    ReconstructionResult,
    check_invariances,
    frn_logit_cosine,
    frn_logit_full,
    frn_logit_simplified,
    frn_reconstruct,
    frn_term_ratio,
    ridge_weights,
)
from .heads import (
    FeatWeights,
    class_logits,
    classify,
    compute_prototypes,
    cosine_proto_logits,
    euclidean_proto_logits,
    feat_refine,
    predict,
)
from .sensitivity import (
    AccuracyGrid,
    SensitivityReport,
    decompose,
    gain_table,
    load_published_grid,
    read_grid_csv,
    sensitivity_score,
)
from .synth import (
    ClusterSpec,
    EvalSummary,
    consistency_rate,
    evaluate,
    make_cluster_spec,
    reference_spec,
    sample_episode,
)

__version__ = "0.1.0"
