"""Domain types and the baseline / prior-re-weighted decision rules.

A classifier trained on balanced data implicitly assumes every class is
equally likely.  When the deployment environment favors a subset of
classes, multiplying each confidence score by an estimated class prior
and taking the argmax recovers the Bayes-optimal decision under the new
priors, without retraining.  This module holds the immutable value types
the rest of the package is built on, plus the two decision rules.

All types are frozen dataclasses wrapping read-only numpy arrays; every
operation is a pure function, so everything here is safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, InsufficientDataError, ValidationError

SCORE_SUM_TOL = 1e-6
PRIOR_SUM_TOL = 1e-9
ROW_SUM_TOL = 1e-9

ESTIMATOR_METHODS = (
    "naive",
    "precision_recall",
    "matrix_inverse",
    "quadratic_program",
    "ground_truth",
    "uniform",
)


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered list of the K class names known to the classifier."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValidationError(f"catalog needs at least 2 classes, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise ValidationError("catalog labels must be unique")
        if any(not isinstance(l, str) or not l for l in labels):
            raise ValidationError("catalog labels must be non-empty strings")

    @property
    def k(self) -> int:
        return len(self.labels)

    def uniform_prior(self) -> float:
        """The balanced-training prior, 1/K."""
        return 1.0 / self.k

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown class label {label!r}") from None


@dataclass(frozen=True)
class ScoreRecord:
    """One deployment sample: a softmax score vector, optionally labelled.

    Scores must already be probabilities summing to 1 (within 1e-6);
    violating records are rejected rather than silently renormalized so
    upstream data bugs surface immediately.
    """

    scores: np.ndarray
    true_label: Optional[int] = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size < 2:
            raise ValidationError(f"scores must be a vector of K >= 2 entries, got shape {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise ValidationError("scores contain NaN or infinity")
        if np.any(scores < 0.0) or np.any(scores > 1.0):
            raise ValidationError("scores must lie in [0, 1]")
        total = float(scores.sum())
        if abs(total - 1.0) > SCORE_SUM_TOL:
            raise ValidationError(f"scores sum to {total!r}, expected 1 within {SCORE_SUM_TOL}")
        if self.true_label is not None:
            lbl = int(self.true_label)
            if lbl < 0 or lbl >= scores.size:
                raise ValidationError(f"true_label {lbl} out of range for {scores.size} classes")
            object.__setattr__(self, "true_label", lbl)
        object.__setattr__(self, "scores", _readonly(scores))

    @property
    def k(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-normalized confusion matrix measured on balanced held-out data.

    Entry ``rows[j, i]`` estimates the probability of deciding class ``i``
    when the true class is ``j``.  Construction accepts raw nonnegative
    counts or already-normalized rows; rows are normalized to sum to 1
    either way.  ``sample_counts`` optionally records how many evaluation
    samples produced each row.
    """

    catalog: ClassCatalog
    rows: np.ndarray
    sample_counts: Optional[np.ndarray] = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        k = self.catalog.k
        if rows.shape != (k, k):
            raise DimensionError(f"confusion matrix must be {k}x{k}, got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValidationError("confusion matrix contains NaN or infinity")
        if np.any(rows < 0.0):
            raise ValidationError("confusion matrix entries must be nonnegative")
        sums = rows.sum(axis=1)
        zero = np.nonzero(sums == 0.0)[0]
        if zero.size:
            raise ValidationError(
                f"confusion row {self.catalog.labels[zero[0]]!r} is all zeros and cannot be normalized"
            )
        object.__setattr__(self, "rows", _readonly(rows / sums[:, None]))
        if self.sample_counts is not None:
            counts = np.asarray(self.sample_counts, dtype=np.int64)
            if counts.shape != (k,):
                raise DimensionError(f"sample_counts must have length {k}")
            if np.any(counts < 0):
                raise ValidationError("sample_counts must be nonnegative")
            counts.setflags(write=False)
            object.__setattr__(self, "sample_counts", counts)

    @property
    def k(self) -> int:
        return self.catalog.k

    def mixing_matrix(self) -> np.ndarray:
        """Matrix mapping class priors to the expected decision distribution.

        Its columns are the confusion rows, so ``mixing_matrix() @ priors``
        gives the decision frequencies a deployed classifier produces under
        those priors.
        """
        return self.rows.T.copy()


@dataclass(frozen=True)
class DecisionHistogram:
    """Counts of argmax decisions per class observed during deployment."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 2:
            raise ValidationError(f"counts must be a vector of K >= 2 entries, got shape {counts.shape}")
        if not np.issubdtype(counts.dtype, np.integer):
            as_int = np.asarray(counts, dtype=np.int64)
            if not np.array_equal(as_int, counts):
                raise ValidationError("decision counts must be integers")
            counts = as_int
        else:
            counts = counts.astype(np.int64, copy=True)
        if np.any(counts < 0):
            raise ValidationError("decision counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def k(self) -> int:
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def normalized(self) -> np.ndarray:
        """The observation vector of decision frequencies, counts / total."""
        if self.total == 0:
            raise InsufficientDataError("cannot normalize an empty decision histogram")
        return self.counts / self.total


@dataclass(frozen=True)
class EstimatorDiagnostics:
    """Optional bookkeeping attached to a prior estimate."""

    residual: Optional[float] = None  # ||Hv - c||_2 of the returned vector
    iterations: Optional[int] = None
    clipped_mass: Optional[float] = None  # negative mass removed before renormalizing


@dataclass(frozen=True)
class PriorEstimate:
    """A point on the K-simplex tagged with the method that produced it."""

    values: np.ndarray
    method: str
    diagnostics: EstimatorDiagnostics = field(default_factory=EstimatorDiagnostics)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise ValidationError(f"prior vector must have K >= 2 entries, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("prior vector contains NaN or infinity")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValidationError("priors must lie in [0, 1]")
        total = float(values.sum())
        if abs(total - 1.0) > PRIOR_SUM_TOL:
            raise ValidationError(f"priors sum to {total!r}, expected 1 within {PRIOR_SUM_TOL}")
        if self.method not in ESTIMATOR_METHODS:
            raise ValidationError(f"unknown estimation method {self.method!r}")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def k(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class AdaptedPolicy:
    """Estimated priors plus the per-class decision weights they induce.

    The weights are ``K * prior`` (the ratio of the estimated prior over the
    balanced-training prior 1/K).  Decisions depend only on the argmax of
    ``weight * score``, so any positive rescaling of the weights describes
    the same policy.
    """

    priors: PriorEstimate
    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != self.priors.values.shape:
            raise DimensionError("weights and priors must have the same length")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0):
            raise ValidationError("weights must be finite and nonnegative")
        if not np.array_equal(weights == 0.0, self.priors.values == 0.0):
            raise ValidationError("weights must vanish exactly where the priors do")
        object.__setattr__(self, "weights", _readonly(weights))

    @classmethod
    def from_priors(cls, priors: PriorEstimate) -> "AdaptedPolicy":
        return cls(priors=priors, weights=priors.k * priors.values)

    @property
    def k(self) -> int:
        return self.priors.k


def uniform_estimate(k: int) -> PriorEstimate:
    """The balanced-training prior as an estimate (re-weighting no-op)."""
    return PriorEstimate(np.full(k, 1.0 / k), method="uniform")


def _check_dims(record: ScoreRecord, k: int) -> None:
    if record.k != k:
        raise DimensionError(f"record has {record.k} scores, expected {k}")


def decide_baseline(record: ScoreRecord, catalog: Optional[ClassCatalog] = None) -> int:
    """Default decision rule: index of the maximum score.

    Ties break toward the lowest class index, so the rule is deterministic.
    """
    if catalog is not None:
        _check_dims(record, catalog.k)
    return int(np.argmax(record.scores))


def reweight(record: ScoreRecord, policy: AdaptedPolicy) -> np.ndarray:
    """Per-class product of estimated prior and score.

    The result is deliberately not renormalized: the evidence term shared
    by all classes cannot change the argmax, and keeping raw products makes
    the positive-scaling invariance explicit.  Use
    :func:`reweight_normalized` for display.
    """
    _check_dims(record, policy.k)
    return policy.priors.values * record.scores


def reweight_normalized(record: ScoreRecord, policy: AdaptedPolicy) -> np.ndarray:
    """Re-weighted products scaled to sum to 1 when their sum is positive.

    When every product is zero the raw zero vector is returned unchanged;
    there is no meaningful normalization in that case.
    """
    products = reweight(record, policy)
    total = products.sum()
    if total > 0.0:
        return products / total
    return products


def decide_adapted(
    record: ScoreRecord,
    policy: AdaptedPolicy,
    return_fallback: bool = False,
):
    """Prior-aware decision rule: argmax of prior times score.

    Ties break toward the lowest class index.  If every product is zero
    (the rule is undefined there) the baseline decision is used instead;
    pass ``return_fallback=True`` to also receive a flag telling whether
    that fallback fired.
    """
    products = reweight(record, policy)
    fell_back = not np.any(products > 0.0)
    if fell_back:
        decision = decide_baseline(record)
    else:
        decision = int(np.argmax(products))
    if return_fallback:
        return decision, fell_back
    return decision
