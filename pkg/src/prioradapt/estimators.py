"""Prior estimation from the classifier's observed decision frequencies.

Four routes from a decision histogram to a prior vector on the simplex:

* ``estimate_naive`` — raw decision frequencies.  Exact when precision
  equals recall per class.
* ``estimate_precision_recall`` — frequencies corrected by the per-class
  precision/recall ratio read off a balanced confusion matrix.
* ``estimate_matrix_inverse`` — direct solve of the decision-mixing model,
  negatives clipped to zero and the result renormalized.
* ``estimate_qp`` — least squares over the probability simplex, which is
  the clipping-free way to enforce valid priors.

All estimators renormalize onto the simplex, which is harmless for the
downstream decision rule: re-weighted decisions are invariant to positive
scaling of the prior vector.

A caveat on the precision/recall route: the decision frequencies come from
the deployment stream while precision comes from balanced offline data, and
precision itself depends on the deployment priors.  Under strongly skewed
priors the correction is therefore only approximate; the matrix-inverse and
least-squares routes model the full error structure instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import (
    ConfusionMatrix,
    DecisionHistogram,
    EstimatorDiagnostics,
    PriorEstimate,
)
from .errors import (
    DegenerateRecallError,
    DimensionError,
    IllConditionedError,
    InsufficientDataError,
    ValidationError,
)
from .solver import (
    CONDITION_LIMIT,
    SolverOptions,
    condition_estimate,
    solve_linear,
    solve_simplex_lsq,
)

Observations = Union[DecisionHistogram, np.ndarray, "list[float]"]


@dataclass(frozen=True)
class PrecisionRecallTable:
    """Per-class precision and recall derived from a confusion matrix.

    ``undefined`` flags classes whose column carries no mass, for which
    precision is reported as 0 but is really 0/0.
    """

    precision: np.ndarray
    recall: np.ndarray
    undefined: np.ndarray

    def __post_init__(self):
        precision = np.asarray(self.precision, dtype=np.float64)
        recall = np.asarray(self.recall, dtype=np.float64)
        undefined = np.asarray(self.undefined, dtype=bool)
        if precision.shape != recall.shape or precision.shape != undefined.shape:
            raise DimensionError("precision, recall and undefined must share a shape")
        for name, vec in (("precision", precision), ("recall", recall)):
            if np.any(vec < 0.0) or np.any(vec > 1.0 + 1e-12):
                raise ValidationError(f"{name} entries must lie in [0, 1]")
        for a in (precision, recall, undefined):
            a.setflags(write=False)
        object.__setattr__(self, "precision", precision)
        object.__setattr__(self, "recall", recall)
        object.__setattr__(self, "undefined", undefined)


def precision_recall(
    conf: ConfusionMatrix,
    assumed_priors: Optional[PriorEstimate] = None,
) -> PrecisionRecallTable:
    """Read per-class precision and recall off a confusion matrix.

    Recall is the diagonal of the row-normalized matrix.  Precision is the
    diagonal over the column sum, i.e. it assumes the balanced test
    conditions the matrix was measured under; pass ``assumed_priors`` to
    weight the columns by a different class distribution instead.

    Classes whose (weighted) column sums to zero get precision 0 with the
    ``undefined`` flag set.
    """
    rows = conf.rows
    recall = np.diag(rows).copy()
    if assumed_priors is None:
        weighted = rows
        diag = recall
    else:
        if assumed_priors.k != conf.k:
            raise DimensionError("assumed_priors dimension does not match the confusion matrix")
        weighted = rows * assumed_priors.values[:, None]
        diag = np.diag(weighted)
    column_mass = weighted.sum(axis=0)
    undefined = column_mass == 0.0
    precision = np.zeros(conf.k)
    np.divide(diag, column_mass, out=precision, where=~undefined)
    return PrecisionRecallTable(precision=precision, recall=recall, undefined=undefined)


def _observation_vector(hist: Observations, k: int) -> np.ndarray:
    """Accept a decision histogram or a pre-normalized observation vector."""
    if isinstance(hist, DecisionHistogram):
        if hist.k != k:
            raise DimensionError(f"histogram has {hist.k} classes, expected {k}")
        return hist.normalized()
    c = np.asarray(hist, dtype=np.float64)
    if c.shape != (k,):
        raise DimensionError(f"observation vector must have length {k}, got shape {c.shape}")
    if not np.all(np.isfinite(c)) or np.any(c < 0.0):
        raise ValidationError("observation vector must be finite and nonnegative")
    total = float(c.sum())
    if total <= 0.0:
        raise InsufficientDataError("observation vector has no mass")
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"observation vector sums to {total!r}, expected 1")
    return c


def estimate_naive(hist: Observations, k: Optional[int] = None) -> PriorEstimate:
    """Decision frequencies as priors: count_i / total.

    Exact when per-class precision equals recall; otherwise a biased but
    often serviceable first guess.
    """
    if isinstance(hist, DecisionHistogram):
        if hist.total < 1:
            raise InsufficientDataError("naive estimate needs at least one decision")
        values = hist.normalized()
    else:
        if k is None:
            k = np.asarray(hist).shape[0]
        values = _observation_vector(hist, k)
        values = values / values.sum()
    return PriorEstimate(values, method="naive")


def estimate_precision_recall(
    hist: Observations,
    table: PrecisionRecallTable,
) -> PriorEstimate:
    """Frequency estimate corrected by the precision/recall ratio.

    Each class frequency is scaled by precision/recall before renormalizing
    onto the simplex.  Classes that received no decisions contribute zero
    regardless of their table entries; a class that did receive decisions
    but has zero recall makes the correction undefined and raises
    :class:`DegenerateRecallError`.
    """
    k = table.recall.size
    if isinstance(hist, DecisionHistogram):
        if hist.total < 1:
            raise InsufficientDataError("precision/recall estimate needs at least one decision")
        observed = hist.counts.astype(np.float64)
    else:
        observed = _observation_vector(hist, k)
    if observed.shape != table.recall.shape:
        raise DimensionError("histogram dimension does not match the precision/recall table")

    active = observed > 0.0
    bad = active & (table.recall == 0.0)
    if np.any(bad):
        idx = int(np.nonzero(bad)[0][0])
        raise DegenerateRecallError(
            f"class {idx} received decisions but has zero recall; its prior is unidentifiable"
        )
    # Scale counts by the precision/recall ratio; the ratio is exactly 1
    # when precision equals recall, so this path reduces to the naive
    # estimate bit for bit.
    ratio = np.ones(k)
    np.divide(table.precision, table.recall, out=ratio, where=active)
    raw = np.where(active, ratio * observed, 0.0)
    total = raw.sum()
    if total <= 0.0:
        raise InsufficientDataError("all corrected frequencies are zero")
    return PriorEstimate(raw / total, method="precision_recall")


def estimate_matrix_inverse(
    conf: ConfusionMatrix,
    hist: Observations,
) -> PriorEstimate:
    """Direct solve of the decision-mixing model, clipped onto the simplex.

    Solves ``H v = c`` where the columns of H are the confusion rows and c
    is the observed decision frequency vector.  Nothing constrains the raw
    solution to be a probability vector, so negative entries are clipped to
    zero and the remainder renormalized.  Diagnostics record the clipped
    mass and the residual of the returned (clipped) vector.

    Raises :class:`IllConditionedError` when the condition estimate exceeds
    1e12; fall back to :func:`estimate_qp` in that case.
    """
    c = _observation_vector(hist, conf.k)
    h = conf.mixing_matrix()
    cond = condition_estimate(h)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditionedError(
            f"mixing matrix condition estimate {cond:.3e} exceeds {CONDITION_LIMIT:.0e}; "
            "use the least-squares estimator instead"
        )
    raw = solve_linear(h, c)
    clipped = np.maximum(raw, 0.0)
    clipped_mass = float((clipped - raw).sum())
    total = clipped.sum()
    if total <= 0.0:
        raise IllConditionedError("clipped solution has no positive mass")
    values = clipped / total
    residual = float(np.linalg.norm(h @ values - c))
    return PriorEstimate(
        values,
        method="matrix_inverse",
        diagnostics=EstimatorDiagnostics(residual=residual, clipped_mass=clipped_mass),
    )


def estimate_qp(
    conf: ConfusionMatrix,
    hist: Observations,
    opts: Optional[SolverOptions] = None,
) -> PriorEstimate:
    """Least-squares fit of the decision-mixing model over the simplex.

    Minimizes ``||H v - c||^2`` subject to v being a probability vector.
    Unlike the direct solve this is well-posed even for singular H, and it
    never needs clipping.  Diagnostics carry the final residual and the
    iteration count.
    """
    c = _observation_vector(hist, conf.k)
    h = conf.mixing_matrix()
    values, report = solve_simplex_lsq(h, c, opts)
    return PriorEstimate(
        values,
        method="quadratic_program",
        diagnostics=EstimatorDiagnostics(
            residual=float(np.sqrt(report.residual)),
            iterations=report.iterations,
        ),
    )


def estimate_ground_truth(priors) -> PriorEstimate:
    """Wrap known true priors for the oracle comparison row."""
    values = np.asarray(priors, dtype=np.float64)
    return PriorEstimate(values, method="ground_truth")
