"""Accumulate deployment decisions into histograms.

The monitor is the single mutable object in the package: one owner feeds
decisions in, and :meth:`StreamMonitor.snapshot` hands out immutable
histogram copies that may cross threads freely.  Cumulative counting is
the default; a fixed-length sliding window supports environments whose
class mixture drifts over time.
"""

from __future__ import annotations

from collections import deque
from typing import Optional

import numpy as np

from .core import (
    AdaptedPolicy,
    ClassCatalog,
    DecisionHistogram,
    ScoreRecord,
    decide_adapted,
    decide_baseline,
)
from .errors import DimensionError, InsufficientDataError, ValidationError


class StreamMonitor:
    """Running histogram of a classifier's argmax decisions.

    With ``window=W`` only the most recent W decisions are counted; older
    ones are evicted as new ones arrive.  Without a window all decisions
    accumulate.

    By default the histogram counts baseline (unweighted) decisions even
    when a re-weighting policy is in play: the estimation model relates
    priors to the classifier's raw decision frequencies, and feeding the
    adapted decisions back in creates a feedback loop with no supporting
    analysis.  Opt into that loop explicitly with ``closed_loop=True``.
    """

    def __init__(
        self,
        catalog: ClassCatalog,
        window: Optional[int] = None,
        closed_loop: bool = False,
    ):
        if window is not None and window < 1:
            raise ValidationError("window length must be >= 1")
        self.catalog = catalog
        self.window = window
        self.closed_loop = closed_loop
        self._counts = np.zeros(catalog.k, dtype=np.int64)
        self._ring: Optional[deque[int]] = deque() if window is not None else None
        self._seen = 0

    @property
    def decisions_seen(self) -> int:
        """Total decisions ingested, including any evicted from the window."""
        return self._seen

    def ingest(self, decision: int) -> None:
        """Count one decision, evicting the oldest if the window is full."""
        decision = int(decision)
        if decision < 0 or decision >= self.catalog.k:
            raise ValidationError(
                f"decision index {decision} out of range for {self.catalog.k} classes"
            )
        if self._ring is not None:
            if len(self._ring) == self.window:
                evicted = self._ring.popleft()
                self._counts[evicted] -= 1
            self._ring.append(decision)
        self._counts[decision] += 1
        self._seen += 1

    def ingest_scored(
        self,
        record: ScoreRecord,
        policy: Optional[AdaptedPolicy] = None,
    ) -> int:
        """Decide a score record, count the decision, and return it.

        The counted decision is the baseline one unless this monitor was
        built with ``closed_loop=True`` and a policy is supplied.
        """
        if record.k != self.catalog.k:
            raise DimensionError(
                f"record has {record.k} scores, expected {self.catalog.k}"
            )
        if self.closed_loop and policy is not None:
            decision = decide_adapted(record, policy)
        else:
            decision = decide_baseline(record)
        self.ingest(decision)
        return decision

    def snapshot(self) -> DecisionHistogram:
        """Immutable copy of the current histogram.

        Later ingests never mutate a snapshot already handed out.
        """
        total = int(self._counts.sum())
        if total == 0:
            raise InsufficientDataError("no decisions ingested yet")
        return DecisionHistogram(self._counts.copy())
