"""Proactive handoff decisions from per-basestation blockage predictions.

The central unit initiates a handoff exactly when the serving link is
predicted blocked while the alternative link is predicted maintained.  A
decision counts as successful when it matches the decision the ground
truth would have produced, which covers both the explicit success tuples
and every consistent stay-put combination.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pipeline import ConjugateSample


@dataclass(frozen=True)
class HandoffEvent:
    """(predicted serving, predicted other, true serving, true other)."""

    pred_serving: int
    pred_other: int
    true_serving: int
    true_other: int

    def __post_init__(self):
        for value in (self.pred_serving, self.pred_other,
                      self.true_serving, self.true_other):
            if value not in (0, 1):
                raise ValueError("handoff events are binary tuples")


def decide(pred_serving: int, pred_other: int) -> int:
    """1 = hand off, only for (serving blocked, other maintained) = (1, 0)."""
    if pred_serving not in (0, 1) or pred_other not in (0, 1):
        raise ValueError("predictions must be binary")
    return 1 if (pred_serving, pred_other) == (1, 0) else 0


def classify_event(event: HandoffEvent) -> bool:
    """Success iff the predicted decision equals the ground-truth decision."""
    return decide(event.pred_serving, event.pred_other) == \
        decide(event.true_serving, event.true_other)


@dataclass
class HandoffReport:
    category1_accuracy: float | None     # serving bs1, handoff to bs2 needed
    category2_accuracy: float | None
    category1_count: int
    category2_count: int
    overall_accuracy: float | None
    joint_correct_fraction: float | None  # both link statuses predicted right
    bs_nlos_accuracy: dict[int, float | None] = field(default_factory=dict)
    bs_los_accuracy: dict[int, float | None] = field(default_factory=dict)


def evaluate_handoff(predict_bs1, predict_bs2,
                     pairs: list[ConjugateSample]) -> HandoffReport:
    """Category-wise handoff accuracy plus per-basestation link accuracy.

    ``predict_bs1`` / ``predict_bs2`` map a LabeledSample to a binary
    future-link-status prediction; the two are evaluated independently.
    """
    events = []
    records = []
    for pair in pairs:
        p1 = int(predict_bs1(pair.sample_bs1))
        p2 = int(predict_bs2(pair.sample_bs2))
        s1 = pair.sample_bs1.label.status
        s2 = pair.sample_bs2.label.status
        if pair.category == 1:
            event = HandoffEvent(p1, p2, s1, s2)
        else:
            event = HandoffEvent(p2, p1, s2, s1)
        events.append((pair.category, classify_event(event)))
        records.append((p1, p2, s1, s2))

    def category_accuracy(category):
        outcomes = [ok for cat, ok in events if cat == category]
        return (float(np.mean(outcomes)) if outcomes else None), len(outcomes)

    cat1, n1 = category_accuracy(1)
    cat2, n2 = category_accuracy(2)
    overall = float(np.mean([ok for _, ok in events])) if events else None
    joint = (float(np.mean([p1 == s1 and p2 == s2
                            for p1, p2, s1, s2 in records]))
             if records else None)

    nlos_acc: dict[int, float | None] = {}
    los_acc: dict[int, float | None] = {}
    for bs in (1, 2):
        preds = [r[bs - 1] for r in records]
        truth = [r[bs + 1] for r in records]
        nlos = [p == t for p, t in zip(preds, truth) if t == 1]
        los = [p == t for p, t in zip(preds, truth) if t == 0]
        nlos_acc[bs] = float(np.mean(nlos)) if nlos else None
        los_acc[bs] = float(np.mean(los)) if los else None

    return HandoffReport(
        category1_accuracy=cat1,
        category2_accuracy=cat2,
        category1_count=n1,
        category2_count=n2,
        overall_accuracy=overall,
        joint_correct_fraction=joint,
        bs_nlos_accuracy=nlos_acc,
        bs_los_accuracy=los_acc,
    )
