"""Scalar evaluation metrics for word-, sentence- and document-level QE.

BAD is the positive class throughout. F1 of a class that is neither predicted
nor present in the gold is defined as 1 (and 0 whenever a precision/recall
denominator vanishes otherwise); this keeps F1-MULT stable on degenerate
folds during k-fold estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .corpus import Tag
from .errors import DegenerateInput, EmptyInput

__all__ = ["ContingencyTable", "F1Mult", "threshold", "f1_mult", "mcc", "pearson"]


@dataclass(frozen=True)
class ContingencyTable:
    """Binary confusion counts with BAD as the positive class."""

    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_tags(cls, gold: Sequence[Tag], pred: Sequence[Tag]) -> "ContingencyTable":
        if len(gold) != len(pred):
            raise EmptyInput(f"gold has {len(gold)} tags, prediction has {len(pred)}")
        if not gold:
            raise EmptyInput("cannot score zero tags")
        tp = fp = tn = fn = 0
        for g, p in zip(gold, pred):
            if p is Tag.BAD:
                if g is Tag.BAD:
                    tp += 1
                else:
                    fp += 1
            else:
                if g is Tag.BAD:
                    fn += 1
                else:
                    tn += 1
        return cls(tp=tp, fp=fp, tn=tn, fn=fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class F1Mult(NamedTuple):
    f1_ok: float
    f1_bad: float
    f1_mult: float


def threshold(probs: Sequence[float], t: float) -> list[Tag]:
    """Map P(BAD) values to tags; the boundary is BAD (tag = BAD iff p >= t)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold {t} outside [0, 1]")
    return [Tag.BAD if p >= t else Tag.OK for p in probs]


def _class_f1(tp: int, pred_count: int, gold_count: int) -> float:
    if pred_count == 0 and gold_count == 0:
        return 1.0
    precision = tp / pred_count if pred_count else 0.0
    recall = tp / gold_count if gold_count else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def f1_mult(gold: Sequence[Tag], pred: Sequence[Tag]) -> F1Mult:
    """F1 of each class plus their product, the word-level task metric."""
    table = ContingencyTable.from_tags(gold, pred)
    f1_bad = _class_f1(table.tp, table.tp + table.fp, table.tp + table.fn)
    f1_ok = _class_f1(table.tn, table.tn + table.fn, table.tn + table.fp)
    return F1Mult(f1_ok=f1_ok, f1_bad=f1_bad, f1_mult=f1_ok * f1_bad)


def mcc(gold: Sequence[Tag], pred: Sequence[Tag]) -> float:
    """Matthews correlation over the tag confusion matrix; 0 whenever any
    marginal is empty."""
    t = ContingencyTable.from_tags(gold, pred)
    denom_sq = (t.tp + t.fp) * (t.tp + t.fn) * (t.tn + t.fp) * (t.tn + t.fn)
    if denom_sq == 0:
        return 0.0
    return (t.tp * t.tn - t.fp * t.fn) / math.sqrt(denom_sq)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation."""
    if len(x) != len(y):
        raise DegenerateInput(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise DegenerateInput("need at least two points")
    n = len(x)
    mean_x = math.fsum(x) / n
    mean_y = math.fsum(y) / n
    dx = [v - mean_x for v in x]
    dy = [v - mean_y for v in y]
    var_x = math.fsum(d * d for d in dx)
    var_y = math.fsum(d * d for d in dy)
    if var_x == 0.0 or var_y == 0.0:
        raise DegenerateInput("correlation with a constant vector is undefined")
    cov = math.fsum(a * b for a, b in zip(dx, dy))
    return cov / math.sqrt(var_x * var_y)
