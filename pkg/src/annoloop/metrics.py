"""Span- and instance-level micro precision/recall/F1."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import Example, LabelSchema, RelationInstance, Task
from .model import ModelParams, decode_bio, forward


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def to_obj(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
        }


def prf_from_counts(tp: int, fp: int, fn: int) -> Metrics:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return Metrics(precision=p, recall=r, f1=f1, tp=tp, fp=fp, fn=fn)


def span_counts(gold_spans: Sequence, pred_spans: Sequence) -> tuple[int, int, int]:
    """Exact (start, end, class) matching within one sentence."""
    g, p = set(gold_spans), set(pred_spans)
    return len(g & p), len(p - g), len(g - p)


def relation_counts(gold: str, pred: str, na_class: Optional[str]) -> tuple[int, int, int]:
    """Micro counts with the NA class excluded as a positive."""
    tp = fp = fn = 0
    if gold != na_class and pred == gold:
        tp = 1
    if pred != na_class and pred != gold:
        fp = 1
    if gold != na_class and pred != gold:
        fn = 1
    return tp, fp, fn


def predict_spans(params: ModelParams, ex: Example, featurizer) -> list:
    return decode_bio(forward(params, featurizer.item_features(ex)), featurizer.schema)


def predict_relation(params: ModelParams, ex: Example, featurizer) -> str:
    probs = forward(params, featurizer.item_features(ex))
    return featurizer.schema.classes[int(np.argmax(probs[0]))]


def evaluate(params: ModelParams, examples: Sequence[Example], schema: LabelSchema,
             featurizer) -> Metrics:
    """Micro P/R/F1 of the model against gold labels.

    Tagging: predicted spans matched to gold by exact (start, end, class).
    Relations: per-instance classes, NA excluded as a positive (a non-NA
    prediction on an NA gold still counts as a false positive).
    """
    tp = fp = fn = 0
    for ex in examples:
        if ex.gold is None:
            raise ValueError(f"example {ex.id!r} has no gold labels to evaluate against")
        if schema.task == Task.NER:
            t, f, n = span_counts(ex.gold, predict_spans(params, ex, featurizer))
        else:
            assert isinstance(ex.gold, RelationInstance)
            pred = predict_relation(params, ex, featurizer)
            t, f, n = relation_counts(ex.gold.relation, pred, schema.na_class)
        tp, fp, fn = tp + t, fp + f, fn + n
    return prf_from_counts(tp, fp, fn)
