"""Acquisition strategies over the unlabeled pool.

Uncertainty scores (entropy, least confidence) are computed per item and,
for tagging tasks, pooled over tokens (average / sum / max).  Selection
takes the top-b scores with ties broken by ascending id; k-means picks the
cluster-center-nearest members of the pool embedding space; random samples
uniformly without replacement.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .corpus import Example, LabelSchema, Task
from .embed import EmbeddingStore, kmeans
from .model import ModelParams, forward


class AcquireError(ValueError):
    pass


class Strategy(str, Enum):
    RANDOM = "random"
    ENTROPY = "entropy"
    LEAST_CONFIDENCE = "least_confidence"
    KMEANS = "kmeans"


class Pooling(str, Enum):
    AVERAGE = "average"
    SUM = "sum"
    MAX = "max"


@dataclass
class AcquisitionConfig:
    strategy: Strategy = Strategy.RANDOM
    batch_size: int = 50
    pooling: Pooling = Pooling.AVERAGE
    rng_seed: int = 0

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        self.pooling = Pooling(self.pooling)
        if self.batch_size < 1:
            raise AcquireError("batch size must be >= 1")


@dataclass(frozen=True)
class ScoredCandidate:
    id: str
    score: float


def score_entropy(dist: np.ndarray) -> float:
    """Natural-log entropy; 0 for one-hot, ln C for uniform."""
    p = np.asarray(dist, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def score_least_confidence(dist: np.ndarray) -> float:
    """One minus the probability of the predicted class."""
    return float(1.0 - np.max(np.asarray(dist, dtype=np.float64)))


def pool_token_scores(token_scores: Sequence[float], pooling: Pooling) -> float:
    scores = np.asarray(token_scores, dtype=np.float64)
    if scores.size == 0:
        raise AcquireError("cannot pool an empty token score sequence")
    pooling = Pooling(pooling)
    if pooling == Pooling.AVERAGE:
        return float(scores.mean())
    if pooling == Pooling.SUM:
        return float(scores.sum())
    return float(scores.max())


def score_candidates(params: ModelParams, pool: Sequence[Example],
                     config: AcquisitionConfig, featurizer) -> list[ScoredCandidate]:
    """Uncertainty score per pool example (higher = more worth annotating)."""
    score_fn = score_entropy if config.strategy == Strategy.ENTROPY else score_least_confidence
    schema: LabelSchema = featurizer.schema
    out = []
    for ex in pool:
        dists = forward(params, featurizer.item_features(ex))
        if schema.task == Task.NER:
            score = pool_token_scores([score_fn(row) for row in dists], config.pooling)
        else:
            score = score_fn(dists[0])
        if not np.isfinite(score):
            raise AcquireError(f"non-finite acquisition score for {ex.id!r}")
        out.append(ScoredCandidate(id=ex.id, score=score))
    return out


def top_b(scored: Sequence[ScoredCandidate], b: int) -> list[str]:
    """Highest-score prefix; ties broken by ascending id."""
    ranked = sorted(scored, key=lambda c: (-c.score, c.id))
    return [c.id for c in ranked[: min(b, len(ranked))]]


def select_batch(params: Optional[ModelParams], pool: Sequence[Example],
                 config: AcquisitionConfig, featurizer=None,
                 store: Optional[EmbeddingStore] = None,
                 rng: Optional[np.random.Generator] = None) -> list[str]:
    """Choose min(b, |pool|) distinct example ids to annotate next."""
    if len(pool) == 0:
        raise AcquireError("cannot select from an empty pool")
    b = min(config.batch_size, len(pool))
    ids = [ex.id for ex in pool]

    if config.strategy == Strategy.RANDOM:
        rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
        picked = rng.choice(len(ids), size=b, replace=False)
        return [ids[i] for i in picked]

    if config.strategy == Strategy.KMEANS:
        if store is None:
            raise AcquireError("kmeans strategy needs an embedding store")
        X = store.matrix(ids)
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        X = X / np.where(norms > 1e-12, norms, 1.0)
        reps = kmeans(X, k=b, rng_seed=config.rng_seed)
        return [ids[i] for i in reps]

    if params is None or featurizer is None:
        raise AcquireError("uncertainty strategies need model params and a featurizer")
    return top_b(score_candidates(params, pool, config, featurizer), b)


def dump_scores(scored: Sequence[ScoredCandidate], path) -> None:
    """Optional per-iteration score CSV for analysis plots."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("id,score\n")
        for cand in scored:
            f.write(f"{cand.id},{cand.score:.8f}\n")
