"""Feature providers turning examples into model inputs.

Each featurizer maps one example to a matrix of item feature vectors plus
one label per item: per token for tagging (BIO ids), a single row for
relation instances, or a single precomputed vector looked up by example id
(used by the synthetic tasks).
"""

from __future__ import annotations

import numpy as np

from .corpus import Example, LabelSchema, RelationInstance, Task
from .embed import EmbeddingStore, HashedEmbedder
from .model import n_bio_tags, spans_to_tag_ids


class NerFeaturizer:
    """Token features: hashed token embedding ⊕ mean over a ±window context."""

    def __init__(self, schema: LabelSchema, embedder: HashedEmbedder, window: int = 2):
        assert schema.task == Task.NER
        self.schema = schema
        self.embedder = embedder
        self.window = window
        self.feature_dim = 2 * embedder.dim
        self.n_classes = n_bio_tags(schema)
        self._cache: dict[str, np.ndarray] = {}

    def _token_vec(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            vec = self.embedder.embed_text(token)
            self._cache[token] = vec
        return vec

    def item_features(self, ex: Example) -> np.ndarray:
        embs = np.stack([self._token_vec(t) for t in ex.tokens])
        T = len(ex.tokens)
        ctx = np.empty_like(embs)
        for i in range(T):
            lo, hi = max(0, i - self.window), min(T, i + self.window + 1)
            ctx[i] = embs[lo:hi].mean(axis=0)
        return np.concatenate([embs, ctx], axis=1)

    def item_labels(self, ex: Example, labels) -> np.ndarray:
        return spans_to_tag_ids(labels, len(ex.tokens), self.schema)


def _span_mean(embs: np.ndarray, start: int, end: int) -> np.ndarray:
    return embs[start:end].mean(axis=0)


class ReFeaturizer:
    """Instance features: subj-span mean ⊕ obj-span mean ⊕ sentence mean."""

    def __init__(self, schema: LabelSchema, embedder: HashedEmbedder):
        assert schema.task == Task.RE
        self.schema = schema
        self.embedder = embedder
        self.feature_dim = 3 * embedder.dim
        self.n_classes = len(schema.classes)

    def item_features(self, ex: Example) -> np.ndarray:
        embs = np.stack([self.embedder.embed_text(t) for t in ex.tokens])
        args = ex.relation_args()
        vec = np.concatenate([
            _span_mean(embs, args.subj.start, args.subj.end),
            _span_mean(embs, args.obj.start, args.obj.end),
            embs.mean(axis=0),
        ])
        return vec[None, :]

    def item_labels(self, ex: Example, labels) -> np.ndarray:
        assert isinstance(labels, RelationInstance) and labels.relation is not None
        return np.array([self.schema.class_index(labels.relation)], dtype=np.int64)


class VectorFeaturizer:
    """Per-instance features read straight from an embedding store by id."""

    def __init__(self, schema: LabelSchema, store: EmbeddingStore):
        self.schema = schema
        self.store = store
        self.feature_dim = store.dim
        self.n_classes = len(schema.classes)

    def item_features(self, ex: Example) -> np.ndarray:
        return self.store.get(ex.id)[None, :]

    def item_labels(self, ex: Example, labels) -> np.ndarray:
        assert isinstance(labels, RelationInstance) and labels.relation is not None
        return np.array([self.schema.class_index(labels.relation)], dtype=np.int64)


def default_featurizer(schema: LabelSchema, embedder: HashedEmbedder = None,
                       store: EmbeddingStore = None, from_store: bool = False):
    if from_store:
        if store is None:
            raise ValueError("vector featurizer needs an embedding store")
        return VectorFeaturizer(schema, store)
    embedder = embedder or HashedEmbedder()
    if schema.task == Task.NER:
        return NerFeaturizer(schema, embedder)
    return ReFeaturizer(schema, embedder)
