"""Vector representations for demonstration retrieval and diversity selection.

Two providers: precomputed vectors loaded from a JSONL file
(``{"id": str, "vec": [float]}``), or a deterministic hashed character
trigram fallback that needs no model.  Retrieval is brute-force cosine
(pools here are small enough that an ANN index would be overkill).
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

DEGENERATE_NORM = 1e-12


class EmbedError(ValueError):
    pass


def is_degenerate(vec: np.ndarray) -> bool:
    return float(np.linalg.norm(vec)) <= DEGENERATE_NORM


class HashedEmbedder:
    """Signed-hash bag of character trigrams, l2-normalized.

    Byte-identical inputs give bit-identical vectors (crc32 is stable across
    runs and platforms, unlike the builtin ``hash``).
    """

    provider = "hashed_fallback"

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise EmbedError("dim must be >= 1")
        self.dim = dim

    def embed_text(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        if not text:
            return vec
        # n-grams over characters, not bytes, so multi-byte scripts hash whole chars
        padded = f" {text} "
        for i in range(len(padded) - 2):
            gram = padded[i:i + 3].encode("utf-8")
            bucket = zlib.crc32(gram) % self.dim
            sign = 1.0 if zlib.crc32(gram, 0x5F3759DF) & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm > DEGENERATE_NORM:
            vec /= norm
        return vec

    def embed_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        return self.embed_text(" ".join(tokens))


class EmbeddingStore:
    """Immutable id -> vector map with a fixed dimension."""

    def __init__(self, vectors: dict[str, np.ndarray], provider: str,
                 normalized: bool = False):
        if not vectors:
            raise EmbedError("empty embedding store")
        dims = {v.shape for v in vectors.values()}
        if len(dims) != 1:
            raise EmbedError(f"inconsistent vector shapes: {sorted(dims)}")
        self._vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        for k, v in self._vectors.items():
            if not np.all(np.isfinite(v)):
                raise EmbedError(f"non-finite embedding for id {k!r}")
            if normalized and abs(np.linalg.norm(v) - 1.0) > 1e-9 and not is_degenerate(v):
                raise EmbedError(f"embedding for id {k!r} is not unit-norm")
        self.provider = provider
        self.normalized = normalized
        self.dim = next(iter(self._vectors.values())).shape[0]

    def __contains__(self, ex_id: str) -> bool:
        return ex_id in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def ids(self) -> list[str]:
        return list(self._vectors)

    def get(self, ex_id: str) -> np.ndarray:
        try:
            return self._vectors[ex_id]
        except KeyError:
            raise EmbedError(f"no embedding for id {ex_id!r}") from None

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        return np.stack([self.get(i) for i in ids])

    def normalized_copy(self) -> "EmbeddingStore":
        vecs = {}
        for k, v in self._vectors.items():
            norm = np.linalg.norm(v)
            vecs[k] = v / norm if norm > DEGENERATE_NORM else v.copy()
        return EmbeddingStore(vecs, provider=self.provider, normalized=True)

    @classmethod
    def from_jsonl(cls, path) -> "EmbeddingStore":
        path = Path(path)
        if not path.exists():
            raise EmbedError(f"no such file: {path}")
        vectors = {}
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    vectors[str(obj["id"])] = np.asarray(obj["vec"], dtype=np.float64)
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise EmbedError(f"{path}:{lineno}: bad embedding line ({e})") from None
        return cls(vectors, provider="precomputed_file")

    @classmethod
    def build(cls, examples: Iterable, embedder: HashedEmbedder) -> "EmbeddingStore":
        vectors = {ex.id: embedder.embed_tokens(ex.tokens) for ex in examples}
        return cls(vectors, provider=embedder.provider, normalized=True)

    def save_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for ex_id, vec in self._vectors.items():
                f.write(json.dumps({"id": ex_id, "vec": vec.tolist()}) + "\n")


def cosine_similarities(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity; zero rows score 0."""
    qnorm = np.linalg.norm(query)
    if qnorm <= DEGENERATE_NORM:
        raise EmbedError("degenerate (zero) query vector")
    row_norms = np.linalg.norm(matrix, axis=1)
    sims = matrix @ query / qnorm
    nonzero = row_norms > DEGENERATE_NORM
    sims[nonzero] /= row_norms[nonzero]
    sims[~nonzero] = 0.0
    return sims


def knn_query(store: EmbeddingStore, query: np.ndarray, k: int,
              candidate_ids: Sequence[str]) -> list[tuple[str, float]]:
    """Top-k candidates by descending cosine similarity, ties by ascending id."""
    if k < 1:
        raise EmbedError("k must be >= 1")
    if len(candidate_ids) == 0:
        raise EmbedError("no candidates for knn query")
    sims = cosine_similarities(store.matrix(candidate_ids), np.asarray(query, dtype=np.float64))
    order = sorted(range(len(candidate_ids)), key=lambda i: (-sims[i], candidate_ids[i]))
    return [(candidate_ids[i], float(sims[i])) for i in order[: min(k, len(candidate_ids))]]


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a centroid; pick any unchosen
            remaining = [i for i in range(n) if i not in set(chosen)]
            nxt = int(rng.choice(remaining))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[chosen].copy()


def kmeans(vectors, k: int, rng_seed: int, max_iters: int = 50,
           tol: float = 1e-6) -> list[int]:
    """Lloyd's algorithm with seeded k-means++ init.

    Returns one distinct member index per cluster: the member nearest its
    centroid.  Callers should pass l2-normalized vectors, which makes the
    Euclidean nearest-member rule agree with cosine similarity.  An empty
    cluster is re-seeded from the point farthest from its assigned centroid.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        X = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    n = X.shape[0]
    if k < 1:
        raise EmbedError("k must be >= 1")
    if k > n:
        raise EmbedError(f"k={k} exceeds number of vectors ({n})")

    rng = np.random.default_rng(rng_seed)
    centroids = _kmeanspp_init(X, k, rng)
    prev_objective = np.inf

    for _ in range(max_iters):
        dists = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        assign = np.argmin(dists, axis=1)
        objective = float(dists[np.arange(n), assign].sum())

        new_centroids = centroids.copy()
        reseeded = False
        for j in range(k):
            members = np.flatnonzero(assign == j)
            if members.size == 0:
                farthest = int(np.argmax(dists[np.arange(n), assign]))
                new_centroids[j] = X[farthest]
                reseeded = True
            else:
                new_centroids[j] = X[members].mean(axis=0)
        if not reseeded:
            # Lloyd guarantee; reseeding may transiently raise the objective
            assert objective <= prev_objective + 1e-9, "k-means objective increased"
            prev_objective = objective

        movement = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if not reseeded and movement < tol:
            break

    reps = []
    dists = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    assign = np.argmin(dists, axis=1)
    used = set()
    for j in range(k):
        members = np.flatnonzero(assign == j)
        if members.size == 0:
            members = np.array([i for i in range(n) if i not in used])
        order = members[np.argsort(dists[members, j], kind="stable")]
        pick = next(int(i) for i in order if int(i) not in used)
        used.add(pick)
        reps.append(pick)
    return reps
