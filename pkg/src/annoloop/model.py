"""Task model: linear or one-hidden-layer softmax with per-example gradients.

Gradients come from manual backpropagation and are returned per example as
flat vectors, which is what the sample-reweighting trainer consumes.  The
same classifier serves as a per-token tagger (followed by BIO decoding) and
as a per-instance relation classifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import LabelSchema, SpanLabel


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int
    n_classes: int
    hidden_dim: Optional[int] = None  # None = plain linear softmax

    def __post_init__(self):
        if self.feature_dim < 1 or self.n_classes < 2:
            raise ModelError("need feature_dim >= 1 and n_classes >= 2")
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise ModelError("hidden_dim must be >= 1 when set")

    @property
    def n_params(self) -> int:
        d, c, h = self.feature_dim, self.n_classes, self.hidden_dim
        if h is None:
            return c * d + c
        return h * d + h + c * h + c


class ModelParams:
    """Parameter container; a value type, cheap to copy."""

    def __init__(self, config: ModelConfig, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (config.n_params,):
            raise ModelError(f"expected {config.n_params} parameters, got {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise ModelError("non-finite parameters")
        self.config = config
        self.flat = flat

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.flat.copy())

    def unpack(self):
        """Return (W, b) for linear or (W1, b1, W2, b2) for the MLP."""
        d, c, h = self.config.feature_dim, self.config.n_classes, self.config.hidden_dim
        v = self.flat
        if h is None:
            W = v[: c * d].reshape(c, d)
            b = v[c * d:]
            return W, b
        o = 0
        W1 = v[o:o + h * d].reshape(h, d); o += h * d
        b1 = v[o:o + h]; o += h
        W2 = v[o:o + c * h].reshape(c, h); o += c * h
        b2 = v[o:]
        return W1, b1, W2, b2


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Small gaussian init scaled by fan-in; deterministic under the rng."""
    d, c, h = config.feature_dim, config.n_classes, config.hidden_dim
    if h is None:
        parts = [rng.normal(0.0, 1.0 / np.sqrt(d), size=c * d), np.zeros(c)]
    else:
        parts = [
            rng.normal(0.0, 1.0 / np.sqrt(d), size=h * d),
            np.zeros(h),
            rng.normal(0.0, 1.0 / np.sqrt(h), size=c * h),
            np.zeros(c),
        ]
    return ModelParams(config, np.concatenate(parts))


def _logits_and_hidden(params: ModelParams, X: np.ndarray):
    if X.ndim != 2 or X.shape[1] != params.config.feature_dim:
        raise ModelError(
            f"feature matrix {X.shape} does not match feature_dim "
            f"{params.config.feature_dim}"
        )
    if params.config.hidden_dim is None:
        W, b = params.unpack()
        return X @ W.T + b, None
    W1, b1, W2, b2 = params.unpack()
    hidden = np.tanh(X @ W1.T + b1)
    return hidden @ W2.T + b2, hidden


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: ModelParams, X: np.ndarray) -> np.ndarray:
    """Class probability rows for each feature vector; numerically stable."""
    logits, _ = _logits_and_hidden(params, np.asarray(X, dtype=np.float64))
    return softmax(logits)


@dataclass
class GradientBundle:
    """Per-item cross-entropy losses and flat per-item parameter gradients."""

    losses: np.ndarray  # (n,)
    grads: np.ndarray   # (n, n_params)

    def __post_init__(self):
        if not (np.all(np.isfinite(self.losses)) and np.all(np.isfinite(self.grads))):
            raise ModelError("non-finite loss or gradient")


def loss_and_grads(params: ModelParams, X: np.ndarray, y: np.ndarray) -> GradientBundle:
    """Exact per-example cross-entropy gradients via manual backprop."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    c = params.config.n_classes
    if y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ModelError("features and labels disagree in length")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise ModelError(f"label out of range for {c} classes")

    logits, hidden = _logits_and_hidden(params, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    losses = logz - shifted[np.arange(len(y)), y]
    probs = softmax(logits)

    delta = probs.copy()
    delta[np.arange(len(y)), y] -= 1.0  # dL/dlogits per example

    if params.config.hidden_dim is None:
        gW = np.einsum("nc,nd->ncd", delta, X)
        grads = np.concatenate([gW.reshape(len(y), -1), delta], axis=1)
    else:
        gW2 = np.einsum("nc,nh->nch", delta, hidden)
        dhidden = delta @ params.unpack()[2]          # (n, h)
        dz1 = dhidden * (1.0 - hidden ** 2)
        gW1 = np.einsum("nh,nd->nhd", dz1, X)
        grads = np.concatenate(
            [gW1.reshape(len(y), -1), dz1, gW2.reshape(len(y), -1), delta], axis=1
        )
    return GradientBundle(losses=losses, grads=grads)


def sgd_step(params: ModelParams, grad: np.ndarray, lr: float) -> ModelParams:
    """Vanilla SGD update on the flat parameter vector."""
    if lr <= 0:
        raise ModelError("learning rate must be positive")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.flat.shape:
        raise ModelError(f"gradient shape {grad.shape} does not match parameters")
    if not np.all(np.isfinite(grad)):
        raise ModelError("non-finite gradient; aborting update")
    return ModelParams(params.config, params.flat - lr * grad)


# ---------------------------------------------------------------------------
# BIO tagging helpers

OUTSIDE_TAG = 0


def n_bio_tags(schema: LabelSchema) -> int:
    return 2 * len(schema.classes) + 1


def bio_tag_names(schema: LabelSchema) -> list[str]:
    names = ["O"]
    for cls in schema.classes:
        names.extend([f"B-{cls}", f"I-{cls}"])
    return names


def spans_to_tag_ids(spans, n_tokens: int, schema: LabelSchema) -> np.ndarray:
    """Flat spans -> per-token tag ids (O=0, B-c=1+2c, I-c=2+2c)."""
    tags = np.zeros(n_tokens, dtype=np.int64)
    for sp in spans:
        ci = schema.class_index(sp.label)
        tags[sp.start] = 1 + 2 * ci
        tags[sp.start + 1: sp.end] = 2 + 2 * ci
    return tags


def tag_ids_to_spans(tag_ids, schema: LabelSchema) -> list[SpanLabel]:
    """Greedy BIO read-off with repair: a dangling I-x opens a new span."""
    tags = [int(t) for t in tag_ids]
    spans: list[SpanLabel] = []
    start = None
    cur = None

    def close(end):
        nonlocal start, cur
        if start is not None:
            spans.append(SpanLabel(start=start, end=end, label=schema.classes[cur]))
        start, cur = None, None

    for i, t in enumerate(tags):
        if t == OUTSIDE_TAG:
            close(i)
            continue
        ci, is_inside = (t - 1) // 2, (t - 1) % 2 == 1
        if is_inside and cur == ci:
            continue  # continuation
        close(i)  # B-x, or repaired I-x after O / other class
        start, cur = i, ci
    close(len(tags))
    return spans


def decode_bio(dists: np.ndarray, schema: LabelSchema) -> list[SpanLabel]:
    """Per-token argmax over tag distributions, then BIO repair."""
    dists = np.asarray(dists)
    if dists.ndim != 2 or dists.shape[1] != n_bio_tags(schema):
        raise ModelError(f"expected (tokens, {n_bio_tags(schema)}) distributions")
    return tag_ids_to_spans(np.argmax(dists, axis=1), schema)


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParams, path) -> None:
    obj = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "feature_dim": params.config.feature_dim,
            "n_classes": params.config.n_classes,
            "hidden_dim": params.config.hidden_dim,
        },
        "flat": params.flat.tolist(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f)


def load_checkpoint(path) -> ModelParams:
    with open(path, "r", encoding="utf-8") as f:
        obj = json.load(f)
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {obj.get('version')!r}")
    config = ModelConfig(**obj["config"])
    return ModelParams(config, np.asarray(obj["flat"], dtype=np.float64))
