"""Noise-robust training via per-batch learnable sample weights.

Each step draws a noisy train batch and a clean validation mini-batch.  A
single virtual SGD step through the batch's epsilon-weighted loss makes the
validation loss a function of the epsilons; the weight of example i is the
positive part of the aligned meta-gradient, normalized to sum to one:

    w~_i = max(alpha * g_i . g_val, 0)
    w_i  = w~_i / (sum_j w~_j + [sum_j w~_j == 0])

which is the exact derivative of the validation loss after the virtual step
theta - alpha * sum_j eps_j g_j, evaluated at eps = 0.  A central
finite-difference path over the epsilons is kept as an independent oracle.
Examples whose gradient opposes the validation gradient get weight zero; a
batch with no aligned example performs no update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .corpus import AnnotatedExample, Example
from .metrics import evaluate
from .model import (
    GradientBundle,
    ModelConfig,
    ModelParams,
    init_params,
    loss_and_grads,
    sgd_step,
)


class ReweightError(ValueError):
    pass


@dataclass
class ReweightConfig:
    """Trainer settings.

    ``alpha`` is the virtual step size of the meta-gradient; it defaults to
    the optimizer learning rate.  The zero-division guard in the weight
    normalization is the indicator [sum w~ == 0], so an all-misaligned batch
    yields the zero weight vector and no parameter update.
    """

    enabled: bool = True
    train_batch: int = 8
    val_batch: int = 4
    steps: int = 400
    lr: float = 0.1
    alpha: Optional[float] = None
    momentum: float = 0.0
    eval_every: int = 20

    def __post_init__(self):
        if self.train_batch < 1 or self.val_batch < 1:
            raise ReweightError("batch sizes must be >= 1")
        if self.steps < 1:
            raise ReweightError("steps must be >= 1")
        if self.lr <= 0:
            raise ReweightError("lr must be positive")
        if self.alpha is not None and self.alpha <= 0:
            raise ReweightError("alpha must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ReweightError("momentum must lie in [0, 1)")
        if self.eval_every < 1:
            raise ReweightError("eval_every must be >= 1")

    @property
    def resolved_alpha(self) -> float:
        return self.lr if self.alpha is None else self.alpha


def meta_weights(grads: np.ndarray, val_grad: np.ndarray, alpha: float) -> np.ndarray:
    """Closed-form sample weights from gradient alignment.

    ``grads`` holds one flat per-example gradient per row, taken at the
    current parameters; ``val_grad`` is the clean-batch gradient at the same
    parameters.
    """
    if alpha <= 0:
        raise ReweightError("alpha must be positive")
    grads = np.asarray(grads, dtype=np.float64)
    val_grad = np.asarray(val_grad, dtype=np.float64)
    dots = grads @ val_grad
    if not np.all(np.isfinite(dots)):
        raise ReweightError("non-finite gradient dot products")
    w_tilde = np.maximum(alpha * dots, 0.0)
    total = w_tilde.sum()
    return w_tilde / (total + (1.0 if total == 0.0 else 0.0))


def check_weight_vector(w: np.ndarray, atol: float = 1e-9) -> None:
    """Nonnegative, and sums to one unless identically zero."""
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ReweightError(f"invalid weight vector {w}")
    total = w.sum()
    if total != 0.0 and abs(total - 1.0) > atol:
        raise ReweightError(f"weights sum to {total}, expected 0 or 1")


def weight_entropy(w: np.ndarray) -> float:
    nz = w[w > 0]
    return float(-(nz * np.log(nz)).sum()) if nz.size else 0.0


# ---------------------------------------------------------------------------
# Example groups: one (features, labels) block per training example

Group = tuple[np.ndarray, np.ndarray]


def featurize_examples(featurizer, examples: Sequence, labels_of: Callable) -> list[Group]:
    groups = []
    for ex in examples:
        base = ex.example if isinstance(ex, AnnotatedExample) else ex
        groups.append((featurizer.item_features(base),
                       featurizer.item_labels(base, labels_of(ex))))
    return groups


def per_example_grads(params: ModelParams, groups: Sequence[Group]) -> GradientBundle:
    """Per-example loss/gradient; multi-item examples average over items."""
    if all(X.shape[0] == 1 for X, _ in groups):
        X = np.concatenate([g[0] for g in groups])
        y = np.concatenate([g[1] for g in groups])
        return loss_and_grads(params, X, y)
    losses, grads = [], []
    for X, y in groups:
        bundle = loss_and_grads(params, X, y)
        losses.append(bundle.losses.mean())
        grads.append(bundle.grads.mean(axis=0))
    return GradientBundle(losses=np.array(losses), grads=np.stack(grads))


def _mean_loss(params: ModelParams, groups: Sequence[Group]) -> float:
    total = 0.0
    for X, y in groups:
        bundle = loss_and_grads(params, X, y)
        total += float(bundle.losses.mean())
    return total / len(groups)


def meta_weights_fd(params: ModelParams, train_groups: Sequence[Group],
                    val_groups: Sequence[Group], alpha: float,
                    h: float = 1e-5) -> np.ndarray:
    """Finite-difference oracle for :func:`meta_weights`.

    Perturbs each epsilon by +-h, takes the virtual step
    theta - alpha * eps_i * g_i, and differences the validation loss.  Slow;
    meant for small models and tests only.
    """
    if alpha <= 0:
        raise ReweightError("alpha must be positive")
    if h <= 0:
        raise ReweightError("h must be positive")
    bundle = per_example_grads(params, train_groups)
    grad_eps = np.zeros(len(train_groups))
    for i, g in enumerate(bundle.grads):
        plus = ModelParams(params.config, params.flat - alpha * h * g)
        minus = ModelParams(params.config, params.flat + alpha * h * g)
        grad_eps[i] = (_mean_loss(plus, val_groups) - _mean_loss(minus, val_groups)) / (2 * h)
    if not np.all(np.isfinite(grad_eps)):
        raise ReweightError("finite-difference meta-gradient is not finite (h too small?)")
    w_tilde = np.maximum(-grad_eps, 0.0)
    total = w_tilde.sum()
    return w_tilde / (total + (1.0 if total == 0.0 else 0.0))


# ---------------------------------------------------------------------------
# Trainer


@dataclass
class TrainingLog:
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    weight_entropies: list[float] = field(default_factory=list)
    zero_fractions: list[float] = field(default_factory=list)
    weights: list[np.ndarray] = field(default_factory=list)
    grad_dots: list[np.ndarray] = field(default_factory=list)
    val_f1: dict[int, float] = field(default_factory=dict)
    best_step: int = -1
    aborted: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("step,train_loss,weight_entropy,zero_fraction,val_f1\n")
            for i, s in enumerate(self.steps):
                f1 = f"{self.val_f1[s]:.6f}" if s in self.val_f1 else ""
                f.write(f"{s},{self.losses[i]:.6f},{self.weight_entropies[i]:.6f},"
                        f"{self.zero_fractions[i]:.6f},{f1}\n")


@dataclass
class TrainResult:
    params: ModelParams
    log: TrainingLog


def train(model_config: ModelConfig, featurizer, labeled: Sequence[AnnotatedExample],
          val: Sequence[Example], config: ReweightConfig, rng_seed: int,
          checkpoint_metric: Optional[Callable[[ModelParams], float]] = None,
          init: Optional[ModelParams] = None) -> TrainResult:
    """Run the reweighted (or plain) SGD loop and return the best checkpoint.

    Batches are sampled uniformly with replacement.  The checkpoint metric
    defaults to micro-F1 on the full clean validation set, evaluated every
    ``eval_every`` steps and at the end.  With reweighting disabled the loop
    is exactly uniform-weight SGD over the same batch stream.
    """
    if not labeled:
        raise ReweightError("no labeled examples to train on")
    if config.enabled and not val:
        raise ReweightError("reweighting needs a clean validation set")

    train_groups = featurize_examples(featurizer, labeled, lambda a: a.silver)
    val_groups = featurize_examples(featurizer, val, lambda e: e.gold) if val else []
    if checkpoint_metric is None:
        if not val:
            raise ReweightError("no validation set and no checkpoint metric")
        checkpoint_metric = lambda p: evaluate(p, val, featurizer.schema, featurizer).f1

    rng = np.random.default_rng(rng_seed)
    params = init.copy() if init is not None else init_params(model_config, rng)
    alpha = config.resolved_alpha
    n, m = config.train_batch, config.val_batch
    velocity = np.zeros(model_config.n_params)
    log = TrainingLog()
    best_params, best_f1 = params.copy(), -np.inf

    for step in range(config.steps):
        idx = rng.integers(0, len(train_groups), size=n)
        bundle = per_example_grads(params, [train_groups[i] for i in idx])
        if not np.all(np.isfinite(bundle.losses)):
            log.aborted = True
            break

        if config.enabled:
            vidx = rng.integers(0, len(val_groups), size=m)
            val_bundle = per_example_grads(params, [val_groups[j] for j in vidx])
            val_grad = val_bundle.grads.mean(axis=0)
            weights = meta_weights(bundle.grads, val_grad, alpha)
            log.grad_dots.append(bundle.grads @ val_grad)
        else:
            weights = np.full(n, 1.0 / n)
            log.grad_dots.append(np.zeros(n))
        check_weight_vector(weights)

        grad = bundle.grads.T @ weights
        if config.momentum > 0.0:
            velocity = config.momentum * velocity + grad
            update = velocity
        else:
            update = grad
        try:
            params = sgd_step(params, update, config.lr)
        except Exception:
            log.aborted = True
            break

        log.steps.append(step)
        log.losses.append(float(bundle.losses.mean()))
        log.weight_entropies.append(weight_entropy(weights))
        log.zero_fractions.append(float(np.mean(weights == 0.0)))
        log.weights.append(weights)

        if (step + 1) % config.eval_every == 0 or step == config.steps - 1:
            f1 = checkpoint_metric(params)
            log.val_f1[step] = f1
            if f1 > best_f1:
                best_f1, best_params, log.best_step = f1, params.copy(), step

    # on abort before any checkpoint this is the initial params copy
    return TrainResult(params=best_params, log=log)
