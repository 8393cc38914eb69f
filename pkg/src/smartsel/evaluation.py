"""Evaluation harness: proxy classifier, pooled prediction, FLOPs ledger.

The proxy classifier is the desk-scale stand-in for an expensive video
backbone.  It serves double duty: its per-frame ground-truth probability
is the oracle target for the single-frame selector, and its average-pooled
per-frame predictions are the downstream classifier that selection
strategies are judged by.

The FLOPs ledger is analytic accounting, not wall-clock measurement: it
counts multiply-accumulates of the modeled deployment (a light per-frame
feature/selector path over all N frames, an expensive per-frame classifier
over only the n selected ones) from a shape description.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autograd as ag
from .errors import ConfigError, DimensionError, TrainingError
from .features import VideoSample
from .global_selector import GlobalSelectorParams, score_global
from .nncore import (
    ParamStore,
    TrainConfig,
    dense_forward,
    derive_seed,
    init_dense,
    sgd_momentum_step,
)
from .selection import (
    FrameScores,
    SelectionResult,
    baseline_random,
    baseline_uniform,
    combine_scores,
    select_top_n,
)
from .single_selector import SingleFrameMLP, score_single

STRATEGIES = ("smart", "random", "uniform")


@dataclass
class ProxyClassifier:
    """Dense frame classifier with softmax output (optional hidden layer)."""

    store: ParamStore
    input_dim: int
    n_classes: int
    hidden: int | None = None
    trained: bool = False

    def logits(self, frames: np.ndarray) -> np.ndarray:
        if frames.ndim != 2 or frames.shape[1] != self.input_dim:
            raise DimensionError(
                f"frames have shape {frames.shape}, proxy expects (*, {self.input_dim})"
            )
        s = self.store
        if self.hidden is not None:
            frames = np.maximum(dense_forward(frames, s["proxy.h.w"], s["proxy.h.b"]), 0.0)
        return dense_forward(frames, s["proxy.out.w"], s["proxy.out.b"])

    def predict_proba_frames(self, frames: np.ndarray) -> np.ndarray:
        """Row-wise softmax probabilities for a B x D block of frames."""
        z = self.logits(frames)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def init_proxy(input_dim: int, n_classes: int, hidden: int | None,
               rng: np.random.Generator) -> ProxyClassifier:
    store = ParamStore()
    if hidden is not None:
        init_dense(store, "proxy.h", input_dim, hidden, rng)
        init_dense(store, "proxy.out", hidden, n_classes, rng)
    else:
        init_dense(store, "proxy.out", input_dim, n_classes, rng)
    return ProxyClassifier(store=store, input_dim=input_dim, n_classes=n_classes,
                           hidden=hidden)


def _proxy_batch_loss(proxy: ProxyClassifier, x: np.ndarray, labels: np.ndarray) -> float:
    pv = ag.ParamVars(proxy.store)
    out = ag.leaf(x)
    if proxy.hidden is not None:
        out = ag.relu(ag.dense(out, pv.var("proxy.h.w"), pv.var("proxy.h.b")))
    logits = ag.dense(out, pv.var("proxy.out.w"), pv.var("proxy.out.b"))
    loss = ag.cross_entropy_mean(logits, labels)
    ag.backward(loss)
    pv.flush_grads()
    return float(loss.value.reshape(()))


def train_proxy(train_set: list[VideoSample], cfg: TrainConfig, seed: int,
                n_classes: int, hidden: int | None = None
                ) -> tuple[ProxyClassifier, list[float]]:
    """Cross-entropy training on individual frames labeled with their video's
    class; returns the proxy and the per-epoch mean loss."""
    if not train_set:
        raise ValueError("empty training set")
    input_dim = sum(train_set[0].dims)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "proxy-init")))
    proxy = init_proxy(input_dim, n_classes, hidden, rng)

    x = np.concatenate([v.feature_matrix() for v in train_set])
    labels = np.concatenate([np.full(v.n_frames, v.label) for v in train_set])

    losses = []
    for epoch in range(cfg.epochs):
        order = np.random.Generator(
            np.random.PCG64(derive_seed(seed, "proxy-shuffle", epoch))
        ).permutation(x.shape[0])
        lr = cfg.lr_at(epoch)
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss = _proxy_batch_loss(proxy, x[batch], labels[batch])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"proxy diverged at epoch {epoch}, batch {n_batches} (loss={loss})"
                )
            if lr > 0:
                sgd_momentum_step(proxy.store, lr, cfg.momentum)
            else:
                proxy.store.zero_grads()
            epoch_loss += loss
            n_batches += 1
        losses.append(epoch_loss / max(1, n_batches))
    proxy.trained = True
    return proxy, losses


def frame_accuracy(proxy: ProxyClassifier, videos: list[VideoSample]) -> float:
    """Fraction of individual frames whose argmax matches the video label."""
    correct = total = 0
    for v in videos:
        pred = np.argmax(proxy.predict_proba_frames(v.feature_matrix()), axis=1)
        correct += int((pred == v.label).sum())
        total += v.n_frames
    return correct / total


def predict_video(proxy: ProxyClassifier, video: VideoSample,
                  selected: SelectionResult) -> int:
    """Average-pool the softmax of the selected frames; argmax (tie: lower)."""
    if not selected.indices:
        raise ValueError("cannot predict from an empty selection")
    if selected.indices[-1] >= video.n_frames:
        raise ValueError(
            f"selection index {selected.indices[-1]} out of range for "
            f"{video.n_frames} frames"
        )
    probs = proxy.predict_proba_frames(video.feature_matrix()[list(selected.indices)])
    return int(np.argmax(probs.mean(axis=0)))


@dataclass
class Models:
    proxy: ProxyClassifier
    single: SingleFrameMLP
    global_params: GlobalSelectorParams


def video_scores(models: Models, video: VideoSample, seed_base: int) -> FrameScores:
    """Both streams' scores for one video, combined by multiplication."""
    delta = score_single(models.single, video)
    gamma = score_global(models.global_params, video, seed_base)
    return combine_scores(delta, gamma)


@dataclass(frozen=True)
class EvalResult:
    strategy: str
    n: int
    accuracy: float
    sd: float
    ledger: "FlopsLedger"


def _select(strategy: str, video: VideoSample, n: int, models: Models,
            seed_base: int, scores: FrameScores | None = None) -> SelectionResult:
    if strategy == "smart":
        if scores is None:
            scores = video_scores(models, video, seed_base)
        return select_top_n(scores, n)
    if strategy == "uniform":
        return baseline_uniform(video.n_frames, n)
    if strategy == "random":
        return baseline_random(video.n_frames, n, derive_seed(seed_base, video.id))
    raise ConfigError(f"unknown strategy {strategy!r}")


def evaluate(test_set: list[VideoSample], strategy: str, n: int, models: Models,
             seed_base: int = 0, random_runs: int = 10,
             shapes: "ModelShapes | None" = None,
             score_cache: dict[str, FrameScores] | None = None) -> EvalResult:
    """Accuracy of a selection strategy at budget n, plus the FLOPs ledger.

    The random baseline is averaged over ``random_runs`` seeds and reported
    with its standard deviation; the other strategies are deterministic.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    if not test_set:
        raise ValueError("empty test set")

    def run(seed: int) -> float:
        correct = 0
        for video in test_set:
            cached = score_cache.get(video.id) if score_cache is not None else None
            sel = _select(strategy, video, n, models, seed, scores=cached)
            correct += int(predict_video(models.proxy, video, sel) == video.label)
        return correct / len(test_set)

    if strategy == "random":
        accs = np.array([run(derive_seed(seed_base, "run", r)) for r in range(random_runs)])
        accuracy = float(accs.mean())
        sd = float(accs.std(ddof=1)) if random_runs > 1 else 0.0
    else:
        accuracy = run(seed_base)
        sd = 0.0

    if shapes is None:
        shapes = shapes_from_models(models, n_frames=test_set[0].n_frames, budget=n)
    else:
        shapes = replace(shapes, budget=n, n_frames=test_set[0].n_frames)
    return EvalResult(strategy=strategy, n=n, accuracy=accuracy, sd=sd,
                      ledger=flops_count(shapes))


# ---------------------------------------------------------------------------
# FLOPs accounting


def dense_flops(d_in: int, d_out: int) -> int:
    """Multiply-accumulate ops of one dense layer, bias/activation ignored."""
    return 2 * d_in * d_out


def lstm_step_flops(d_in: int, hidden: int) -> int:
    """One LSTM step: four gates of matmuls plus elementwise state updates."""
    return 8 * d_in * hidden + 8 * hidden * hidden + 9 * hidden


@dataclass(frozen=True)
class ModelShapes:
    """Shape description of the modeled deployment.

    ``feature_flops_per_frame`` stands in for the light feature extractor
    and ``classifier_flops_per_frame`` for the expensive downstream
    classifier; both are scenario constants because the real backbones are
    outside this repo.  The selector terms are computed from the actual
    model dimensions.
    """

    feature_dim: int
    single_hidden: int
    global_hidden: int
    n_classes: int
    n_frames: int
    budget: int
    feature_flops_per_frame: int = 25_000
    classifier_flops_per_frame: int = 2_500_000


@dataclass(frozen=True)
class FlopsLedger:
    selector_flops: int
    classifier_flops_per_frame: int
    budget: int
    n_frames: int
    total: int
    full_video_total: int
    ratio: float

    @classmethod
    def build(cls, selector_flops: int, classifier_flops_per_frame: int,
              budget: int, n_frames: int) -> "FlopsLedger":
        total = selector_flops + budget * classifier_flops_per_frame
        full = n_frames * classifier_flops_per_frame
        return cls(
            selector_flops=selector_flops,
            classifier_flops_per_frame=classifier_flops_per_frame,
            budget=budget,
            n_frames=n_frames,
            total=total,
            full_video_total=full,
            ratio=full / total,
        )


def flops_count(shapes: ModelShapes) -> FlopsLedger:
    """Analytic multiply-accumulate count for one video.

    Per-frame selector cost:
      feature_flops_per_frame                       (light extractor analogue)
      + dense(D, H) + dense(H, 1)                   (single-frame stream)
      + dense(2D, 1)                                (pair gate alpha)
      + 2 * 2D                                      (aggregate Z' accumulation)
      + dense(4D, 1)                                (relation gate beta)
      + 2 * 2D                                      (omega accumulation)
      + lstm_step(2D, Ch)
      + dense(Ch, 1)                                (temporal score)
      + 2 * 2D                                      (aggregate Z'' accumulation)
      + dense(4D, 1)                                (gamma gate)
      + 2 * Ch                                      (content accumulation)
    plus one dense(Ch, C) head per video.  The expensive classifier costs
    classifier_flops_per_frame for each of the min(budget, N) kept frames.
    """
    d = shapes.feature_dim
    h = shapes.single_hidden
    ch = shapes.global_hidden
    per_frame = (
        shapes.feature_flops_per_frame
        + dense_flops(d, h) + dense_flops(h, 1)
        + dense_flops(2 * d, 1)
        + 2 * (2 * d)
        + dense_flops(4 * d, 1)
        + 2 * (2 * d)
        + lstm_step_flops(2 * d, ch)
        + dense_flops(ch, 1)
        + 2 * (2 * d)
        + dense_flops(4 * d, 1)
        + 2 * ch
    )
    selector = shapes.n_frames * per_frame + dense_flops(ch, shapes.n_classes)
    return FlopsLedger.build(
        selector_flops=selector,
        classifier_flops_per_frame=shapes.classifier_flops_per_frame,
        budget=min(shapes.budget, shapes.n_frames),
        n_frames=shapes.n_frames,
    )


def shapes_from_models(models: Models, n_frames: int, budget: int,
                       feature_flops_per_frame: int = 25_000,
                       classifier_flops_per_frame: int = 2_500_000) -> ModelShapes:
    return ModelShapes(
        feature_dim=models.single.input_dim,
        single_hidden=models.single.hidden,
        global_hidden=models.global_params.config.hidden_size,
        n_classes=models.proxy.n_classes,
        n_frames=n_frames,
        budget=budget,
        feature_flops_per_frame=feature_flops_per_frame,
        classifier_flops_per_frame=classifier_flops_per_frame,
    )
