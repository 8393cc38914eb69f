"""Single-frame stream: a 2-layer MLP regressing oracle frame confidence.

The oracle confidence of frame i is the proxy classifier's probability of
the video's ground-truth class given that frame alone.  The MLP (ReLU
hidden layer, sigmoid output) is trained to predict it with MSE and at
inference emits the per-frame importance score delta_i in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .errors import DimensionError, StateError, TrainingError
from .features import VideoSample
from .nncore import (
    ParamStore,
    TrainConfig,
    dense_forward,
    derive_seed,
    init_dense,
    sgd_momentum_step,
    sigmoid,
)


@dataclass
class SingleFrameMLP:
    """Parameters live in ``store`` under "sfs.l1.*" and "sfs.l2.*"."""

    store: ParamStore
    input_dim: int
    hidden: int


def init_single(input_dim: int, hidden: int, rng: np.random.Generator) -> SingleFrameMLP:
    store = ParamStore()
    init_dense(store, "sfs.l1", input_dim, hidden, rng)
    init_dense(store, "sfs.l2", hidden, 1, rng)
    return SingleFrameMLP(store=store, input_dim=input_dim, hidden=hidden)


def oracle_frame_targets(proxy, video: VideoSample) -> np.ndarray:
    """Per-frame probability of the ground-truth class under the proxy."""
    if not getattr(proxy, "trained", False):
        raise StateError("oracle targets need a trained proxy classifier")
    probs = proxy.predict_proba_frames(video.feature_matrix())
    return probs[:, video.label]


def score_frames(model: SingleFrameMLP, frames: np.ndarray) -> np.ndarray:
    """delta for a B x D block of frame vectors."""
    if frames.ndim != 2 or frames.shape[1] != model.input_dim:
        raise DimensionError(
            f"frames have shape {frames.shape}, model expects (*, {model.input_dim})"
        )
    s = model.store
    hidden = np.maximum(dense_forward(frames, s["sfs.l1.w"], s["sfs.l1.b"]), 0.0)
    return sigmoid(dense_forward(hidden, s["sfs.l2.w"], s["sfs.l2.b"])).reshape(-1)


def score_single(model: SingleFrameMLP, video: VideoSample) -> np.ndarray:
    """delta_i per frame; a pure per-frame function of X_i."""
    return score_frames(model, video.feature_matrix())


def _batch_loss(model: SingleFrameMLP, x: np.ndarray, targets: np.ndarray) -> float:
    """One tape pass; accumulates gradients into the model's store."""
    pv = ag.ParamVars(model.store)
    h = ag.relu(ag.dense(ag.leaf(x), pv.var("sfs.l1.w"), pv.var("sfs.l1.b")))
    pred = ag.sigmoid(ag.dense(h, pv.var("sfs.l2.w"), pv.var("sfs.l2.b")))
    loss = ag.mse_mean(pred, targets.reshape(-1, 1))
    ag.backward(loss)
    pv.flush_grads()
    return float(loss.value.reshape(()))


def train_single(train_set: list[VideoSample], proxy, cfg: TrainConfig, seed: int,
                 hidden: int = 64) -> tuple[SingleFrameMLP, list[float]]:
    """Minibatch SGD-with-momentum on the oracle regression.

    Returns the model and the per-epoch mean training MSE.
    """
    if not train_set:
        raise ValueError("empty training set")
    input_dim = sum(train_set[0].dims)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "single-init")))
    model = init_single(input_dim, hidden, rng)

    x = np.concatenate([v.feature_matrix() for v in train_set])
    targets = np.concatenate([oracle_frame_targets(proxy, v) for v in train_set])

    losses = []
    for epoch in range(cfg.epochs):
        order = np.random.Generator(
            np.random.PCG64(derive_seed(seed, "single-shuffle", epoch))
        ).permutation(x.shape[0])
        lr = cfg.lr_at(epoch)
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss = _batch_loss(model, x[batch], targets[batch])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"single-frame selector diverged at epoch {epoch}, "
                    f"batch {n_batches} (loss={loss})"
                )
            if lr > 0:
                sgd_momentum_step(model.store, lr, cfg.momentum)
            else:
                model.store.zero_grads()
            epoch_loss += loss
            n_batches += 1
        losses.append(epoch_loss / max(1, n_batches))
    return model, losses
