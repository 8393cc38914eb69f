"""Global stream: scores frames jointly via attention, relations, and an LSTM.

Dataflow per video (N frames, full feature dimension D):

1. Each frame is paired with a random strictly-subsequent frame (the last
   frame pairs with itself), giving pair vectors Z_i = [X_i : X_r(i)] of
   size 2D.
2. Gate weights alpha_i = sigmoid(Z_i . u) form the normalized aggregate
   Z' = sum(alpha_i Z_i) / sum(alpha_i).
3. Relation weights beta_i = sigmoid([Z_i : Z'] . theta1) feed cumulative
   inputs omega_t = sum_{i<=t} beta_i Z_i (kept unnormalized by default;
   a config flag divides by the running beta sum instead).
4. An LSTM consumes omega_1..omega_N; per-step scalars v . h_t + b are
   softmaxed over time into lambda.
5. Z'' = sum(lambda_t omega_t) / sum(lambda_t), and the final per-frame
   weights are gamma_t = sigmoid([omega_t : Z''] . theta2).
6. The content vector c = sum(gamma_i h_i) goes through a dense head to
   class logits; training minimizes cross-entropy plus
   eps_reg * (||theta1||^2 + ||theta2||^2).

There are two implementations of the forward pass: the plain-numpy one
below (inference, and the reference the gradient check differentiates
numerically) and a tape twin used for training.  Tests pin them against
each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .errors import DimensionError, TrainingError
from .features import VideoSample
from .nncore import (
    ParamStore,
    RngState,
    TrainConfig,
    derive_seed,
    init_dense,
    init_lstm,
    log_softmax,
    lstm_step,
    sgd_momentum_step,
    sigmoid,
    softmax,
)


@dataclass(frozen=True)
class GlobalConfig:
    hidden_size: int = 64        # LSTM width
    eps_reg: float = 1e-4        # weight penalty on theta1/theta2
    pair_reps: int = 4           # pair redraws averaged at scoring time
    normalize_omega: bool = False

    def __post_init__(self):
        if self.hidden_size <= 0 or self.pair_reps <= 0:
            raise ValueError("hidden_size and pair_reps must be positive")
        if self.eps_reg < 0:
            raise ValueError("eps_reg must be non-negative")


@dataclass
class GlobalSelectorParams:
    """All trainable pieces of the global stream plus their dimensions."""

    store: ParamStore
    feature_dim: int             # D: full per-frame feature size
    n_classes: int
    config: GlobalConfig


@dataclass(frozen=True)
class PairSequence:
    """Pair vectors Z (N x 2D) and the partner index chosen per frame."""

    pairs: np.ndarray
    partner: np.ndarray

    def __post_init__(self):
        n = self.pairs.shape[0]
        if self.partner.shape != (n,):
            raise DimensionError(
                f"{self.partner.shape[0]} partners for {n} pair vectors"
            )


@dataclass
class GlobalForwardTrace:
    alpha: np.ndarray            # (N,)
    z_prime: np.ndarray          # (2D,)
    beta: np.ndarray             # (N,)
    omega: np.ndarray            # (N, 2D)
    h: np.ndarray                # (N, Ch)
    m: np.ndarray                # (N, Ch)
    lam: np.ndarray              # (N,) probability vector over time
    z_dprime: np.ndarray         # (2D,)
    gamma: np.ndarray            # (N,)
    content: np.ndarray          # (Ch,)
    logits: np.ndarray           # (C,)
    partner: np.ndarray          # (N,)

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.logits))


def init_global(feature_dim: int, n_classes: int, config: GlobalConfig,
                rng: np.random.Generator) -> GlobalSelectorParams:
    d2 = 2 * feature_dim
    ch = config.hidden_size
    store = ParamStore()
    limit = 1.0 / np.sqrt(d2)
    store.add("gs.u", rng.uniform(-limit, limit, size=(d2, 1)))
    limit = 1.0 / np.sqrt(2 * d2)
    store.add("gs.theta1", rng.uniform(-limit, limit, size=(2 * d2, 1)))
    store.add("gs.theta2", rng.uniform(-limit, limit, size=(2 * d2, 1)))
    init_lstm(store, "gs.lstm", d2, ch, rng)
    limit = 1.0 / np.sqrt(ch)
    store.add("gs.v", rng.uniform(-limit, limit, size=(ch, 1)))
    store.add("gs.vb", np.zeros((1, 1)))
    init_dense(store, "gs.head", ch, n_classes, rng)
    return GlobalSelectorParams(store=store, feature_dim=feature_dim,
                                n_classes=n_classes, config=config)


def build_pairs(video: VideoSample, rng: RngState | np.random.Generator) -> PairSequence:
    """Pair each frame with a uniformly random subsequent frame.

    The last frame has no subsequent frame and pairs with itself, which
    keeps N outputs and makes single-frame videos valid.
    """
    gen = rng.generator() if isinstance(rng, RngState) else rng
    x = video.feature_matrix()
    n = x.shape[0]
    partner = np.empty(n, dtype=np.intp)
    for i in range(n - 1):
        partner[i] = gen.integers(i + 1, n)
    partner[n - 1] = n - 1
    pairs = np.concatenate([x, x[partner]], axis=1)
    return PairSequence(pairs=pairs, partner=partner)


def self_attention(pairs: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gate each pair vector and return the normalized weighted aggregate."""
    alpha = sigmoid(pairs @ u).reshape(-1)
    z_prime = alpha @ pairs / alpha.sum()
    return alpha, z_prime


def relation_attention(pairs: np.ndarray, z_prime: np.ndarray, theta1: np.ndarray,
                       normalize: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Relation gates against the aggregate, then cumulative pair sums.

    omega_t = sum_{i<=t} beta_i Z_i as printed; with ``normalize`` the
    running sum is divided by the running gate mass instead.
    """
    n = pairs.shape[0]
    stacked = np.concatenate([pairs, np.repeat(z_prime[None, :], n, axis=0)], axis=1)
    beta = sigmoid(stacked @ theta1).reshape(-1)
    omega = np.cumsum(beta[:, None] * pairs, axis=0)
    if normalize:
        omega = omega / np.cumsum(beta)[:, None]
    return beta, omega


def temporal_pass(omega: np.ndarray, params: GlobalSelectorParams
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the LSTM over omega and softmax the per-step scores over time."""
    store = params.store
    ch = params.config.hidden_size
    n = omega.shape[0]
    h = np.zeros((n, ch))
    m = np.zeros((n, ch))
    h_prev = np.zeros((1, ch))
    m_prev = np.zeros((1, ch))
    for t in range(n):
        h_prev, m_prev = lstm_step(omega[t : t + 1], h_prev, m_prev, store, "gs.lstm")
        h[t] = h_prev[0]
        m[t] = m_prev[0]
    scores = (h @ store["gs.v"] + store["gs.vb"]).reshape(-1)
    lam = softmax(scores)
    return h, m, lam


def relational_temporal(omega: np.ndarray, lam: np.ndarray, theta2: np.ndarray
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate omega by the temporal weights, then gate each step against it."""
    z_dprime = lam @ omega / lam.sum()
    n = omega.shape[0]
    stacked = np.concatenate([omega, np.repeat(z_dprime[None, :], n, axis=0)], axis=1)
    gamma = sigmoid(stacked @ theta2).reshape(-1)
    return z_dprime, gamma


def classify(gamma: np.ndarray, h: np.ndarray, store: ParamStore
             ) -> tuple[np.ndarray, np.ndarray]:
    """Content vector c = sum(gamma_i h_i) through the dense head."""
    if gamma.shape[0] != h.shape[0]:
        raise DimensionError(f"{gamma.shape[0]} weights for {h.shape[0]} hidden states")
    content = gamma @ h
    logits = (content @ store["gs.head.w"] + store["gs.head.b"]).reshape(-1)
    return content, logits


def global_forward(video: VideoSample, params: GlobalSelectorParams,
                   rng: RngState | np.random.Generator) -> GlobalForwardTrace:
    pairs = build_pairs(video, rng)
    return forward_from_pairs(pairs, params)


def forward_from_pairs(pairs: PairSequence, params: GlobalSelectorParams
                       ) -> GlobalForwardTrace:
    store = params.store
    alpha, z_prime = self_attention(pairs.pairs, store["gs.u"])
    beta, omega = relation_attention(pairs.pairs, z_prime, store["gs.theta1"],
                                     normalize=params.config.normalize_omega)
    h, m, lam = temporal_pass(omega, params)
    z_dprime, gamma = relational_temporal(omega, lam, store["gs.theta2"])
    content, logits = classify(gamma, h, store)
    return GlobalForwardTrace(alpha=alpha, z_prime=z_prime, beta=beta, omega=omega,
                              h=h, m=m, lam=lam, z_dprime=z_dprime, gamma=gamma,
                              content=content, logits=logits, partner=pairs.partner)


def loss_cls(logits: np.ndarray, label: int, params: GlobalSelectorParams,
             eps_reg: float) -> float:
    """Cross-entropy of softmax(logits) against the label, plus the
    eps_reg-weighted squared norms of theta1 and theta2."""
    if eps_reg < 0:
        raise ValueError(f"eps_reg must be non-negative, got {eps_reg}")
    ce = -log_softmax(logits)[label]
    reg = eps_reg * (
        float((params.store["gs.theta1"] ** 2).sum())
        + float((params.store["gs.theta2"] ** 2).sum())
    )
    return float(ce) + reg


# ---------------------------------------------------------------------------
# Training path (tape twin of the forward above)


@dataclass
class TapeForward:
    loss: ag.Var
    logits: ag.Var
    gamma: ag.Var
    lam: ag.Var
    alpha: ag.Var
    beta: ag.Var
    omega: ag.Var
    pv: ag.ParamVars


def build_loss_graph(pairs: PairSequence, label: int,
                     params: GlobalSelectorParams) -> TapeForward:
    store = params.store
    cfg = params.config
    ch = cfg.hidden_size
    n = pairs.pairs.shape[0]
    pv = ag.ParamVars(store)

    z = ag.leaf(pairs.pairs)
    alpha = ag.sigmoid(ag.matmul(z, pv.var("gs.u")))
    z_prime = ag.div_by_scalar(ag.matmul(ag.transpose(alpha), z), ag.sum_all(alpha))
    beta = ag.sigmoid(
        ag.matmul(ag.concat_cols(z, ag.repeat_rows(z_prime, n)), pv.var("gs.theta1"))
    )
    omega = ag.cumsum_rows(ag.scale_rows(z, beta))
    if cfg.normalize_omega:
        omega = ag.div_rows(omega, ag.cumsum_rows(beta))

    wx, wh, b = pv.var("gs.lstm.wx"), pv.var("gs.lstm.wh"), pv.var("gs.lstm.b")
    h_prev = ag.leaf(np.zeros((1, ch)))
    m_prev = ag.leaf(np.zeros((1, ch)))
    h_rows = []
    for t in range(n):
        h_prev, m_prev = ag.lstm_step(ag.row(omega, t), h_prev, m_prev, wx, wh, b)
        h_rows.append(h_prev)
    h = ag.vstack(h_rows)

    scores = ag.add(ag.matmul(h, pv.var("gs.v")), ag.repeat_rows(pv.var("gs.vb"), n))
    lam = ag.softmax_col(scores)
    z_dprime = ag.div_by_scalar(ag.matmul(ag.transpose(lam), omega), ag.sum_all(lam))
    gamma = ag.sigmoid(
        ag.matmul(ag.concat_cols(omega, ag.repeat_rows(z_dprime, n)), pv.var("gs.theta2"))
    )
    content = ag.matmul(ag.transpose(gamma), h)
    logits = ag.dense(content, pv.var("gs.head.w"), pv.var("gs.head.b"))

    ce = ag.cross_entropy_mean(logits, [label])
    reg = ag.scale(
        ag.add(ag.sum_sq(pv.var("gs.theta1")), ag.sum_sq(pv.var("gs.theta2"))),
        cfg.eps_reg,
    )
    return TapeForward(loss=ag.add(ce, reg), logits=logits, gamma=gamma, lam=lam,
                       alpha=alpha, beta=beta, omega=omega, pv=pv)


def loss_and_grads(pairs: PairSequence, label: int, params: GlobalSelectorParams,
                   grad_scale: float = 1.0) -> float:
    """Accumulate d(loss)/d(params) into the store; returns the loss."""
    tape = build_loss_graph(pairs, label, params)
    ag.backward(tape.loss)
    tape.pv.flush_grads(grad_scale)
    return float(tape.loss.value.reshape(()))


def train_global(train_set: list[VideoSample], cfg: TrainConfig, seed: int,
                 n_classes: int, global_config: GlobalConfig | None = None
                 ) -> tuple[GlobalSelectorParams, list[float]]:
    """Minibatch SGD-with-momentum on the classification loss.

    Pairs are re-drawn fresh each epoch from a per-epoch seed, so the
    model sees a different random pairing of the same videos every pass.
    Returns the trained parameters and the per-epoch mean loss curve.
    """
    if not train_set:
        raise ValueError("empty training set")
    global_config = global_config or GlobalConfig()
    feature_dim = sum(train_set[0].dims)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "global-init")))
    params = init_global(feature_dim, n_classes, global_config, rng)

    losses = []
    for epoch in range(cfg.epochs):
        epoch_rng = np.random.Generator(
            np.random.PCG64(derive_seed(seed, "global-shuffle", epoch))
        )
        order = epoch_rng.permutation(len(train_set))
        lr = cfg.lr_at(epoch)
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            batch_loss = 0.0
            for vid_idx in batch:
                video = train_set[vid_idx]
                pair_rng = np.random.Generator(
                    np.random.PCG64(derive_seed(seed, "global-pairs", epoch, video.id))
                )
                batch_loss += loss_and_grads(
                    build_pairs(video, pair_rng), video.label, params,
                    grad_scale=1.0 / batch.size,
                )
            batch_loss /= batch.size
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"global selector diverged at epoch {epoch}, batch "
                    f"{n_batches} (loss={batch_loss})"
                )
            if lr > 0:
                sgd_momentum_step(params.store, lr, cfg.momentum)
            else:
                params.store.zero_grads()
            epoch_loss += batch_loss
            n_batches += 1
        losses.append(epoch_loss / max(1, n_batches))
    return params, losses


def score_global(params: GlobalSelectorParams, video: VideoSample,
                 seed_base: int) -> np.ndarray:
    """Mean gamma over ``pair_reps`` independent pairings of the video.

    Each repetition's pairing is seeded from (video id, seed_base,
    repetition), so scores are reproducible without global state.
    """
    reps = params.config.pair_reps
    total = np.zeros(video.n_frames)
    for rep in range(reps):
        rng = np.random.Generator(
            np.random.PCG64(derive_seed(video.id, seed_base, rep))
        )
        total += global_forward(video, params, rng).gamma
    return total / reps
