"""Dense float64 kernels, parameter storage, and training plumbing.

Everything downstream (both selectors, the proxy classifier) is built from
the pieces in this module: row-vector dense layers, a standard LSTM cell,
a named parameter store with momentum buffers and a binary serialization
format, seeded RNG derivation, SGD with momentum, and a central-difference
gradient checker.

All arithmetic is 64-bit; matrices are 2-D ``float64`` arrays in row-major
order and row vectors are ``1 x K`` matrices.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import DimensionError, FormatError

PARAM_MAGIC = b"SMRTPRM1"

# Largest/smallest float64 strictly inside (0, 1); sigmoid saturates to
# these instead of touching the endpoints.
_OPEN_HI = np.nextafter(1.0, 0.0)
_OPEN_LO = np.nextafter(0.0, 1.0)


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    """Validate and return ``value`` as a finite 2-D float64 array."""
    out = np.asarray(value, dtype=np.float64)
    if out.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary labels (ids, epoch numbers, ...).

    blake2b keyed on the repr of each part; identical inputs give identical
    seeds on every platform, unlike the salted builtin ``hash``.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngState:
    """Seed plus a fixed generator algorithm; same seed, same stream."""

    seed: int
    algorithm: str = "pcg64"

    def generator(self) -> np.random.Generator:
        if self.algorithm != "pcg64":
            raise ValueError(f"unknown rng algorithm {self.algorithm!r}")
        return np.random.Generator(np.random.PCG64(self.seed))

    def child(self, *parts) -> "RngState":
        return RngState(derive_seed(self.seed, *parts), self.algorithm)


class ParamStore:
    """Named parameters with matching gradient and momentum buffers.

    Insertion order is preserved and defines the serialization order, so
    a save/load/save round trip is byte-identical.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.momentum: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        mat = as_matrix(value, name)
        self.params[name] = mat
        self.grads[name] = np.zeros_like(mat)
        self.momentum[name] = np.zeros_like(mat)
        return mat

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def names(self) -> Iterator[str]:
        return iter(self.params)

    def n_scalars(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def accumulate_grad(self, name: str, grad: np.ndarray) -> None:
        if grad.shape != self.params[name].shape:
            raise DimensionError(
                f"gradient for {name!r} has shape {grad.shape}, "
                f"parameter has shape {self.params[name].shape}"
            )
        self.grads[name] += grad

    def copy(self) -> "ParamStore":
        dup = ParamStore()
        for name, value in self.params.items():
            dup.add(name, value.copy())
            dup.grads[name][...] = self.grads[name]
            dup.momentum[name][...] = self.momentum[name]
        return dup

    # Binary format: magic "SMRTPRM1", u32 entry count, then per entry
    # u32 name length, UTF-8 name, u32 rows, u32 cols, row-major float64
    # payload.  Everything little-endian.

    def to_bytes(self) -> bytes:
        chunks = [PARAM_MAGIC, struct.pack("<I", len(self.params))]
        for name, mat in self.params.items():
            encoded = name.encode("utf-8")
            chunks.append(struct.pack("<I", len(encoded)))
            chunks.append(encoded)
            chunks.append(struct.pack("<II", mat.shape[0], mat.shape[1]))
            chunks.append(np.ascontiguousarray(mat).astype("<f8").tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ParamStore":
        if blob[:8] != PARAM_MAGIC:
            raise FormatError("bad parameter file magic", byte_offset=0)
        offset = 8

        def take(fmt: str):
            nonlocal offset
            size = struct.calcsize(fmt)
            if offset + size > len(blob):
                raise FormatError("truncated parameter file", byte_offset=offset)
            values = struct.unpack_from(fmt, blob, offset)
            offset += size
            return values

        (count,) = take("<I")
        store = cls()
        for _ in range(count):
            (name_len,) = take("<I")
            if offset + name_len > len(blob):
                raise FormatError("truncated parameter name", byte_offset=offset)
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            rows, cols = take("<II")
            payload = rows * cols * 8
            if offset + payload > len(blob):
                raise FormatError("truncated parameter payload", byte_offset=offset)
            data = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=offset)
            offset += payload
            store.add(name, data.reshape(rows, cols).astype(np.float64))
        if offset != len(blob):
            raise FormatError("trailing bytes after final entry", byte_offset=offset)
        return store

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ParamStore":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def init_dense(store: ParamStore, name: str, fan_in: int, fan_out: int,
               rng: np.random.Generator) -> None:
    """Weights ~ Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), zero bias."""
    limit = 1.0 / np.sqrt(fan_in)
    store.add(f"{name}.w", rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    store.add(f"{name}.b", np.zeros((1, fan_out)))


def init_lstm(store: ParamStore, prefix: str, input_size: int, hidden: int,
              rng: np.random.Generator) -> None:
    """LSTM weights for gate order (input, forget, cell, output).

    Forget-gate bias starts at +1 so early training does not wipe the cell
    state.
    """
    limit = 1.0 / np.sqrt(input_size + hidden)
    store.add(f"{prefix}.wx", rng.uniform(-limit, limit, size=(input_size, 4 * hidden)))
    store.add(f"{prefix}.wh", rng.uniform(-limit, limit, size=(hidden, 4 * hidden)))
    bias = np.zeros((1, 4 * hidden))
    bias[0, hidden : 2 * hidden] = 1.0
    store.add(f"{prefix}.b", bias)


def dense_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Row-vector dense layer: ``x @ w + bias``.

    ``x`` is 1 x D (or B x D for a batch), ``w`` is D x K, ``bias`` 1 x K.
    """
    x = as_matrix(x, "x")
    w = as_matrix(w, "w")
    bias = as_matrix(bias, "bias")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(
            f"dense_forward: x has {x.shape[1]} columns but w has "
            f"{w.shape[0]} rows (x{x.shape} @ w{w.shape})"
        )
    if bias.shape != (1, w.shape[1]):
        raise DimensionError(
            f"dense_forward: bias shape {bias.shape} does not match "
            f"w output size {w.shape[1]} (expected (1, {w.shape[1]}))"
        )
    return x @ w + bias


def sigmoid(v: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, saturating strictly inside (0, 1).

    Computed in the overflow-free branch form; outputs are clamped to the
    nearest representable values inside the open interval so downstream
    products and gates never see exact 0 or 1.
    """
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return np.clip(out, _OPEN_LO, _OPEN_HI)


def softmax(v: np.ndarray) -> np.ndarray:
    """Probability vector from logits, with max-subtraction for stability."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("softmax of an empty vector is undefined")
    z = np.exp(v - v.max())
    return z / z.sum()


def log_softmax(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("log_softmax of an empty vector is undefined")
    shifted = v - v.max()
    return shifted - np.log(np.exp(shifted).sum())


def lstm_step(x: np.ndarray, h_prev: np.ndarray, m_prev: np.ndarray,
              params: ParamStore, prefix: str = "lstm") -> tuple[np.ndarray, np.ndarray]:
    """One step of the standard LSTM cell (forget gate, no peepholes).

    Gate order in the packed weight matrices is (input, forget, cell,
    output)::

        z = x @ wx + h_prev @ wh + b
        i, f, g, o = split(z);  i, f, o through sigmoid, g through tanh
        m = f * m_prev + i * g
        h = o * tanh(m)
    """
    wx = params[f"{prefix}.wx"]
    wh = params[f"{prefix}.wh"]
    b = params[f"{prefix}.b"]
    hidden = wh.shape[0]
    x = as_matrix(x, "lstm input")
    h_prev = as_matrix(h_prev, "h_prev")
    m_prev = as_matrix(m_prev, "m_prev")
    if x.shape[1] != wx.shape[0]:
        raise DimensionError(
            f"lstm_step: input has {x.shape[1]} columns but wx expects {wx.shape[0]}"
        )
    if h_prev.shape != (1, hidden) or m_prev.shape != (1, hidden):
        raise DimensionError(
            f"lstm_step: state shapes {h_prev.shape}/{m_prev.shape} do not "
            f"match hidden size {hidden}"
        )
    z = x @ wx + h_prev @ wh + b
    i = sigmoid(z[:, :hidden])
    f = sigmoid(z[:, hidden : 2 * hidden])
    g = np.tanh(z[:, 2 * hidden : 3 * hidden])
    o = sigmoid(z[:, 3 * hidden :])
    m = f * m_prev + i * g
    h = o * np.tanh(m)
    return h, m


def sgd_momentum_step(params: ParamStore, lr: float, momentum: float) -> None:
    """Classic momentum update, then zero the gradient accumulators.

    v <- momentum * v + grad;  theta <- theta - lr * v.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must be in [0, 1), got {momentum}")
    for name, theta in params.params.items():
        v = params.momentum[name]
        v *= momentum
        v += params.grads[name]
        theta -= lr * v
    params.zero_grads()


@dataclass(frozen=True)
class TrainConfig:
    """Minibatch SGD-with-momentum settings shared by all three models.

    The step size drops by ``lr_decay_factor`` every ``lr_decay_every``
    epochs (0 disables the schedule).
    """

    epochs: int
    lr: float
    batch_size: int = 32
    momentum: float = 0.9
    lr_decay_every: int = 25
    lr_decay_factor: float = 0.1

    def lr_at(self, epoch: int) -> float:
        if self.lr_decay_every <= 0:
            return self.lr
        return self.lr * self.lr_decay_factor ** (epoch // self.lr_decay_every)


def grad_check(loss_fn: Callable[[], float], params: ParamStore,
               eps: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` must depend deterministically on the current contents of
    ``params`` (re-reading values on every call); ``params.grads`` must
    already hold the analytic gradients for the same loss.  Returns the
    maximum over all scalar parameters of

        |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    analytic = {name: g.copy() for name, g in params.grads.items()}
    worst = 0.0
    for name, theta in params.params.items():
        flat = theta.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + eps
            f_plus = float(loss_fn())
            flat[idx] = original - eps
            f_minus = float(loss_fn())
            flat[idx] = original
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError(
                    f"non-finite loss while perturbing {name}[{idx}]"
                )
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = grad_flat[idx]
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst
