"""Combine the two streams' scores and pick frames under a budget.

The combined per-frame score is the plain product delta * gamma; selection
takes the n highest, breaking ties toward the lower frame index so results
are deterministic and order-stable for downstream pooling.  Random and
evenly-spaced baselines live here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .nncore import derive_seed


@dataclass(frozen=True)
class FrameScores:
    delta: np.ndarray
    gamma: np.ndarray
    combined: np.ndarray

    def __post_init__(self):
        if self.delta.shape != self.gamma.shape or self.delta.ndim != 1:
            raise DimensionError(
                f"delta {self.delta.shape} and gamma {self.gamma.shape} must be "
                "equal-length vectors"
            )
        for name, vec in (("delta", self.delta), ("gamma", self.gamma),
                          ("combined", self.combined)):
            if np.any(vec <= 0.0) or np.any(vec >= 1.0):
                raise ValueError(f"{name} scores must lie strictly in (0, 1)")
        if not np.array_equal(self.combined, self.delta * self.gamma):
            raise ValueError("combined scores must equal delta * gamma exactly")

    @property
    def n_frames(self) -> int:
        return self.delta.size


@dataclass(frozen=True)
class SelectionResult:
    indices: tuple[int, ...]
    strategy: str
    budget: int

    def __post_init__(self):
        idx = list(self.indices)
        if idx != sorted(set(idx)):
            raise ValueError("indices must be sorted and distinct")
        if idx and idx[0] < 0:
            raise ValueError("negative frame index")

    def to_line(self, video_id: str) -> str:
        joined = ",".join(str(i) for i in self.indices)
        return f"{video_id}\t{self.strategy}\t{self.budget}\t{joined}"


def combine_scores(delta: np.ndarray, gamma: np.ndarray) -> FrameScores:
    """Elementwise product of the two streams, no renormalization."""
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    gamma = np.asarray(gamma, dtype=np.float64).reshape(-1)
    if delta.shape != gamma.shape:
        raise DimensionError(
            f"delta has {delta.size} entries, gamma has {gamma.size}"
        )
    return FrameScores(delta=delta, gamma=gamma, combined=delta * gamma)


def top_n_indices(values: np.ndarray, n: int) -> tuple[int, ...]:
    """Indices of the n largest values; ties go to the lower index."""
    if n < 1:
        raise ValueError(f"budget must be at least 1, got {n}")
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    # Stable sort on the negated values keeps equal scores in index order.
    order = np.argsort(-values, kind="stable")[: min(n, values.size)]
    return tuple(sorted(int(i) for i in order))


def select_top_n(scores: FrameScores, n: int) -> SelectionResult:
    """Budgeted selection by combined score; n >= N returns every frame."""
    return SelectionResult(
        indices=top_n_indices(scores.combined, n), strategy="smart", budget=n
    )


def baseline_uniform(n_frames: int, n: int) -> SelectionResult:
    """Evenly spaced frames: floor(j * N / n) for j = 0..n-1."""
    if n < 1:
        raise ValueError(f"budget must be at least 1, got {n}")
    want = min(n, n_frames)
    raw = [(j * n_frames) // n for j in range(n)]
    chosen: list[int] = []
    seen = set()
    for idx in raw:
        # Defensive: the floor formula is already distinct for n <= N, but
        # duplicates from n > N are padded forward to the next free index.
        while idx in seen and idx < n_frames - 1:
            idx += 1
        if idx not in seen and idx < n_frames:
            seen.add(idx)
            chosen.append(idx)
        if len(chosen) == want:
            break
    for idx in range(n_frames):
        if len(chosen) == want:
            break
        if idx not in seen:
            seen.add(idx)
            chosen.append(idx)
    return SelectionResult(indices=tuple(sorted(chosen)), strategy="uniform", budget=n)


def baseline_random(n_frames: int, n: int, seed: int) -> SelectionResult:
    """min(n, N) distinct frames drawn without replacement, index-sorted."""
    if n < 1:
        raise ValueError(f"budget must be at least 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "random-baseline")))
    chosen = rng.choice(n_frames, size=min(n, n_frames), replace=False)
    return SelectionResult(
        indices=tuple(sorted(int(i) for i in chosen)), strategy="random", budget=n
    )
