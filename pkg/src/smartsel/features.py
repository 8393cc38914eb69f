"""Per-frame features, their file formats, and the synthetic benchmark.

A frame feature is a visual vector optionally extended with a language
embedding (the mean embedding of the top-k most probable vocabulary
classes).  Real extractors live outside this repo and talk to it through
the binary video format; the synthetic generator below is the in-repo
data source and plants class-dependent signal in a few contiguous runs of
frames per video, with the remaining frames carrying class-independent
distractor content.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, FormatError
from .nncore import derive_seed

VIDEO_MAGIC = b"SMRTVID1"


@dataclass(frozen=True)
class FrameFeature:
    """One frame's feature vector: visual part ++ language part."""

    visual: np.ndarray
    language: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "visual", np.asarray(self.visual, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "language", np.asarray(self.language, dtype=np.float64).reshape(-1))
        if self.visual.size == 0:
            raise DimensionError("visual part must be non-empty")
        if not np.all(np.isfinite(self.visual)) or not np.all(np.isfinite(self.language)):
            raise ValueError("frame feature contains non-finite entries")

    @property
    def vector(self) -> np.ndarray:
        if self.language.size == 0:
            return self.visual
        return np.concatenate([self.visual, self.language])

    @property
    def dims(self) -> tuple[int, int]:
        return self.visual.size, self.language.size


@dataclass(frozen=True)
class VideoSample:
    """Ordered frame features plus the class label; the unit of scoring."""

    id: str
    frames: tuple[FrameFeature, ...]
    label: int

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) == 0:
            raise ValueError(f"video {self.id!r} has no frames")
        dims = self.frames[0].dims
        for i, f in enumerate(self.frames):
            if f.dims != dims:
                raise DimensionError(
                    f"video {self.id!r}: frame {i} has dims {f.dims}, frame 0 has {dims}"
                )
        if self.label < 0:
            raise ValueError(f"video {self.id!r} has negative label {self.label}")

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def dims(self) -> tuple[int, int]:
        return self.frames[0].dims

    def feature_matrix(self) -> np.ndarray:
        """N x D matrix of full frame vectors (visual ++ language)."""
        return np.stack([f.vector for f in self.frames])


@dataclass(frozen=True)
class DatasetMeta:
    n_classes: int
    visual_dim: int
    language_dim: int
    split: str

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")

    @property
    def feature_dim(self) -> int:
        return self.visual_dim + self.language_dim


@dataclass(frozen=True)
class EmbeddingTable:
    """Vocabulary embeddings, consumed as-is (never trained here)."""

    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=np.float64))
        if self.rows.ndim != 2:
            raise DimensionError(f"embedding table must be 2-D, got {self.rows.shape}")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("embedding table contains non-finite entries")

    @property
    def vocab_size(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def concat_language_embedding(visual: np.ndarray, class_probs: np.ndarray,
                              table: EmbeddingTable, k: int) -> FrameFeature:
    """Extend a visual vector with the mean embedding of the top-k classes.

    The k highest-probability vocabulary classes are selected (ties broken
    by lower class index) and their table rows averaged, unweighted.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if k > table.vocab_size:
        raise ValueError(f"k={k} exceeds vocabulary size {table.vocab_size}")
    probs = np.asarray(class_probs, dtype=np.float64).reshape(-1)
    if probs.size != table.vocab_size:
        raise DimensionError(
            f"{probs.size} class probabilities for a vocabulary of {table.vocab_size}"
        )
    if abs(probs.sum() - 1.0) > 1e-6:
        raise ValueError(f"class probabilities sum to {probs.sum()}, not 1")
    # Stable sort on negated probs: equal probabilities keep index order.
    top = np.argsort(-probs, kind="stable")[:k]
    language = table.rows[top].mean(axis=0)
    return FrameFeature(visual=np.asarray(visual, dtype=np.float64), language=language)


# ---------------------------------------------------------------------------
# Binary video format: magic "SMRTVID1", u32 id length, UTF-8 id, u32 label,
# u32 N, u32 Dv, u32 Dl, then N*(Dv+Dl) little-endian float64, row-major.


def video_to_bytes(sample: VideoSample) -> bytes:
    dv, dl = sample.dims
    encoded = sample.id.encode("utf-8")
    header = [
        VIDEO_MAGIC,
        struct.pack("<I", len(encoded)),
        encoded,
        struct.pack("<IIII", sample.label, sample.n_frames, dv, dl),
    ]
    return b"".join(header) + sample.feature_matrix().astype("<f8").tobytes()


def video_from_bytes(blob: bytes) -> VideoSample:
    if blob[:8] != VIDEO_MAGIC:
        raise FormatError("bad video file magic", byte_offset=0)
    offset = 8

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise FormatError("truncated video file", byte_offset=offset)
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    (id_len,) = take("<I")
    if offset + id_len > len(blob):
        raise FormatError("truncated video id", byte_offset=offset)
    video_id = blob[offset : offset + id_len].decode("utf-8")
    offset += id_len
    label, n_frames, dv, dl = take("<IIII")
    if n_frames == 0:
        raise FormatError("video declares zero frames", byte_offset=offset - 12)
    if dv == 0:
        raise FormatError("video declares zero visual dimensions", byte_offset=offset - 8)
    payload = n_frames * (dv + dl) * 8
    if offset + payload > len(blob):
        raise FormatError(
            f"payload needs {payload} bytes, {len(blob) - offset} present",
            byte_offset=offset,
        )
    data = np.frombuffer(blob, dtype="<f8", count=n_frames * (dv + dl), offset=offset)
    offset += payload
    if offset != len(blob):
        raise FormatError("trailing bytes after frame payload", byte_offset=offset)
    matrix = data.reshape(n_frames, dv + dl)
    bad = ~np.all(np.isfinite(matrix), axis=1)
    if bad.any():
        raise DataError(
            f"video {video_id!r}: non-finite value in frame {int(np.argmax(bad))}"
        )
    frames = [FrameFeature(visual=r[:dv], language=r[dv:]) for r in matrix]
    return VideoSample(id=video_id, frames=tuple(frames), label=int(label))


def save_video(sample: VideoSample, path) -> None:
    Path(path).write_bytes(video_to_bytes(sample))


def load_video(path) -> VideoSample:
    return video_from_bytes(Path(path).read_bytes())


def write_manifest(path, relative_paths: list[str], n_classes: int) -> None:
    """Newline-delimited relative video paths under a "C=<int>" header."""
    lines = [f"C={n_classes}"] + list(relative_paths)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path, split: str = "train") -> tuple[list[VideoSample], DatasetMeta]:
    """Load every video listed in a manifest; paths resolve relative to it."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("C="):
        raise FormatError(f"manifest {path} missing C=<int> header line")
    try:
        n_classes = int(lines[0][2:])
    except ValueError:
        raise FormatError(f"manifest {path} has malformed header {lines[0]!r}") from None
    videos = []
    for rel in lines[1:]:
        if not rel.strip():
            continue
        videos.append(load_video(path.parent / rel))
    if not videos:
        raise FormatError(f"manifest {path} lists no videos")
    dv, dl = videos[0].dims
    for v in videos:
        if v.dims != (dv, dl):
            raise DataError(f"video {v.id!r} dims {v.dims} differ from {(dv, dl)}")
        if v.label >= n_classes:
            raise DataError(f"video {v.id!r} label {v.label} >= C={n_classes}")
    return videos, DatasetMeta(n_classes=n_classes, visual_dim=dv, language_dim=dl, split=split)


# ---------------------------------------------------------------------------
# Synthetic benchmark generator


@dataclass(frozen=True)
class SynthConfig:
    """Planted-signal video generator settings.

    Per video, ``round(informative_fraction * n_frames)`` positions (at
    least one), grouped into 1-3 contiguous runs, carry the video class's
    prototype vector plus a shared "informative" marker direction.  The
    remaining frames are distractors: with probability ``junk_fraction``
    they carry the prototype of a per-video junk class drawn uniformly at
    random (independent of the label), otherwise pure noise.  Everything
    gets i.i.d. Gaussian noise of scale ``noise_sigma``.
    """

    n_frames: int = 40
    dim: int = 16
    n_classes: int = 5
    informative_fraction: float = 0.2
    noise_sigma: float = 0.5
    n_train: int = 500
    n_test: int = 200
    language_dim: int = 0
    signal_scale: float = 4.0
    marker_scale: float = 1.0
    distractor_scale: float = 2.0
    junk_fraction: float = 0.5

    def __post_init__(self):
        if min(self.n_frames, self.dim, self.n_classes, self.n_train, self.n_test) <= 0:
            raise ValueError("all size fields must be positive")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if not 0.0 < self.informative_fraction < 1.0:
            raise ValueError(
                f"informative_fraction must lie in (0, 1), got {self.informative_fraction}"
            )
        if not 0 <= self.language_dim < self.dim:
            raise ValueError("language_dim must leave at least one visual dimension")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class SynthData:
    """Generator output: the two splits plus ground-truth informative masks.

    The masks are not part of the dataset contract (nothing downstream may
    look at them); they exist so tests can measure the generator against
    an oracle that knows where the signal was planted.
    """

    train: list[VideoSample]
    test: list[VideoSample]
    meta: DatasetMeta
    train_masks: list[np.ndarray]
    test_masks: list[np.ndarray]


def _informative_mask(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask with k planted positions in 1-3 contiguous runs."""
    n = cfg.n_frames
    k = min(n, max(1, round(cfg.informative_fraction * n)))
    n_runs = int(rng.integers(1, min(3, k) + 1))
    # Split k frames into n_runs non-empty parts.
    if n_runs > 1:
        cuts = np.sort(rng.choice(np.arange(1, k), size=n_runs - 1, replace=False))
        lengths = np.diff(np.concatenate([[0], cuts, [k]]))
    else:
        lengths = np.array([k])
    # Distribute the free slots into n_runs + 1 gaps, uniformly over
    # compositions (stars and bars).
    free = n - k
    if free > 0:
        bars = np.sort(rng.choice(free + n_runs, size=n_runs, replace=False))
        gaps = np.diff(np.concatenate([[-1], bars, [free + n_runs]])) - 1
    else:
        gaps = np.zeros(n_runs + 1, dtype=int)
    mask = np.zeros(n, dtype=bool)
    pos = int(gaps[0])
    for length, gap_after in zip(lengths, gaps[1:]):
        mask[pos : pos + int(length)] = True
        pos += int(length) + int(gap_after)
    return mask


def _split_frames(matrix: np.ndarray, language_dim: int) -> tuple[FrameFeature, ...]:
    dv = matrix.shape[1] - language_dim
    return tuple(FrameFeature(visual=r[:dv], language=r[dv:]) for r in matrix)


def synth_dataset(cfg: SynthConfig, seed: int) -> SynthData:
    """Deterministically generate train/test splits of planted-signal videos."""
    root = np.random.Generator(np.random.PCG64(derive_seed(seed, "synth")))
    protos = root.standard_normal((cfg.n_classes, cfg.dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    marker = root.standard_normal(cfg.dim)
    marker /= np.linalg.norm(marker)

    def make_split(split: str, count: int) -> tuple[list[VideoSample], list[np.ndarray]]:
        videos, masks = [], []
        for idx in range(count):
            rng = np.random.Generator(
                np.random.PCG64(derive_seed(seed, "synth", split, idx))
            )
            label = idx % cfg.n_classes
            junk = int(rng.integers(cfg.n_classes))
            mask = _informative_mask(cfg, rng)
            noise = cfg.noise_sigma * rng.standard_normal((cfg.n_frames, cfg.dim))
            matrix = noise
            matrix[mask] += cfg.signal_scale * protos[label] + cfg.marker_scale * marker
            junk_rows = ~mask & (rng.random(cfg.n_frames) < cfg.junk_fraction)
            matrix[junk_rows] += cfg.distractor_scale * protos[junk]
            videos.append(
                VideoSample(
                    id=f"{split}-{idx:05d}",
                    frames=_split_frames(matrix, cfg.language_dim),
                    label=label,
                )
            )
            masks.append(mask)
        return videos, masks

    train, train_masks = make_split("train", cfg.n_train)
    test, test_masks = make_split("test", cfg.n_test)
    meta = DatasetMeta(
        n_classes=cfg.n_classes,
        visual_dim=cfg.dim - cfg.language_dim,
        language_dim=cfg.language_dim,
        split="train+test",
    )
    return SynthData(train=train, test=test, meta=meta,
                     train_masks=train_masks, test_masks=test_masks)


def default_config() -> SynthConfig:
    return SynthConfig()


def smaller(cfg: SynthConfig, **overrides) -> SynthConfig:
    """Convenience for tests: copy a config with overrides."""
    return replace(cfg, **overrides)
