"""Budgeted video frame selection with two cooperating scorers.

Every frame of a feature-represented video is scored by a per-frame
confidence regressor (delta) and a global attention/relation/LSTM model
(gamma); the products rank frames and the top n under the budget go to
the downstream classifier.
"""

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    FormatError,
    SmartselError,
    StateError,
    TrainingError,
)
from .features import (
    DatasetMeta,
    EmbeddingTable,
    FrameFeature,
    SynthConfig,
    SynthData,
    VideoSample,
    concat_language_embedding,
    load_manifest,
    load_video,
    save_video,
    synth_dataset,
)
from .global_selector import (
    GlobalConfig,
    GlobalSelectorParams,
    build_pairs,
    global_forward,
    loss_cls,
    score_global,
    train_global,
)
from .nncore import ParamStore, RngState, TrainConfig, derive_seed, grad_check
from .selection import (
    FrameScores,
    SelectionResult,
    baseline_random,
    baseline_uniform,
    combine_scores,
    select_top_n,
)
from .single_selector import (
    SingleFrameMLP,
    oracle_frame_targets,
    score_single,
    train_single,
)
from .evaluation import (
    EvalResult,
    FlopsLedger,
    Models,
    ModelShapes,
    ProxyClassifier,
    evaluate,
    flops_count,
    predict_video,
    train_proxy,
)

__version__ = "0.1.0"
