"""Shared fixtures: the default synthetic pipeline, trained once per session."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pytest

import smartsel as ss
from smartsel import evaluation as ev
from smartsel import global_selector as gs
from smartsel import single_selector as sf
from smartsel.cli import _TRAIN_DEFAULTS, _train_cfg

DEFAULT_SEED = 42


@dataclass
class PipelineRun:
    cfg: ss.SynthConfig
    data: ss.SynthData
    models: ev.Models
    score_cache: dict
    proxy_losses: list
    single_losses: list
    global_losses: list
    train_seconds: float


@pytest.fixture(scope="session")
def default_run() -> PipelineRun:
    """synth + train on the default config, with the CLI's default settings."""
    cfg = ss.SynthConfig()
    t0 = time.monotonic()
    data = ss.synth_dataset(cfg, DEFAULT_SEED)
    trd = dict(_TRAIN_DEFAULTS)
    proxy, proxy_losses = ev.train_proxy(
        data.train, _train_cfg(trd, "proxy"), DEFAULT_SEED, cfg.n_classes,
        hidden=trd["proxy_hidden"],
    )
    single, single_losses = sf.train_single(
        data.train, proxy, _train_cfg(trd, "single"), DEFAULT_SEED,
        hidden=trd["single_hidden"],
    )
    gparams, global_losses = gs.train_global(
        data.train, _train_cfg(trd, "global"), DEFAULT_SEED, cfg.n_classes,
        ss.GlobalConfig(hidden_size=trd["global_hidden"], eps_reg=trd["eps_reg"],
                        pair_reps=trd["pair_reps"]),
    )
    models = ev.Models(proxy=proxy, single=single, global_params=gparams)
    score_cache = {v.id: ev.video_scores(models, v, DEFAULT_SEED) for v in data.test}
    train_seconds = time.monotonic() - t0
    return PipelineRun(cfg=cfg, data=data, models=models, score_cache=score_cache,
                       proxy_losses=proxy_losses, single_losses=single_losses,
                       global_losses=global_losses, train_seconds=train_seconds)
