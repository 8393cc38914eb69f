"""Command-line front end: synth / train / select / eval / gradcheck.

Every command takes one --seed from which all randomness is derived, reads
optional defaults from a JSON --config file (precedence: flags > config
file > built-in defaults), echoes its effective configuration into the
output directory, and writes files atomically (temp + rename) so repeated
runs with identical inputs are byte-identical.

Exit codes: 0 ok, 1 usage, 2 data/format/config, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import global_selector
from .errors import ConfigError, DataError, FormatError, SmartselError, TrainingError
from .evaluation import (
    Models,
    ProxyClassifier,
    evaluate,
    frame_accuracy,
    shapes_from_models,
    video_scores,
)
from .features import (
    SynthConfig,
    load_manifest,
    synth_dataset,
    video_to_bytes,
    write_manifest,
)
from .global_selector import (
    GlobalConfig,
    GlobalSelectorParams,
    build_pairs,
    forward_from_pairs,
    init_global,
    loss_and_grads,
    loss_cls,
)
from .nncore import ParamStore, TrainConfig, derive_seed, grad_check
from .selection import baseline_random, baseline_uniform, select_top_n
from .single_selector import SingleFrameMLP, train_single
from .evaluation import train_proxy


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _write_atomic(path: Path, data: bytes | str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _float_csv(values: np.ndarray) -> str:
    return ",".join(repr(float(v)) for v in values)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        loaded = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(loaded, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return loaded


def _resolve(defaults: dict, config_file: dict, flags: dict) -> dict:
    """flags > config file > defaults; unknown config keys are rejected."""
    effective = dict(defaults)
    for key, value in config_file.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        effective[key] = value
    for key, value in flags.items():
        if value is not None:
            effective[key] = value
    return effective


def _echo_config(out_dir: Path, command: str, effective: dict) -> None:
    payload = {"command": command, **effective}
    _write_atomic(out_dir / "config.json",
                  json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# synth


_SYNTH_DEFAULTS = dict(
    seed=42, frames=40, dim=16, classes=5, frac=0.2, noise=0.5,
    train_count=500, test_count=200, language_dim=0,
    signal_scale=4.0, marker_scale=1.0, distractor_scale=2.0, junk_fraction=0.5,
)


def cmd_synth(args) -> int:
    cfg = _resolve(_SYNTH_DEFAULTS, _load_config_file(args.config), {
        "seed": args.seed, "frames": args.frames, "dim": args.dim,
        "classes": args.classes, "frac": args.frac, "noise": args.noise,
        "train_count": args.train_count, "test_count": args.test_count,
    })
    synth_cfg = SynthConfig(
        n_frames=cfg["frames"], dim=cfg["dim"], n_classes=cfg["classes"],
        informative_fraction=cfg["frac"], noise_sigma=cfg["noise"],
        n_train=cfg["train_count"], n_test=cfg["test_count"],
        language_dim=cfg["language_dim"], signal_scale=cfg["signal_scale"],
        marker_scale=cfg["marker_scale"], distractor_scale=cfg["distractor_scale"],
        junk_fraction=cfg["junk_fraction"],
    )
    data = synth_dataset(synth_cfg, cfg["seed"])
    out = Path(args.out)
    manifests = {"train": data.train, "test": data.test}
    for split, videos in manifests.items():
        rels = []
        for video in videos:
            rel = f"videos/{video.id}.vid"
            _write_atomic(out / rel, video_to_bytes(video))
            rels.append(rel)
        _write_atomic(
            out / f"{split}_manifest.txt",
            f"C={synth_cfg.n_classes}\n" + "\n".join(rels) + "\n",
        )
        print(out / f"{split}_manifest.txt")
    _echo_config(out, "synth", cfg)
    return 0


# ---------------------------------------------------------------------------
# train


_TRAIN_DEFAULTS = dict(
    seed=42, momentum=0.9, lr_decay_every=25, lr_decay_factor=0.1,
    proxy_epochs=60, proxy_lr=1.0, proxy_batch=128, proxy_hidden=None,
    single_epochs=60, single_lr=0.5, single_batch=128, single_hidden=64,
    global_epochs=20, global_lr=0.001, global_batch=16, global_hidden=64,
    eps_reg=1e-4, pair_reps=4, normalize_omega=False,
)


def _train_cfg(cfg: dict, model: str) -> TrainConfig:
    return TrainConfig(
        epochs=cfg[f"{model}_epochs"], lr=cfg[f"{model}_lr"],
        batch_size=cfg[f"{model}_batch"], momentum=cfg["momentum"],
        lr_decay_every=cfg["lr_decay_every"], lr_decay_factor=cfg["lr_decay_factor"],
    )


def cmd_train(args) -> int:
    flags = {"seed": args.seed, "momentum": args.momentum, "eps_reg": args.eps_reg,
             "pair_reps": args.pair_reps}
    # --epochs/--lr/--hidden act as master knobs across all three models.
    if args.epochs is not None:
        flags.update(proxy_epochs=args.epochs, single_epochs=args.epochs,
                     global_epochs=args.epochs)
    if args.lr is not None:
        flags.update(proxy_lr=args.lr, single_lr=args.lr, global_lr=args.lr)
    if args.hidden is not None:
        flags.update(single_hidden=args.hidden, global_hidden=args.hidden)
    cfg = _resolve(_TRAIN_DEFAULTS, _load_config_file(args.config), flags)

    data_dir = Path(args.data)
    train_set, meta = load_manifest(data_dir / "train_manifest.txt", split="train")
    seed = cfg["seed"]

    proxy, proxy_losses = train_proxy(
        train_set, _train_cfg(cfg, "proxy"), seed, meta.n_classes,
        hidden=cfg["proxy_hidden"],
    )
    single, single_losses = train_single(
        train_set, proxy, _train_cfg(cfg, "single"), seed, hidden=cfg["single_hidden"],
    )
    gparams, global_losses = global_selector.train_global(
        train_set, _train_cfg(cfg, "global"), seed, meta.n_classes,
        GlobalConfig(hidden_size=cfg["global_hidden"], eps_reg=cfg["eps_reg"],
                     pair_reps=cfg["pair_reps"],
                     normalize_omega=cfg["normalize_omega"]),
    )

    out = Path(args.out)
    _write_atomic(out / "proxy.params", proxy.store.to_bytes())
    _write_atomic(out / "single.params", single.store.to_bytes())
    _write_atomic(out / "global.params", gparams.store.to_bytes())
    model_meta = {
        "feature_dim": meta.feature_dim,
        "visual_dim": meta.visual_dim,
        "language_dim": meta.language_dim,
        "n_classes": meta.n_classes,
        "proxy_hidden": cfg["proxy_hidden"],
        "single_hidden": cfg["single_hidden"],
        "global": {
            "D": meta.feature_dim,
            "Ch": cfg["global_hidden"],
            "C": meta.n_classes,
            "R": cfg["pair_reps"],
            "eps_reg": cfg["eps_reg"],
            "normalize_omega": cfg["normalize_omega"],
        },
    }
    _write_atomic(out / "model_meta.json",
                  json.dumps(model_meta, indent=2, sort_keys=True) + "\n")
    for name, losses in (("proxy", proxy_losses), ("single", single_losses),
                         ("global", global_losses)):
        _write_atomic(out / f"loss_{name}.txt",
                      "\n".join(repr(v) for v in losses) + "\n")
    _echo_config(out, "train", cfg)
    print(f"final losses: proxy={proxy_losses[-1]:.4f} "
          f"single={single_losses[-1]:.4f} global={global_losses[-1]:.4f}"
          if proxy_losses and single_losses and global_losses else
          "zero-epoch run: wrote initial parameters")
    return 0


def load_models(models_dir: Path) -> tuple[Models, dict]:
    meta_path = models_dir / "model_meta.json"
    if not meta_path.exists():
        raise FormatError(f"missing {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    proxy = ProxyClassifier(
        store=ParamStore.load(models_dir / "proxy.params"),
        input_dim=meta["feature_dim"], n_classes=meta["n_classes"],
        hidden=meta["proxy_hidden"], trained=True,
    )
    single = SingleFrameMLP(
        store=ParamStore.load(models_dir / "single.params"),
        input_dim=meta["feature_dim"], hidden=meta["single_hidden"],
    )
    g = meta["global"]
    gparams = GlobalSelectorParams(
        store=ParamStore.load(models_dir / "global.params"),
        feature_dim=g["D"], n_classes=g["C"],
        config=GlobalConfig(hidden_size=g["Ch"], eps_reg=g["eps_reg"],
                            pair_reps=g["R"],
                            normalize_omega=g["normalize_omega"]),
    )
    return Models(proxy=proxy, single=single, global_params=gparams), meta


def _check_compat(meta: dict, dataset_meta) -> None:
    if meta["feature_dim"] != dataset_meta.feature_dim:
        raise ConfigError(
            f"models expect feature dim {meta['feature_dim']}, dataset has "
            f"{dataset_meta.feature_dim}"
        )
    if meta["n_classes"] != dataset_meta.n_classes:
        raise ConfigError(
            f"models expect {meta['n_classes']} classes, dataset has "
            f"{dataset_meta.n_classes}"
        )


# ---------------------------------------------------------------------------
# select


_SELECT_DEFAULTS = dict(seed=42, n=8, strategy="smart", split="test", pair_reps=None)


def cmd_select(args) -> int:
    cfg = _resolve(_SELECT_DEFAULTS, _load_config_file(args.config), {
        "seed": args.seed, "n": args.n, "strategy": args.strategy,
        "split": args.split, "pair_reps": args.pair_reps,
    })
    videos, dmeta = load_manifest(
        Path(args.data) / f"{cfg['split']}_manifest.txt", split=cfg["split"]
    )
    models, meta = load_models(Path(args.models))
    _check_compat(meta, dmeta)
    if cfg["pair_reps"] is not None:
        models.global_params.config = replace(
            models.global_params.config, pair_reps=cfg["pair_reps"]
        )

    out = Path(args.out)
    n, strategy, seed = cfg["n"], cfg["strategy"], cfg["seed"]
    selection_lines, score_lines = [], []
    for video in videos:
        if strategy == "smart":
            scores = video_scores(models, video, seed)
            result = select_top_n(scores, n)
            score_lines.append(
                f"{video.id}\t{_float_csv(scores.delta)}\t"
                f"{_float_csv(scores.gamma)}\t{_float_csv(scores.combined)}"
            )
        elif strategy == "uniform":
            result = baseline_uniform(video.n_frames, n)
        elif strategy == "random":
            result = baseline_random(video.n_frames, n, derive_seed(seed, video.id))
        else:
            raise ConfigError(f"unknown strategy {strategy!r}")
        selection_lines.append(result.to_line(video.id))
    _write_atomic(out / "selections.tsv", "\n".join(selection_lines) + "\n")
    if score_lines:
        _write_atomic(out / "scores.tsv", "\n".join(score_lines) + "\n")
    _echo_config(out, "select", cfg)
    print(out / "selections.tsv")
    return 0


# ---------------------------------------------------------------------------
# eval


_EVAL_DEFAULTS = dict(
    seed=42, sweep="4,8,16,24,32,40", random_runs=10, pair_reps=None,
    feature_flops=25_000, classifier_flops=2_500_000, split="test",
)


def _parse_sweep(text: str) -> list[int]:
    try:
        values = [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"--sweep must be comma-separated integers, got {text!r}")
    if not values or any(v < 1 for v in values):
        raise ConfigError(f"--sweep budgets must be positive, got {text!r}")
    return values


def cmd_eval(args) -> int:
    flags = {"seed": args.seed, "random_runs": args.random_runs,
             "pair_reps": args.pair_reps, "split": args.split,
             "feature_flops": args.feature_flops,
             "classifier_flops": args.classifier_flops}
    if args.sweep is not None:
        flags["sweep"] = args.sweep
    elif args.n is not None:
        flags["sweep"] = str(args.n)
    cfg = _resolve(_EVAL_DEFAULTS, _load_config_file(args.config), flags)
    budgets = _parse_sweep(cfg["sweep"])

    videos, dmeta = load_manifest(
        Path(args.data) / f"{cfg['split']}_manifest.txt", split=cfg["split"]
    )
    models, meta = load_models(Path(args.models))
    _check_compat(meta, dmeta)
    if cfg["pair_reps"] is not None:
        models.global_params.config = replace(
            models.global_params.config, pair_reps=cfg["pair_reps"]
        )

    seed = cfg["seed"]
    cache = {v.id: video_scores(models, v, seed) for v in videos}
    shapes = shapes_from_models(
        models, n_frames=videos[0].n_frames, budget=budgets[0],
        feature_flops_per_frame=cfg["feature_flops"],
        classifier_flops_per_frame=cfg["classifier_flops"],
    )
    results = []
    for n in budgets:
        for strategy in ("smart", "random", "uniform"):
            results.append(evaluate(
                videos, strategy, n, models, seed_base=seed,
                random_runs=cfg["random_runs"], shapes=shapes, score_cache=cache,
            ))

    header = "strategy\tn\taccuracy\tsd\tselector_flops\ttotal_flops\tratio"
    rows = [header]
    for r in results:
        rows.append(
            f"{r.strategy}\t{r.n}\t{repr(r.accuracy)}\t{repr(r.sd)}\t"
            f"{r.ledger.selector_flops}\t{r.ledger.total}\t{repr(r.ledger.ratio)}"
        )
    out = Path(args.out)
    _write_atomic(out / "report.tsv", "\n".join(rows) + "\n")

    pretty = [f"{'strategy':>8} {'n':>4} {'accuracy':>9} {'sd':>7} "
              f"{'selector':>12} {'total':>12} {'ratio':>7}"]
    for r in results:
        pretty.append(
            f"{r.strategy:>8} {r.n:>4} {r.accuracy:>9.4f} {r.sd:>7.4f} "
            f"{r.ledger.selector_flops:>12} {r.ledger.total:>12} "
            f"{r.ledger.ratio:>7.3f}"
        )
    table = "\n".join(pretty) + "\n"
    _write_atomic(out / "report.txt", table)
    _echo_config(out, "eval", cfg)
    print(table, end="")
    return 0


# ---------------------------------------------------------------------------
# gradcheck


_GRADCHECK_DEFAULTS = dict(
    seed=0, frames=6, dim=8, hidden=5, classes=3, eps=1e-5, tolerance=1e-4,
)


def cmd_gradcheck(args) -> int:
    cfg = _resolve(_GRADCHECK_DEFAULTS, _load_config_file(args.config), {
        "seed": args.seed, "frames": args.frames, "dim": args.dim,
        "hidden": args.hidden, "classes": args.classes, "eps": args.eps,
        "tolerance": args.tolerance,
    })
    rng = np.random.Generator(np.random.PCG64(derive_seed(cfg["seed"], "gradcheck")))
    params = init_global(cfg["dim"], cfg["classes"],
                         GlobalConfig(hidden_size=cfg["hidden"]), rng)
    from .features import FrameFeature, VideoSample

    frames = tuple(
        FrameFeature(visual=rng.standard_normal(cfg["dim"]))
        for _ in range(cfg["frames"])
    )
    video = VideoSample(id="gradcheck", frames=frames, label=int(rng.integers(cfg["classes"])))
    pairs = build_pairs(video, rng)

    params.store.zero_grads()
    global_selector.loss_and_grads(pairs, video.label, params)

    def loss_fn():
        trace = forward_from_pairs(pairs, params)
        return loss_cls(trace.logits, video.label, params, params.config.eps_reg)

    max_err = grad_check(loss_fn, params.store, eps=cfg["eps"])
    ok = max_err < cfg["tolerance"]
    print(f"gradcheck: N={cfg['frames']} D={cfg['dim']} Ch={cfg['hidden']} "
          f"C={cfg['classes']} eps={cfg['eps']:g} "
          f"max_rel_error={max_err:.3e} tolerance={cfg['tolerance']:g} "
          f"{'PASS' if ok else 'FAIL'}")
    return 0 if ok else 3


# ---------------------------------------------------------------------------
# wiring


def _add_common(sub: argparse.ArgumentParser, *, data=False, out=False,
                models=False) -> None:
    sub.add_argument("--seed", type=int, default=None, help="master random seed")
    sub.add_argument("--config", default=None, help="JSON config file (flags win)")
    if data:
        sub.add_argument("--data", required=True, help="dataset directory")
    if models:
        sub.add_argument("--models", required=True, help="trained model directory")
    if out:
        sub.add_argument("--out", required=True, help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="smartsel",
                     description="Budgeted frame selection experiments.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", parents=[], help="generate a synthetic dataset")
    _add_common(p, out=True)
    p.add_argument("--frames", type=int, default=None, help="frames per video")
    p.add_argument("--dim", type=int, default=None, help="feature dimension")
    p.add_argument("--classes", type=int, default=None, help="number of classes")
    p.add_argument("--frac", type=float, default=None,
                   help="informative fraction of frames")
    p.add_argument("--noise", type=float, default=None, help="noise sigma")
    p.add_argument("--train-count", type=int, default=None)
    p.add_argument("--test-count", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("train", help="train proxy, single, and global models")
    _add_common(p, data=True, out=True)
    p.add_argument("--epochs", type=int, default=None,
                   help="epochs for all three models")
    p.add_argument("--lr", type=float, default=None,
                   help="learning rate for all three models")
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--eps-reg", type=float, default=None, dest="eps_reg",
                   help="theta regularization weight")
    p.add_argument("--hidden", type=int, default=None,
                   help="hidden width for both selectors")
    p.add_argument("--pair-reps", type=int, default=None, dest="pair_reps",
                   help="pairings averaged at scoring time")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("select", help="score videos and pick frames")
    _add_common(p, data=True, out=True, models=True)
    p.add_argument("--n", type=int, default=None, help="frame budget")
    p.add_argument("--pair-reps", type=int, default=None, dest="pair_reps")
    p.add_argument("--strategy", choices=["smart", "random", "uniform"],
                   default=None)
    p.add_argument("--split", choices=["train", "test"], default=None)
    p.set_defaults(func=cmd_select)

    p = subs.add_parser("eval", help="accuracy/FLOPs report over a budget sweep")
    _add_common(p, data=True, out=True, models=True)
    p.add_argument("--n", type=int, default=None, help="single budget")
    p.add_argument("--sweep", default=None, help='budget list, e.g. "8,16,24,32"')
    p.add_argument("--random-runs", type=int, default=None, dest="random_runs")
    p.add_argument("--pair-reps", type=int, default=None, dest="pair_reps")
    p.add_argument("--split", choices=["train", "test"], default=None)
    p.add_argument("--feature-flops", type=int, default=None, dest="feature_flops",
                   help="per-frame cost of the light feature path")
    p.add_argument("--classifier-flops", type=int, default=None,
                   dest="classifier_flops",
                   help="per-frame cost of the expensive classifier")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("gradcheck", help="finite-difference gradient check")
    _add_common(p)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--eps", type=float, default=None, help="finite-difference step")
    p.add_argument("--tolerance", type=float, default=None)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, DataError, ConfigError) as exc:
        print(f"smartsel {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"smartsel {args.command}: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, FloatingPointError) as exc:
        print(f"smartsel {args.command}: {exc}", file=sys.stderr)
        return 3
    except SmartselError as exc:
        print(f"smartsel {args.command}: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
