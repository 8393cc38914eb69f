#!/usr/bin/env python3
"""Per-frame score profiles of the two selector streams, averaged by class.

For every class, averages delta (single-frame), gamma (global), and the
combined score at each frame position over the test videos of that class,
and writes a plot-ready TSV (class, position, delta, gamma, combined).
With --png and matplotlib installed, also renders one panel per class.

Usage:
    python scripts/plot_score_profiles.py --data runs/bench/data \
        --models runs/bench/models --out runs/bench/profiles [--png]
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from smartsel.cli import load_models
from smartsel.evaluation import video_scores
from smartsel.features import load_manifest


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", required=True)
    parser.add_argument("--models", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--png", action="store_true")
    args = parser.parse_args(argv)

    videos, meta = load_manifest(Path(args.data) / "test_manifest.txt", split="test")
    models, _ = load_models(Path(args.models))

    n_frames = videos[0].n_frames
    sums = np.zeros((meta.n_classes, 3, n_frames))
    counts = np.zeros(meta.n_classes, dtype=int)
    for video in videos:
        scores = video_scores(models, video, args.seed)
        sums[video.label, 0] += scores.delta
        sums[video.label, 1] += scores.gamma
        sums[video.label, 2] += scores.combined
        counts[video.label] += 1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["class\tposition\tdelta\tgamma\tcombined"]
    for c in range(meta.n_classes):
        if counts[c] == 0:
            continue
        mean = sums[c] / counts[c]
        for t in range(n_frames):
            lines.append(
                f"{c}\t{t}\t{float(mean[0, t])!r}\t{float(mean[1, t])!r}"
                f"\t{float(mean[2, t])!r}"
            )
    (out / "score_profiles.tsv").write_text("\n".join(lines) + "\n")
    print(out / "score_profiles.tsv")

    if args.png:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("matplotlib not installed; skipping --png", file=sys.stderr)
            return 0
        fig, axes = plt.subplots(1, meta.n_classes, figsize=(3.2 * meta.n_classes, 3),
                                 sharey=True)
        axes = np.atleast_1d(axes)
        for c, ax in enumerate(axes):
            mean = sums[c] / max(1, counts[c])
            ax.plot(mean[0], label="delta")
            ax.plot(mean[1], label="gamma")
            ax.plot(mean[2], label="combined")
            ax.set_title(f"class {c}")
            ax.set_xlabel("frame")
        axes[0].set_ylabel("mean score")
        axes[0].legend()
        fig.tight_layout()
        fig.savefig(out / "score_profiles.png", dpi=120)
        print(out / "score_profiles.png")
    return 0


if __name__ == "__main__":
    sys.exit(run())
