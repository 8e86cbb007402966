#!/usr/bin/env python3
"""End-to-end toy-ring experiment suite.

Runs the full diagnostic pipeline on the synthetic ring and writes every
artifact under one output directory:

  ring-standard/     kNN-graph run: embedding, per-epoch losses, scatter
  ring-push-tail/    same with the push-tail negative-sampling variant
  ring-dense/        dense input similarities at the kernel's design
                     scale (radius 4), where pair weights reach ~0.5
  loss_table.csv     stated-loss grid over input x embedding similarities
  hist_*.csv/svg     similarity, degree and inverted-overlay histograms
  loss_curves.svg    stated vs effective vs realized loss trajectories
  pumap_report.csv   batch-sampler Monte Carlo verification

--quick cuts the epoch budgets for a fast smoke run.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from umaplens.cli import main as cli_main
from umaplens.cli import run_embed_pipeline
from umaplens.losses import read_loss_csv
from umaplens.runconfig import RunConfig
from umaplens.svgplot import line_chart


def embed_run(outdir: Path, name: str, quick: bool, **overrides) -> Path:
    cfg = RunConfig(name=name, outdir=str(outdir / name))
    cfg.optimizer.n_epochs = overrides.pop("n_epochs", 1000 if quick else 10_000)
    cfg.optimizer.loss_every = max(cfg.optimizer.n_epochs // 100, 1)
    for section, key, value in overrides.pop("fields", []):
        setattr(getattr(cfg, section), key, value)
    run_embed_pipeline(cfg)
    print(f"  {name}: done ({cfg.optimizer.n_epochs} epochs)")
    return Path(cfg.outdir)


def plot_loss_curves(run_dir: Path, out: Path) -> None:
    records = read_loss_csv(run_dir / "losses.csv")
    with_actual = [r for r in records if r.epoch > 0]
    epochs = np.array([r.epoch for r in with_actual])
    line_chart(
        epochs,
        [
            ("stated total", np.array([r.purported.total for r in with_actual])),
            ("effective total", np.array([r.effective.total for r in with_actual])),
            ("realized epoch total", np.array([r.actual.total for r in with_actual])),
        ],
        out,
        log_y=True,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", default="results/ring")
    parser.add_argument("--quick", action="store_true")
    args = parser.parse_args(argv)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    print("running embeddings ...")
    std = embed_run(outdir, "ring-standard", args.quick)
    embed_run(
        outdir,
        "ring-push-tail",
        args.quick,
        fields=[("optimizer", "push_tail", True)],
    )
    dense = embed_run(
        outdir,
        "ring-dense",
        args.quick,
        n_epochs=500,
        fields=[
            ("graph", "dense", True),
            ("dataset", "radius", 4.0),
            ("dataset", "half_width", 0.25),
        ],
    )

    print("loss table, histograms, sampler verification ...")
    rc = 0
    rc |= cli_main(
        ["loss-table", "--run", str(std), "--dense-run", str(dense),
         "-o", str(outdir / "loss_table.csv")]
    )
    rc |= cli_main(
        ["hist", "--run", str(std), "--subset", "positive", "--bins", "40",
         "-o", str(outdir / "hist_positive")]
    )
    rc |= cli_main(
        ["hist", "--run", str(std), "--subset", "all", "--bins", "40", "--log",
         "-o", str(outdir / "hist_all")]
    )
    rc |= cli_main(
        ["hist", "--run", str(std), "--degrees", "--bins", "30",
         "-o", str(outdir / "hist_degrees")]
    )
    rc |= cli_main(
        ["hist", "--run", str(std), "--compare", "invert", "--bins", "10",
         "-o", str(outdir / "hist_inverted_overlay")]
    )
    rc |= cli_main(
        ["pumap-verify", "--trials", "2000" if args.quick else "20000",
         "-o", str(outdir / "pumap_report.csv")]
    )
    plot_loss_curves(std, outdir / "loss_curves.svg")
    print(f"artifacts in {outdir}")
    return rc


if __name__ == "__main__":
    sys.exit(main())
