"""Command-line pipelines: generate data, embed, and reproduce diagnostics.

Subcommands map one-to-one onto the experiment artifacts:

  generate      write a toy dataset CSV
  embed         build the similarity graph, run the optimizer, write
                embedding/loss CSVs and a before/after scatter SVG
  loss-table    evaluate the stated loss over a grid of input and
                embedding similarity choices for completed runs
  hist          similarity or degree histograms of a completed run
  pumap-verify  Monte Carlo check of the batch sampler expectations

Exit codes: 0 success, 1 usage error, 2 numerical failure (diverged
embedding), 3 verification-gate failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import losses, pumap, svgplot
from .datagen import gen_ring, gen_uniform_square, load_csv, save_csv
from .kernel import Kernel
from .optimizer import DivergedError, init_embedding, optimize
from .runconfig import RunConfig
from .simgraph import build_knn_graph, degree_histogram, load_graph, perturb, save_graph

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_GATE = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fmt(v: float) -> str:
    return "%.17g" % v


# ---------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    if args.ring == args.square:
        print("generate: choose exactly one of --ring / --square", file=sys.stderr)
        return EXIT_USAGE
    if args.ring:
        ds = gen_ring(args.n, args.radius, args.half_width, args.seed)
    else:
        ds = gen_uniform_square(args.n, args.seed)
    out = Path(args.output)
    save_csv(ds, out)
    print(f"wrote {ds.n} x {ds.dim} dataset to {out}")
    return EXIT_OK


# ------------------------------------------------------------------- embed


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_toml(args.config) if args.config else RunConfig()
    ds = cfg.dataset
    if args.dataset_csv:
        ds = replace(ds, kind="csv", path=args.dataset_csv)
    for name, val in (
        ("n", args.n),
        ("radius", args.radius),
        ("half_width", args.half_width),
        ("seed", args.data_seed),
    ):
        if val is not None:
            ds = replace(ds, **{name: val})
    gr = cfg.graph
    for name, val in (
        ("k", args.k),
        ("metric", args.metric),
        ("dense", True if args.dense else None),
        ("perturb", args.perturb),
        ("perturb_seed", args.perturb_seed),
        ("filter_epochs", args.filter_epochs),
    ):
        if val is not None:
            gr = replace(gr, **{name: val})
    ke = cfg.kernel
    for name, val in (
        ("min_dist", args.min_dist),
        ("spread", args.spread),
        ("a", args.kernel_a),
        ("b", args.kernel_b),
        ("eps_rep", args.eps_rep),
        ("grad_clip", args.grad_clip),
    ):
        if val is not None:
            ke = replace(ke, **{name: val})
    op = cfg.optimizer
    for name, val in (
        ("m", args.m),
        ("n_epochs", args.n_epochs),
        ("alpha0", args.alpha0),
        ("lr_decay", False if args.no_lr_decay else None),
        ("push_tail", True if args.push_tail else None),
        ("seed", args.seed),
        ("init", args.init),
        ("edge_order", args.edge_order),
        ("loss_every", args.loss_every),
        ("snapshot_every", args.snapshot_every),
    ):
        if val is not None:
            op = replace(op, **{name: val})
    return RunConfig(
        name=args.name or cfg.name,
        outdir=args.outdir or cfg.outdir,
        dataset=ds,
        graph=gr,
        kernel=ke,
        optimizer=op,
    )


def write_embedding_csv(embedding: np.ndarray, path: Path) -> None:
    d = embedding.shape[1]
    with path.open("w", newline="") as fh:
        fh.write("id," + ",".join(f"e{c + 1}" for c in range(d)) + "\n")
        for i, row in enumerate(embedding):
            fh.write(f"{i}," + ",".join(_fmt(v) for v in row) + "\n")


def read_embedding_csv(path: Path) -> np.ndarray:
    rows = []
    with path.open() as fh:
        fh.readline()  # header
        for line in fh:
            rows.append([float(c) for c in line.strip().split(",")[1:]])
    return np.array(rows, dtype=np.float64)


def run_embed_pipeline(cfg: RunConfig) -> Path:
    """Execute the embed pipeline and return the output directory."""
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stage = "config"
    try:
        cfg.write_toml(outdir / "config.toml")
        stage = "dataset"
        dataset = cfg.dataset.build()
        save_csv(dataset, outdir / "dataset.csv")
        stage = "kernel"
        kernel = cfg.kernel.build()
        stage = "graph"
        graph = cfg.graph.build(dataset, kernel)
        save_graph(graph, outdir / "graph.edges.csv")
        stage = "optimize"
        opt = cfg.optimizer.build()
        initial = init_embedding(dataset, opt)
        write_embedding_csv(initial, outdir / "embedding_initial.csv")
        every = cfg.optimizer.snapshot_every

        def on_epoch(epoch: int, emb: np.ndarray) -> None:
            if every and epoch % every == 0:
                write_embedding_csv(emb, outdir / f"snapshot_{epoch:06d}.csv")

        final, records = optimize(graph, dataset, kernel, opt, on_epoch=on_epoch)
        write_embedding_csv(final, outdir / "embedding.csv")
        losses.write_loss_csv(records, outdir / "losses.csv")
        svgplot.scatter_panels(
            [("initial", initial), (f"epoch {opt.n_epochs}", final)],
            outdir / "scatter.svg",
        )
    except DivergedError:
        raise
    except Exception as exc:
        raise RuntimeError(f"embed pipeline failed in stage '{stage}': {exc}") from exc
    return outdir


def cmd_embed(args) -> int:
    cfg = _resolve_config(args)
    try:
        outdir = run_embed_pipeline(cfg)
    except DivergedError as exc:
        print(f"embed: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"run complete: {outdir}")
    return EXIT_OK


# -------------------------------------------------------------- loss-table


def _load_run(run_dir: Path):
    dataset = load_csv(run_dir / "dataset.csv")
    graph = load_graph(run_dir / "graph.edges.csv")
    final = read_embedding_csv(run_dir / "embedding.csv")
    cfg = RunConfig.from_toml(run_dir / "config.toml")
    kernel = cfg.kernel.build()
    return dataset, graph, final, kernel


LOSS_TABLE_COLUMNS = ("nu_eq_mu", "nu_diverged", "nu_phi_final", "nu_phi_data")


def loss_table_rows(runs: list[tuple[str, Path]]) -> list[tuple[str, list[float]]]:
    """Purported-loss totals over {run input similarities} x {nu choices}."""
    rows = []
    for label, run_dir in runs:
        dataset, graph, final, kernel = _load_run(run_dir)
        mu = graph.to_dense()
        nu_final = losses.embedding_similarities(final, kernel)
        nu_data = losses.embedding_similarities(dataset.points, kernel)
        diverged = np.zeros_like(mu)  # off-diagonal similarities all zero
        vals = [
            losses.purported_loss_from_similarities(mu, nu).total
            for nu in (mu, diverged, nu_final, nu_data)
        ]
        rows.append((label, vals))
    return rows


def cmd_loss_table(args) -> int:
    runs = [("standard", Path(args.run))]
    if args.dense_run:
        runs.append(("dense", Path(args.dense_run)))
    for _, rd in runs:
        if not (rd / "embedding.csv").exists():
            print(f"loss-table: no completed run at {rd}", file=sys.stderr)
            return EXIT_USAGE
    rows = loss_table_rows(runs)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        fh.write("input_similarities," + ",".join(LOSS_TABLE_COLUMNS) + "\n")
        for label, vals in rows:
            fh.write(label + "," + ",".join(_fmt(v) for v in vals) + "\n")
    print(f"wrote loss table to {out}")
    return EXIT_OK


# -------------------------------------------------------------------- hist


def cmd_hist(args) -> int:
    run_dir = Path(args.run)
    dataset, graph, final, kernel = _load_run(run_dir)
    cfg = RunConfig.from_toml(run_dir / "config.toml")
    m = cfg.optimizer.m
    out_prefix = Path(args.output_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)

    if args.degrees:
        hist = degree_histogram(graph, bins=args.bins, reference=args.reference)
        path = out_prefix.with_suffix(".csv")
        with path.open("w", newline="") as fh:
            fh.write(f"# min_degree={_fmt(hist.min_degree)} "
                     f"{hist.reference_label}={_fmt(hist.reference)}\n")
            fh.write("bin_lo,bin_hi,count\n")
            for lo, hi, c in zip(hist.bin_lo, hist.bin_hi, hist.counts):
                fh.write(f"{_fmt(lo)},{_fmt(hi)},{c}\n")
        svgplot.multi_histogram(
            hist.bin_lo,
            hist.bin_hi,
            [("degree", hist.counts)],
            out_prefix.with_suffix(".svg"),
            reference=hist.reference,
        )
        print(f"wrote degree histogram to {path}")
        return EXIT_OK

    subset = {"positive": "positive_mu", "zero": "zero_mu", "all": "all"}[args.subset]
    targets = losses.target_similarities(graph, m)
    if args.compare:
        aliases = {"binarized": "binarize", "inverted": "invert", "permuted": "permute"}
        args.compare = aliases.get(args.compare, args.compare)
        perturbed = perturb(
            graph, args.compare, seed=cfg.graph.perturb_seed,
            n_epochs=cfg.graph.filter_epochs,
        )
        targets_b = losses.target_similarities(perturbed, m)
        edges = np.linspace(0.0, 1.0, args.bins + 1)
        iu = np.triu_indices(graph.n, k=1)
        mu_u = graph.to_dense()[iu]
        mu_b = perturbed.to_dense()[iu]
        h_orig = np.histogram(targets[iu][mu_u > 0], bins=edges)[0]
        h_pert = np.histogram(targets_b[iu][mu_b > 0], bins=edges)[0]
        path = out_prefix.with_suffix(".csv")
        with path.open("w", newline="") as fh:
            fh.write(f"bin_lo,bin_hi,count_target_original,count_target_{args.compare}\n")
            for b in range(args.bins):
                fh.write(f"{_fmt(edges[b])},{_fmt(edges[b + 1])},{h_orig[b]},{h_pert[b]}\n")
        svgplot.multi_histogram(
            edges[:-1], edges[1:],
            [("target (original)", h_orig), (f"target ({args.compare})", h_pert)],
            out_prefix.with_suffix(".svg"),
        )
        print(f"wrote comparison histogram to {path}")
        return EXIT_OK

    hists = losses.similarity_histograms(
        graph, targets, final, kernel, bins=args.bins, subset=subset
    )
    path = out_prefix.with_suffix(".csv")
    with path.open("w", newline="") as fh:
        fh.write("bin_lo,bin_hi,count_mu,count_target,count_nu\n")
        for b in range(args.bins):
            fh.write(
                f"{_fmt(hists.bin_lo[b])},{_fmt(hists.bin_hi[b])},"
                f"{hists.count_mu[b]},{hists.count_target[b]},{hists.count_nu[b]}\n"
            )
    svgplot.multi_histogram(
        hists.bin_lo,
        hists.bin_hi,
        [
            ("input mu", hists.count_mu),
            ("target", hists.count_target),
            ("embedding nu", hists.count_nu),
        ],
        out_prefix.with_suffix(".svg"),
        log_scale=args.log,
    )
    print(f"wrote similarity histograms to {path}")
    return EXIT_OK


# ------------------------------------------------------------ pumap-verify


def cmd_pumap_verify(args) -> int:
    dataset = gen_ring(args.n, seed=args.data_seed)
    kernel = Kernel.from_min_dist()
    graph = build_knn_graph(dataset, args.k)
    embedding = dataset.points.copy()
    config = pumap.BatchSimConfig(
        batch_size=args.batch_size, m=args.m, trials=args.trials, seed=args.seed
    )
    est = pumap.mc_expectations(graph, config)
    cf_p, cf_n = pumap.pair_count_expectations(graph, config.batch_size, config.m)
    mu = graph.to_dense()

    failures = 0
    insufficient = 0
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        fh.write("i,j,mu,cf_EP,mc_EP,se_EP,cf_EN,mc_EN,se_EN\n")
        for i in range(graph.n):
            for j in range(graph.n):
                for cf, mc, se in (
                    (cf_p[i, j], est.mean_p[i, j], est.se_p[i, j]),
                    (cf_n[i, j], est.mean_n[i, j], est.se_n[i, j]),
                ):
                    verdict = _gate(cf, mc, se, config.trials)
                    if verdict == "fail":
                        failures += 1
                    elif verdict == "insufficient":
                        insufficient += 1
                fh.write(
                    f"{i},{j},{_fmt(mu[i, j])},"
                    f"{_fmt(cf_p[i, j])},{_fmt(est.mean_p[i, j])},{_fmt(est.se_p[i, j])},"
                    f"{_fmt(cf_n[i, j])},{_fmt(est.mean_n[i, j])},{_fmt(est.se_n[i, j])}\n"
                )
        cf_loss = pumap.pumap_effective_loss(graph, embedding, kernel, config)
        mc_loss, se_loss = pumap.mc_batch_loss(graph, embedding, kernel, config)
        verdict = _gate(cf_loss, mc_loss, se_loss, config.trials)
        if verdict == "fail":
            failures += 1
        elif verdict == "insufficient":
            insufficient += 1
        fh.write(
            f"# batch_loss cf={_fmt(cf_loss)} mc={_fmt(mc_loss)} se={_fmt(se_loss)} "
            f"verdict={verdict}\n"
        )
    if insufficient:
        print(f"pumap-verify: {insufficient} cells with insufficient precision "
              f"(raise --trials)")
    if failures:
        print(f"pumap-verify: {failures} estimates outside 4 standard errors",
              file=sys.stderr)
        return EXIT_GATE
    print(f"pumap-verify: all estimates within 4 standard errors; report at {out}")
    return EXIT_OK


def _gate(cf: float, mc: float, se: float, trials: int) -> str:
    """Pass/fail/insufficient verdict for one Monte Carlo estimate."""
    if se > 0:
        return "pass" if abs(mc - cf) <= 4.0 * se else "fail"
    if cf * trials <= 10.0:
        return "insufficient" if mc != cf else "pass"
    return "pass" if mc == cf else "fail"


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="umaplens", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a toy dataset CSV")
    p.add_argument("--ring", action="store_true")
    p.add_argument("--square", action="store_true")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--radius", type=float, default=20.0)
    p.add_argument("--half-width", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("-o", "--output", default="dataset.csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("embed", help="graph construction + optimization run")
    p.add_argument("--config", help="TOML run config; flags override")
    p.add_argument("--name")
    p.add_argument("--outdir")
    p.add_argument("--dataset-csv")
    p.add_argument("--n", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--half-width", type=float)
    p.add_argument("--data-seed", type=int)
    p.add_argument("-k", type=int)
    p.add_argument("--metric", choices=["euclidean", "cosine"])
    p.add_argument("--dense", action="store_true")
    p.add_argument("--perturb",
                   choices=["none", "binarize", "invert", "permute", "uniform_random"])
    p.add_argument("--perturb-seed", type=int)
    p.add_argument("--filter-epochs", type=int)
    p.add_argument("--min-dist", type=float)
    p.add_argument("--spread", type=float)
    p.add_argument("--kernel-a", type=float)
    p.add_argument("--kernel-b", type=float)
    p.add_argument("--eps-rep", type=float)
    p.add_argument("--grad-clip", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--n-epochs", type=int)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--no-lr-decay", action="store_true")
    p.add_argument("--push-tail", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--init", choices=["data", "pca", "random"])
    p.add_argument("--edge-order", choices=["fixed", "random"])
    p.add_argument("--loss-every", type=int)
    p.add_argument("--snapshot-every", type=int)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("loss-table", help="stated-loss grid over completed runs")
    p.add_argument("--run", required=True, help="standard-graph run directory")
    p.add_argument("--dense-run", help="dense-similarity run directory")
    p.add_argument("-o", "--output", default="loss_table.csv")
    p.set_defaults(func=cmd_loss_table)

    p = sub.add_parser("hist", help="similarity/degree histograms of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--subset", choices=["all", "positive", "zero"], default="positive")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--log", action="store_true", help="log-scale counts")
    p.add_argument("--degrees", action="store_true", help="degree histogram instead")
    p.add_argument("--reference", choices=["umap", "binarized"], default="umap")
    p.add_argument("--compare",
                   choices=["binarize", "binarized", "invert", "inverted",
                            "permute", "permuted", "uniform_random"],
                   help="overlay target similarities of a perturbed graph")
    p.add_argument("-o", "--output-prefix", default="hist")
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("pumap-verify", help="batch sampler Monte Carlo checks")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("-k", type=int, default=4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--trials", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=3)
    p.add_argument("-o", "--output", default="pumap_report.csv")
    p.set_defaults(func=cmd_pumap_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergedError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
