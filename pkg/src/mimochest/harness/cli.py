"""Command-line entry point: gen-data, train, stats, sweep, plot-data."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..neural.mlp import ARCHITECTURES
from .config import ConfigError, Seeds, builtin_scenario, load_config
from .pipeline import ESTIMATORS, artifact_path, build_statistics, load_dataset, load_resources, make_dataset, train_model
from .sweep import read_results, run_sweep, write_results

log = logging.getLogger("mimochest")

FIGURES = {
    # figure -> (scenario, metric)
    "fig4_mse_scenario1": ("scenario1", "mse_mean"),
    "fig5_mse_scenario2": ("scenario2", "mse_mean"),
    "fig6_ber_scenario1": ("scenario1", "ber"),
    "fig7_ber_scenario2": ("scenario2", "ber"),
}


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _estimator_list(text):
    names = [s.strip().lower() for s in text.split(",") if s.strip()]
    bad = [n for n in names if n not in ESTIMATORS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown estimator(s) {bad}; choose from {','.join(ESTIMATORS)}")
    return tuple(names)


def _add_common(p, suppress: bool):
    def d(value):
        return argparse.SUPPRESS if suppress else value

    p.add_argument("--config", type=Path, default=d(None), help="scenario config file (overrides --scenario)")
    p.add_argument("--scenario", type=int, choices=(1, 2), default=d(1), help="built-in scenario")
    p.add_argument("--seed", type=_u64, default=d(None), help="master seed for every random stream")
    p.add_argument("--out", type=Path, default=d(Path("out")), help="artifact and output directory")
    p.add_argument("--estimators", type=_estimator_list, default=d(None), help="comma list of " + ",".join(ESTIMATORS))
    p.add_argument("--frames", type=_positive, default=d(None), help="Monte-Carlo frames per SNR point")
    p.add_argument("--workers", type=_positive, default=d(1), help="worker threads")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimochest", description=__doc__)
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_common(p, suppress=True)
        return p

    p = cmd("gen-data", "build and save a training dataset")
    p.add_argument("--realizations", type=_positive, default=None)
    p = cmd("train", "fit DNN models on the saved dataset")
    p.add_argument("--arch", default="dnn1,dnn2", help="comma list of " + ",".join(ARCHITECTURES))
    p.add_argument("--max-epochs", type=_positive, default=None)
    p = cmd("stats", "estimate and save channel statistics for LMMSE")
    p.add_argument("--stats-frames", type=_positive, default=None)
    cmd("sweep", "run the MSE/BER sweep and write a results CSV")
    cmd("plot-data", "reshape sweep results into one CSV per figure")
    return parser


def _scenario(args):
    cfg = load_config(args.config) if args.config is not None else builtin_scenario(args.scenario)
    if args.seed is not None:
        seeds = Seeds.from_master(args.seed)
        cfg = cfg.with_overrides(seeds=seeds, training=replace(cfg.training, seed=args.seed))
    if args.frames is not None:
        cfg = cfg.with_overrides(n_frames=args.frames)
    return cfg


def _gen_data(args, cfg):
    ds = make_dataset(cfg, args.realizations, workers=args.workers)
    path = artifact_path(args.out, cfg, "dataset")
    ds.save(path)
    print(f"wrote {len(ds)} rows ({ds.n_train}/{ds.n_val}/{ds.n_test}) to {path}")


def _train(args, cfg):
    ds = load_dataset(cfg, args.out)
    train_cfg = cfg.training
    if args.max_epochs is not None:
        train_cfg = replace(train_cfg, max_epochs=args.max_epochs)
    for arch in [a.strip() for a in args.arch.split(",") if a.strip()]:
        model, rep = train_model(cfg, ds, arch, train_cfg)
        path = artifact_path(args.out, cfg, arch)
        model.save(path)
        print(f"{arch}: {rep['epochs']} epochs ({rep['stop_reason']}), test loss {rep['test_loss']:.4e} -> {path}")


def _stats(args, cfg):
    stats = build_statistics(cfg, args.stats_frames, workers=args.workers)
    path = artifact_path(args.out, cfg, "stats")
    stats.save(path)
    print(f"wrote statistics from {stats.sample_count} realizations to {path}")


def _sweep(args, cfg):
    estimators = args.estimators or cfg.estimators
    res = load_resources(cfg, estimators, args.out)
    result = run_sweep(cfg, estimators, res, workers=args.workers)
    path = write_results(result, artifact_path(args.out, cfg, "sweep"))
    print(f"wrote {len(result.rows)} rows to {path}")


def _plot_data(args, cfg):
    loaded = {}
    for scenario in sorted({s for s, _ in FIGURES.values()}):
        path = Path(args.out) / f"sweep_{scenario}.csv"
        if path.is_file():
            loaded[scenario] = read_results(path)
    if not loaded:
        raise ConfigError(f"no sweep results in {args.out}; run the 'sweep' command first")
    for fig, (scenario, metric) in FIGURES.items():
        result = loaded.get(scenario)
        if result is None:
            log.warning("skipping %s: no results for %s", fig, scenario)
            continue
        names = list(dict.fromkeys(r.estimator for r in result.rows))
        snrs = sorted({r.snr_db for r in result.rows})
        path = Path(args.out) / f"{fig}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["snr_db"] + names)
            for snr in snrs:
                w.writerow([f"{snr:.17e}"] + [f"{getattr(result.row(n, snr), metric):.17e}" for n in names])
        print(f"wrote {path}")


COMMANDS = {"gen-data": _gen_data, "train": _train, "stats": _stats, "sweep": _sweep, "plot-data": _plot_data}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = _scenario(args)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
