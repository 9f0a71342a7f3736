"""Artifacts a sweep depends on: channel statistics, datasets and trained models."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..estimate import ChannelStatistics, estimate_statistics, ls_estimate
from ..neural.dataset import TapDataset, build_dataset
from ..neural.mlp import ARCHITECTURES, MlpModel
from ..neural.train import train
from .config import ConfigError, ScenarioConfig
from .link import Stream, simulate_frame

__all__ = [
    "ESTIMATORS",
    "Resources",
    "artifact_path",
    "build_statistics",
    "train_model",
    "load_resources",
]

# command-line name -> ChannelEstimate method label
ESTIMATORS = {"ls": "LS", "lmmse": "LMMSE", "dnn1": "DNN1", "dnn2": "DNN2", "perfect": "Perfect"}


def artifact_path(out_dir, cfg: ScenarioConfig, kind: str) -> Path:
    names = {
        "dataset": f"{cfg.name}_dataset.bin",
        "stats": f"{cfg.name}_stats.json",
        "dnn1": f"{cfg.name}_dnn1.json",
        "dnn2": f"{cfg.name}_dnn2.json",
        "sweep": f"sweep_{cfg.name}.csv",
    }
    return Path(out_dir) / names[kind]


def _stats_rows(cfg: ScenarioConfig, frame_index: int):
    frame = simulate_frame(cfg, frame_index, Stream.STATS, draw_noise=False)
    _, pilots, _ = frame.rx_pilots(cfg, None)
    h_ls = ls_estimate(pilots, cfg.pattern)  # (a, b, s, n_pf)
    syms = cfg.pattern.pilot_symbols(cfg.n_symbols)
    n_fft = cfg.ofdm.n_fft
    true_rows, ls_rows = [], []
    for a in range(2):
        offset = int(cfg.pattern.pilot_subcarriers(n_fft, a)[0])
        # rotate comb a onto the comb that starts at subcarrier 0
        h = np.roll(frame.h_true[a][:, :, syms], -offset, axis=1)  # (b, N, s)
        true_rows.append(np.moveaxis(h, 1, -1).reshape(-1, n_fft))
        ls_rows.append(h_ls[a].reshape(-1, h_ls.shape[-1]))
    return np.concatenate(true_rows), np.concatenate(ls_rows)


def build_statistics(cfg: ScenarioConfig, n_frames: int | None = None, *, workers: int = 1) -> ChannelStatistics:
    """Sample R_hh and R_h,hls from noiseless frames, pooled over antenna pairs and pilot symbols."""
    n_frames = cfg.stats_frames if n_frames is None else n_frames
    if n_frames < 1:
        raise ValueError("need at least one frame for statistics")
    jobs = range(n_frames)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda f: _stats_rows(cfg, f), jobs))
    else:
        parts = [_stats_rows(cfg, f) for f in jobs]
    h_true = np.concatenate([p[0] for p in parts])
    h_ls = np.concatenate([p[1] for p in parts])
    comb = cfg.pattern.pilot_subcarriers(cfg.ofdm.n_fft, 0)
    return estimate_statistics(h_true, h_ls, comb, sigma_x2=abs(cfg.pilot_value) ** 2)


def train_model(cfg: ScenarioConfig, ds: TapDataset, arch: str, train_cfg=None):
    """Initialize ``arch`` from the shuffle seed and fit it; returns (model, report)."""
    if arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {arch!r}; expected one of {sorted(ARCHITECTURES)}")
    tag = sorted(ARCHITECTURES).index(arch)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seeds.shuffle, 5, tag]))
    model = MlpModel.initialize(arch, rng)
    model, report = train(model, ds, train_cfg or cfg.training)
    report["architecture"] = arch
    report["seed"] = cfg.seeds.shuffle
    model.report = report
    return model, report


@dataclass
class Resources:
    """Read-only inputs shared by every frame of a sweep."""

    stats: ChannelStatistics | None = None
    models: dict = field(default_factory=dict)


def load_resources(cfg: ScenarioConfig, estimators, artifact_dir) -> Resources:
    res = Resources()
    for name in estimators:
        if name not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {name!r}; expected one of {', '.join(ESTIMATORS)}")
        if name == "lmmse":
            path = artifact_path(artifact_dir, cfg, "stats")
            if not path.is_file():
                raise ConfigError(f"missing statistics file {path}; run the 'stats' command first")
            res.stats = ChannelStatistics.load(path)
        elif name in ("dnn1", "dnn2"):
            path = artifact_path(artifact_dir, cfg, name)
            if not path.is_file():
                raise ConfigError(f"missing model file {path}; run the 'train' command first")
            res.models[name] = MlpModel.load(path)
    return res


def load_dataset(cfg: ScenarioConfig, artifact_dir) -> TapDataset:
    path = artifact_path(artifact_dir, cfg, "dataset")
    if not path.is_file():
        raise ConfigError(f"missing dataset file {path}; run the 'gen-data' command first")
    return TapDataset.load(path)


def make_dataset(cfg: ScenarioConfig, n=None, *, workers=1) -> TapDataset:
    return build_dataset(cfg.dataset_realizations if n is None else n, cfg, workers=workers)
