"""Monte-Carlo MSE/BER sweeps over SNR with paired frames, and the results CSV."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..estimate import ChannelEstimate, equalize, interpolate, interpolate_frequency, lmmse_estimate, ls_estimate, mse
from ..neural.dataset import dnn_estimate
from .config import ConfigError, ScenarioConfig
from .link import Frame, Stream, detected_bits, simulate_frame
from .pipeline import ESTIMATORS, Resources

__all__ = ["ResultRow", "SweepResult", "estimate_channel", "run_frame", "run_sweep", "write_results", "read_results"]

HEADER = ["scenario", "estimator", "snr_db", "mse_mean", "mse_stderr", "ber", "bit_count", "frames", "seed_fingerprint"]


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    estimator: str
    snr_db: float
    mse_mean: float
    mse_stderr: float
    ber: float
    bit_count: int
    frames: int
    seed_fingerprint: str


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict, compare=False)

    def row(self, estimator: str, snr_db: float) -> ResultRow:
        for r in self.rows:
            if r.estimator == estimator and r.snr_db == snr_db:
                return r
        raise KeyError((estimator, snr_db))

    def series(self, estimator: str, column: str) -> np.ndarray:
        return np.array([getattr(r, column) for r in self.rows if r.estimator == estimator])


def estimate_channel(name, frame: Frame, cfg: ScenarioConfig, pilots, sigma2, res: Resources) -> ChannelEstimate:
    pattern, n_fft, n_sym = cfg.pattern, cfg.ofdm.n_fft, cfg.n_symbols
    if name == "perfect":
        return ChannelEstimate(frame.h_true, "Perfect")
    h_ls = ls_estimate(pilots, pattern)
    if name == "ls":
        return interpolate(h_ls, pattern, n_fft, n_sym)
    if name == "lmmse":
        if res.stats is None:
            raise ConfigError("LMMSE needs channel statistics")
        return lmmse_estimate(h_ls, res.stats, sigma2, pattern, n_sym)
    if name in ("dnn1", "dnn2"):
        model = res.models.get(name)
        if model is None:
            raise ConfigError(f"{name} needs a trained model")
        freq = interpolate_frequency(h_ls, pattern, n_fft)
        return dnn_estimate(model, freq, cfg.pdp, pattern, n_sym, ESTIMATORS[name])
    raise ConfigError(f"unknown estimator {name!r}")


def _metrics(frame: Frame, cfg, rx, h_hat: ChannelEstimate):
    symbols = equalize(rx, h_hat, frame.k_idx, frame.t_idx)
    errors = int(np.count_nonzero(detected_bits(symbols, cfg) != frame.bits))
    return mse(h_hat, frame.h_true), errors, frame.bits.size


def _frame_all(cfg, frame_index, snr_grid, estimators, res, stream):
    """(n_est, n_snr, 3) array of (mse, bit errors, bits) for one frame."""
    frame = simulate_frame(cfg, frame_index, stream)
    out = np.empty((len(estimators), len(snr_grid), 3))
    for j, snr in enumerate(snr_grid):
        rx, pilots, sigma2 = frame.rx_pilots(cfg, snr)
        for i, name in enumerate(estimators):
            try:
                h_hat = estimate_channel(name, frame, cfg, pilots, sigma2, res)
            except ConfigError:
                raise
            except Exception as exc:
                raise RuntimeError(f"frame {frame_index}, {name} at {snr} dB: {exc}") from exc
            out[i, j] = _metrics(frame, cfg, rx, h_hat)
    return out


def run_frame(cfg: ScenarioConfig, snr_db, estimator: str, frame_index: int = 0, res: Resources | None = None,
              stream: int = Stream.SWEEP):
    """One slot end to end: returns (frame MSE, bit errors, bit count).

    ``snr_db=None`` runs without noise.
    """
    frame = simulate_frame(cfg, frame_index, stream, draw_noise=snr_db is not None)
    rx, pilots, sigma2 = frame.rx_pilots(cfg, snr_db)
    h_hat = estimate_channel(estimator, frame, cfg, pilots, sigma2, res or Resources())
    m, e, b = _metrics(frame, cfg, rx, h_hat)
    return m, e, b


def run_sweep(cfg: ScenarioConfig, estimators=None, res: Resources | None = None, *, workers: int = 1) -> SweepResult:
    """All frames x SNR points x estimators, reduced in frame order."""
    estimators = tuple(cfg.estimators if estimators is None else estimators)
    for name in estimators:
        if name not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {name!r}; expected one of {', '.join(ESTIMATORS)}")
    res = res or Resources()
    snr_grid = cfg.snr_grid
    t0 = time.perf_counter()

    def job(f):
        return _frame_all(cfg, f, snr_grid, estimators, res, Stream.SWEEP)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            per_frame = list(pool.map(job, range(cfg.n_frames)))
    else:
        per_frame = [job(f) for f in range(cfg.n_frames)]
    stack = np.stack(per_frame) if per_frame else np.zeros((0, len(estimators), len(snr_grid), 3))

    fp = cfg.fingerprint()
    rows = []
    n = cfg.n_frames
    for i, name in enumerate(estimators):
        for j, snr in enumerate(snr_grid):
            m = stack[:, i, j, 0]
            errors = int(stack[:, i, j, 1].sum())
            bits = int(stack[:, i, j, 2].sum())
            stderr = float(np.std(m, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            rows.append(ResultRow(cfg.name, name, float(snr), float(np.mean(m)), stderr,
                                  errors / bits, bits, n, fp))
    return SweepResult(rows, {"wall_seconds": time.perf_counter() - t0, "workers": workers})


def write_results(result: SweepResult, path):
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADER)
            for r in result.rows:
                w.writerow([
                    r.scenario,
                    r.estimator,
                    f"{r.snr_db:.17e}",
                    f"{r.mse_mean:.17e}",
                    f"{r.mse_stderr:.17e}",
                    f"{r.ber:.17e}",
                    r.bit_count,
                    r.frames,
                    r.seed_fingerprint,
                ])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror}") from exc
    return path


def read_results(path) -> SweepResult:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [
            ResultRow(s, e, float(snr), float(m), float(se), float(ber), int(bc), int(fr), fp)
            for s, e, snr, m, se, ber, bc, fr, fp in reader
        ]
    return SweepResult(rows)
