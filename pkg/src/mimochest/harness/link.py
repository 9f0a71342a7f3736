"""One slot through transmitter, channel and receiver front end.

Every random draw of a frame comes from its own generator keyed by
(seed, component, stream, frame index), so any frame can be rebuilt in
isolation and in any order.  The noise is drawn once at unit variance and
scaled per SNR point, which keeps all SNRs and estimators on paired draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import apply_channel, frequency_response, generate_taps
from ..grid import (
    QAM16,
    QPSK,
    ResourceGrid,
    data_order,
    demodulate,
    extract_pilots,
    insert_pilots,
    layer_demap,
    layer_map,
    modulate,
)
from ..phy import TimeSignal, ofdm_demodulate, ofdm_modulate

__all__ = ["Stream", "frame_rng", "Frame", "simulate_frame", "constellation_for", "detected_bits"]


class Stream:
    SWEEP = 0
    DATASET = 1
    STATS = 2


_COMPONENT = {"channel": 0, "data": 1, "noise": 2, "snr": 3, "shuffle": 4}
_SEED_FIELD = {"channel": "channel", "data": "data", "noise": "noise", "snr": "noise", "shuffle": "shuffle"}


def frame_rng(seeds, component: str, stream: int, frame_index: int) -> np.random.Generator:
    seed = getattr(seeds, _SEED_FIELD[component])
    return np.random.default_rng(np.random.SeedSequence([seed, _COMPONENT[component], stream, frame_index]))


def constellation_for(name: str):
    return {"QPSK": QPSK, "QAM16": QAM16}[name]


@dataclass
class Frame:
    """A transmitted slot and its noiseless reception."""

    bits: np.ndarray  # flat, in layer-demapped order
    tx_grid: ResourceGrid
    rx_clean: np.ndarray  # (2, n_samples)
    unit_noise: np.ndarray  # (2, n_samples), unit variance per sample
    signal_power: float
    h_true: np.ndarray  # (2, 2, n_fft, n_symbols)
    taps_true: np.ndarray  # (2, 2, L, n_symbols), FFT-window averages
    k_idx: np.ndarray
    t_idx: np.ndarray

    def noise_variance(self, snr_db: float) -> float:
        return self.signal_power / 10.0 ** (snr_db / 10.0)

    def received(self, cfg, snr_db: float | None):
        """Received grid at ``snr_db`` (None means noiseless) and the noise variance used."""
        if snr_db is None:
            sigma2, samples = 0.0, self.rx_clean
        else:
            sigma2 = self.noise_variance(snr_db)
            samples = self.rx_clean + np.sqrt(sigma2) * self.unit_noise
        return ofdm_demodulate(TimeSignal(samples), cfg.ofdm, cfg.n_symbols), sigma2

    def rx_pilots(self, cfg, snr_db):
        grid, sigma2 = self.received(cfg, snr_db)
        return grid, extract_pilots(grid, cfg.pattern), sigma2


def simulate_frame(cfg, frame_index: int, stream: int = Stream.SWEEP, *, draw_noise: bool = True) -> Frame:
    ofdm, pattern = cfg.ofdm, cfg.pattern
    const = constellation_for(cfg.modulation)
    k_idx, t_idx = data_order(pattern, ofdm.n_fft, cfg.n_symbols)
    n_cells = k_idx.size
    bits = frame_rng(cfg.seeds, "data", stream, frame_index).integers(
        0, 2, size=2 * n_cells * const.bits_per_symbol, dtype=np.int8
    )
    grid = insert_pilots(layer_map(modulate(bits, const)), pattern, ofdm.n_fft, cfg.n_symbols)
    tx = ofdm_modulate(grid, ofdm)

    n = tx.n_samples
    ch = generate_taps(cfg.pdp, cfg.doppler, n, ofdm.sample_rate, frame_rng(cfg.seeds, "channel", stream, frame_index))
    rx = apply_channel(tx, ch).samples
    power = float(np.mean(np.abs(rx) ** 2))
    if draw_noise:
        g = frame_rng(cfg.seeds, "noise", stream, frame_index)
        noise = (g.standard_normal(rx.shape) + 1j * g.standard_normal(rx.shape)) / np.sqrt(2.0)
    else:
        noise = np.zeros_like(rx)

    # channel seen by each symbol: taps averaged over its FFT window (CP excluded)
    blk = ofdm.block_len
    windows = ch.taps.reshape(ch.taps.shape[:3] + (cfg.n_symbols, blk))[..., ofdm.n_guard :]
    taps_true = windows.mean(axis=-1)  # (2, 2, L, n_sym)
    h = frequency_response(np.moveaxis(taps_true, 2, -1), cfg.pdp.delays, ofdm.n_fft)  # (2,2,n_sym,N)
    return Frame(
        bits=bits,
        tx_grid=grid,
        rx_clean=rx,
        unit_noise=noise,
        signal_power=power,
        h_true=np.swapaxes(h, -1, -2),
        taps_true=taps_true,
        k_idx=k_idx,
        t_idx=t_idx,
    )


def detected_bits(symbols, cfg) -> np.ndarray:
    """(2, n_cells) equalized symbols back to the flat transmitted bit order."""
    return demodulate(layer_demap(symbols[0], symbols[1]), constellation_for(cfg.modulation))
