"""OFDM modem: unitary radix-2 DFT, cyclic prefix handling, grid <-> sample stream."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import ResourceGrid

__all__ = [
    "OfdmParams",
    "TimeSignal",
    "fft_radix2",
    "dft",
    "idft",
    "add_cp",
    "remove_cp",
    "ofdm_modulate",
    "ofdm_demodulate",
]


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class OfdmParams:
    n_fft: int = 512
    n_guard: int = 64
    sample_rate: float = 15e3 * 512

    def __post_init__(self):
        if not _is_pow2(self.n_fft):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0 <= self.n_guard < self.n_fft:
            raise ValueError(f"cyclic prefix {self.n_guard} must lie in [0, n_fft)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def block_len(self) -> int:
        return self.n_fft + self.n_guard


@dataclass
class TimeSignal:
    samples: np.ndarray  # (n_antennas, n_samples)
    t0: int = 0

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=complex))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@lru_cache(maxsize=None)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(size // 2) / size)


def fft_radix2(x) -> np.ndarray:
    """Unscaled forward DFT along the last axis, iterative decimation in time.

    Works on any leading batch shape; the transform length must be a power of two.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"radix-2 transform needs a power-of-two length, got {n}")
    batch = x.shape[:-1]
    y = x[..., _bitrev(n)].reshape(-1, n)
    size = 2
    while size <= n:
        half = size // 2
        blocks = y.reshape(y.shape[0], n // size, size)
        even = blocks[:, :, :half]
        odd = blocks[:, :, half:] * _twiddles(size)
        y = np.concatenate((even + odd, even - odd), axis=2).reshape(-1, n)
        size *= 2
    return y.reshape(batch + (n,))


def _check_len(x, n_fft):
    x = np.asarray(x, dtype=complex)
    if n_fft is not None and x.shape[-1] != n_fft:
        raise ValueError(f"expected length {n_fft}, got {x.shape[-1]}")
    return x


def dft(x, n_fft: int | None = None) -> np.ndarray:
    """Unitary DFT (1/sqrt(N) scaling) along the last axis."""
    x = _check_len(x, n_fft)
    return fft_radix2(x) / np.sqrt(x.shape[-1])


def idft(x, n_fft: int | None = None) -> np.ndarray:
    """Unitary inverse DFT along the last axis; ``dft(idft(x)) == x``."""
    x = _check_len(x, n_fft)
    return np.conj(fft_radix2(np.conj(x))) / np.sqrt(x.shape[-1])


def add_cp(symbol, n_guard: int) -> np.ndarray:
    symbol = np.asarray(symbol)
    n = symbol.shape[-1]
    if not 0 <= n_guard < n:
        raise ValueError(f"cyclic prefix {n_guard} must lie in [0, {n})")
    if n_guard == 0:
        return symbol.copy()
    return np.concatenate((symbol[..., n - n_guard :], symbol), axis=-1)


def remove_cp(block, n_guard: int, n_fft: int | None = None) -> np.ndarray:
    block = np.asarray(block)
    if n_fft is not None and block.shape[-1] != n_fft + n_guard:
        raise ValueError(f"expected block of {n_fft + n_guard} samples, got {block.shape[-1]}")
    if n_guard < 0 or n_guard >= block.shape[-1]:
        raise ValueError(f"cannot strip {n_guard} samples from a {block.shape[-1]}-sample block")
    return block[..., n_guard:].copy()


def ofdm_modulate(grid: ResourceGrid, p: OfdmParams, t0: int = 0) -> TimeSignal:
    if grid.n_fft != p.n_fft:
        raise ValueError(f"grid has {grid.n_fft} subcarriers, modem expects {p.n_fft}")
    # (2, n_symbols, n_fft)
    freq = grid.cells.transpose(2, 1, 0)
    blocks = add_cp(idft(freq), p.n_guard)
    return TimeSignal(blocks.reshape(freq.shape[0], -1), t0=t0)


def ofdm_demodulate(sig: TimeSignal, p: OfdmParams, n_symbols: int) -> ResourceGrid:
    """Strip the prefix and transform each OFDM symbol; returns received cells."""
    expected = n_symbols * p.block_len
    if sig.n_samples != expected:
        raise ValueError(
            f"signal has {sig.n_samples} samples, {n_symbols} symbols need {expected}"
        )
    blocks = sig.samples.reshape(sig.samples.shape[0], n_symbols, p.block_len)
    freq = dft(remove_cp(blocks, p.n_guard))
    return ResourceGrid(freq.transpose(2, 1, 0))
