"""Time-variant 2x2 tapped-delay-line channel built from sums of Doppler sinusoids.

Each tap gain of each (tx, rx) link is

    g(n) = rho / sqrt(M) * sum_l exp(j * (2*pi*f_l*n/fs + theta_l)),
    f_l = f_dmax * sin(2*pi*u_l),  theta_l = 2*pi*u_l,  u_l ~ U[0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .phy import TimeSignal

__all__ = [
    "PowerDelayProfile",
    "DopplerConfig",
    "ChannelRealization",
    "DEFAULT_PDP",
    "generate_taps",
    "apply_channel",
    "add_awgn",
    "snr_to_noise_variance",
    "frequency_response",
]

N_TX = 2
N_RX = 2


@dataclass(frozen=True)
class PowerDelayProfile:
    delays: tuple  # integer sample delays
    powers: tuple  # linear, summing to one
    name: str = "custom"

    def __post_init__(self):
        delays = tuple(int(d) for d in self.delays)
        powers = tuple(float(p) for p in self.powers)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "powers", powers)
        if not delays:
            raise ValueError("power delay profile has no taps")
        if len(delays) != len(powers):
            raise ValueError(f"{len(delays)} delays but {len(powers)} powers")
        if delays[0] != 0 or any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError(f"delays must start at 0 and strictly increase: {delays}")
        if any(p < 0 for p in powers):
            raise ValueError("tap powers must be non-negative")
        if abs(sum(powers) - 1.0) > 1e-9:
            raise ValueError(f"tap powers sum to {sum(powers)!r}, expected 1")

    @classmethod
    def normalized(cls, delays, powers, name="custom"):
        powers = np.asarray(powers, dtype=float)
        return cls(tuple(delays), tuple(powers / powers.sum()), name)

    @property
    def n_taps(self) -> int:
        return len(self.delays)

    @property
    def max_delay(self) -> int:
        return self.delays[-1]

    @property
    def amplitudes(self) -> np.ndarray:
        return np.sqrt(np.asarray(self.powers))


# Four strongest TDL-A clusters at 300 ns delay spread, binned to a 7.68 MHz grid.
DEFAULT_PDP = PowerDelayProfile(
    delays=(0, 1, 3, 5),
    powers=(0.796185, 0.089497, 0.0781, 0.036218),
    name="TDL-A/4",
)


@dataclass(frozen=True)
class DopplerConfig:
    f_d_max: float = 36.0
    n_harmonics: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.f_d_max < 0:
            raise ValueError("maximum Doppler frequency must be >= 0")
        if self.n_harmonics < 1:
            raise ValueError("need at least one harmonic")


@dataclass
class ChannelRealization:
    """Per-sample tap gains ``taps[a, b, i, n]`` for samples ``t0 .. t0 + n - 1``."""

    taps: np.ndarray
    pdp: PowerDelayProfile
    doppler: DopplerConfig
    frequencies: np.ndarray  # (2, 2, L, M) Hz
    phases: np.ndarray  # (2, 2, L, M) rad
    sample_rate: float
    t0: int = 0

    @property
    def n_samples(self) -> int:
        return self.taps.shape[-1]

    def mean_taps(self, start: int, stop: int) -> np.ndarray:
        """Average tap gains over absolute sample indices [start, stop)."""
        lo, hi = start - self.t0, stop - self.t0
        if lo < 0 or hi > self.n_samples:
            raise ValueError(f"samples [{start}, {stop}) outside the realization")
        return self.taps[..., lo:hi].mean(axis=-1)


def _synthesize(freqs, phases, amps, n_harmonics, t0, n_samples, sample_rate):
    # freqs/phases: (K, M).  exp(j w (t0 + B s + r)) = exp(j w (t0 + B s)) * exp(j w r)
    w = 2.0 * np.pi * freqs / sample_rate
    block = max(1, math.isqrt(n_samples))
    n_blocks = -(-n_samples // block)
    starts = t0 + block * np.arange(n_blocks)
    outer = np.exp(1j * (phases[:, None, :] + w[:, None, :] * starts[None, :, None]))
    inner = np.exp(1j * w[:, :, None] * np.arange(block)[None, None, :])
    g = np.matmul(outer, inner).reshape(freqs.shape[0], -1)[:, :n_samples]
    return g * (amps / np.sqrt(n_harmonics))[:, None]


def generate_taps(
    pdp: PowerDelayProfile,
    doppler: DopplerConfig,
    n_samples: int,
    sample_rate: float,
    rng=None,
    *,
    t0: int = 0,
    u=None,
) -> ChannelRealization:
    """Draw a 2x2 realization and evaluate its tap gains over ``n_samples`` samples.

    ``rng`` defaults to a generator seeded from ``doppler.seed``; ``u`` may force
    the uniform draws (shape ``(2, 2, L, M)``) for hand-checked cases.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if pdp is None or pdp.n_taps == 0:
        raise ValueError("empty power delay profile")
    shape = (N_TX, N_RX, pdp.n_taps, doppler.n_harmonics)
    if u is None:
        if rng is None:
            rng = np.random.default_rng(doppler.seed)
        u = rng.random(shape)
    else:
        u = np.broadcast_to(np.asarray(u, dtype=float), shape)
    freqs = doppler.f_d_max * np.sin(2.0 * np.pi * u)
    phases = 2.0 * np.pi * u
    amps = np.broadcast_to(pdp.amplitudes[None, None, :], shape[:3]).reshape(-1)
    g = _synthesize(
        freqs.reshape(-1, shape[3]),
        phases.reshape(-1, shape[3]),
        amps,
        doppler.n_harmonics,
        t0,
        n_samples,
        sample_rate,
    )
    return ChannelRealization(
        taps=g.reshape(shape[:3] + (n_samples,)),
        pdp=pdp,
        doppler=doppler,
        frequencies=freqs,
        phases=phases,
        sample_rate=sample_rate,
        t0=t0,
    )


def apply_channel(tx: TimeSignal, ch: ChannelRealization) -> TimeSignal:
    """Time-variant convolution y_b(n) = sum_a sum_i g_abi(n) x_a(n - d_i)."""
    x = tx.samples
    if x.shape[0] != N_TX:
        raise ValueError(f"expected {N_TX} transmit streams, got {x.shape[0]}")
    n = x.shape[1]
    lo = tx.t0 - ch.t0
    if lo < 0 or lo + n > ch.n_samples:
        raise ValueError(
            f"channel covers samples [{ch.t0}, {ch.t0 + ch.n_samples}), "
            f"signal needs [{tx.t0}, {tx.t0 + n})"
        )
    g = ch.taps[..., lo : lo + n]
    y = np.zeros((N_RX, n), dtype=complex)
    for i, d in enumerate(ch.pdp.delays):
        if d >= n:
            continue
        shifted = np.zeros_like(x)
        shifted[:, d:] = x[:, : n - d]
        # sum over transmit antennas
        y += np.einsum("abn,an->bn", g[:, :, i, :], shifted)
    return TimeSignal(y, t0=tx.t0)


def add_awgn(sig: TimeSignal, noise_variance: float, rng) -> TimeSignal:
    """Circularly symmetric complex Gaussian noise with ``noise_variance`` per sample."""
    if noise_variance < 0:
        raise ValueError(f"noise variance must be >= 0, got {noise_variance}")
    shape = sig.samples.shape
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return TimeSignal(sig.samples + np.sqrt(noise_variance / 2.0) * noise, t0=sig.t0)


def snr_to_noise_variance(snr_db: float, signal_power: float) -> float:
    if signal_power <= 0:
        raise ValueError("signal power must be positive")
    return signal_power / 10.0 ** (snr_db / 10.0)


def frequency_response(taps, delays, n_fft: int) -> np.ndarray:
    """H[k] = sum_i g_i exp(-j 2 pi k d_i / N) along a new last axis of length ``n_fft``.

    ``taps`` has the tap index on its last axis.  This is the per-subcarrier gain
    seen after cyclic-prefix removal and the (unitary) DFT.
    """
    taps = np.asarray(taps, dtype=complex)
    delays = np.asarray(delays)
    k = np.arange(n_fft)
    steer = np.exp(-2j * np.pi * np.outer(delays, k) / n_fft)  # (L, N)
    return taps @ steer
