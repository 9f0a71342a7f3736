"""Pilot-based channel estimation (LS, LMMSE), interpolation and 2x2 zero forcing.

Estimates on the full grid are arrays ``h[a, b, k, t]``: transmit antenna ``a``,
receive antenna ``b``, subcarrier ``k``, OFDM symbol ``t``.  Pilot-cell arrays
are ``h[a, b, s, j]`` with ``s`` the pilot-symbol index and ``j`` the position
along antenna ``a``'s comb.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _jsonio
from .grid import PilotPattern, ResourceGrid

__all__ = [
    "ChannelEstimate",
    "ChannelStatistics",
    "SolverError",
    "ls_estimate",
    "interpolate_frequency",
    "interpolate_time",
    "interpolate",
    "lmmse_filter",
    "lmmse_estimate",
    "estimate_statistics",
    "equalize",
    "mse",
]

METHODS = ("LS", "LMMSE", "DNN1", "DNN2", "Perfect")
ERASURE_DET = 1e-12
COND_LIMIT = 1e12
RIDGE = 1e-12
SINGULAR_COND = 1.0 / np.finfo(float).eps


class SolverError(ArithmeticError):
    def __init__(self, message, condition_number):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


@dataclass
class ChannelEstimate:
    h_hat: np.ndarray  # (2, 2, n_fft, n_symbols)
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown estimation method {self.method!r}")
        if self.h_hat.ndim != 4 or self.h_hat.shape[:2] != (2, 2):
            raise ValueError(f"estimate must be 2 x 2 x n_fft x n_symbols, got {self.h_hat.shape}")


def ls_estimate(rx_pilots, pattern: PilotPattern) -> np.ndarray:
    """Per-cell LS: received pilot divided by the known pilot value."""
    if pattern.pilot_value == 0:
        raise ZeroDivisionError("pilot value is zero")
    return np.asarray(rx_pilots, dtype=complex) / pattern.pilot_value


def _interp_weights(known, n: int):
    """Linear interpolation indices/weights onto 0..n-1, holding the end values."""
    known = np.asarray(known)
    q = np.arange(n)
    if known.size == 1:
        zero = np.zeros(n, dtype=np.int64)
        return zero, zero, np.zeros(n)
    j = np.clip(np.searchsorted(known, q, side="right") - 1, 0, known.size - 2)
    lo, hi = known[j], known[j + 1]
    w = np.clip((q - lo) / (hi - lo), 0.0, 1.0)
    return j, j + 1, w


def _apply_weights(values, lo, hi, w, axis):
    values = np.moveaxis(values, axis, -1)
    out = values[..., lo] * (1.0 - w) + values[..., hi] * w
    return np.moveaxis(out, -1, axis)


def interpolate_frequency(pilot_est, pattern: PilotPattern, n_fft: int) -> np.ndarray:
    """(2, 2, n_ps, n_pf) comb values -> (2, 2, n_ps, n_fft) along frequency."""
    pilot_est = np.asarray(pilot_est)
    if pattern.n_pilots(n_fft) < 2:
        raise ValueError("frequency interpolation needs at least 2 pilot subcarriers")
    out = np.empty(pilot_est.shape[:-1] + (n_fft,), dtype=complex)
    for a in range(pilot_est.shape[0]):
        lo, hi, w = _interp_weights(pattern.pilot_subcarriers(n_fft, a), n_fft)
        out[a] = _apply_weights(pilot_est[a], lo, hi, w, axis=-1)
    return out


def interpolate_time(per_symbol, pattern: PilotPattern, n_symbols: int) -> np.ndarray:
    """(..., n_ps, n_fft) estimates at pilot symbols -> (..., n_fft, n_symbols)."""
    per_symbol = np.asarray(per_symbol)
    syms = pattern.pilot_symbols(n_symbols)
    if per_symbol.shape[-2] != syms.size:
        raise ValueError(f"{per_symbol.shape[-2]} pilot symbols given, pattern has {syms.size}")
    lo, hi, w = _interp_weights(syms, n_symbols)
    out = _apply_weights(per_symbol, lo, hi, w, axis=-2)
    return np.swapaxes(out, -1, -2)


def interpolate(pilot_estimates, pattern: PilotPattern, n_fft: int, n_symbols: int) -> ChannelEstimate:
    """LS pilot values -> full grid: linear in frequency, then linear in time."""
    freq = interpolate_frequency(pilot_estimates, pattern, n_fft)
    return ChannelEstimate(interpolate_time(freq, pattern, n_symbols), "LS")


@dataclass
class ChannelStatistics:
    """Second-order channel statistics for a comb starting at subcarrier 0.

    ``r_h_hls`` rows are full-grid subcarriers, columns comb positions.  Combs
    shifted by ``o`` subcarriers reuse the matrices with the full-grid axis
    rotated by ``o`` (the frequency correlation is cyclic in the subcarrier index).
    """

    r_hh: np.ndarray
    r_h_hls: np.ndarray
    sigma_x2: float = 1.0
    sample_count: int = 0

    def __post_init__(self):
        self.r_hh = np.asarray(self.r_hh, dtype=complex)
        self.r_h_hls = np.asarray(self.r_h_hls, dtype=complex)
        n_p = self.r_hh.shape[0]
        if self.r_hh.shape != (n_p, n_p) or self.r_h_hls.shape[1] != n_p:
            raise ValueError(
                f"inconsistent statistics shapes {self.r_hh.shape} / {self.r_h_hls.shape}"
            )

    @property
    def n_pilots(self) -> int:
        return self.r_hh.shape[0]

    @property
    def n_full(self) -> int:
        return self.r_h_hls.shape[0]

    @cached_property
    def _eig(self):
        lam, u = np.linalg.eigh(self.r_hh)
        if not np.all(np.isfinite(lam)):
            raise SolverError("autocorrelation has non-finite eigenvalues", np.inf)
        if lam[0] < -1e-10 * max(1.0, lam[-1]):
            raise SolverError("autocorrelation is not positive semidefinite", lam[-1] / lam[0])
        lam = np.clip(lam, 0.0, None)
        return lam, u, self.r_h_hls @ u

    def to_dict(self) -> dict:
        return {
            "kind": "channel_statistics",
            "r_hh": _jsonio.encode_array(self.r_hh),
            "r_h_hls": _jsonio.encode_array(self.r_h_hls),
            "sigma_x2": self.sigma_x2,
            "sample_count": self.sample_count,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "channel_statistics":
            raise ValueError("not a channel statistics record")
        return cls(
            _jsonio.decode_array(d["r_hh"]),
            _jsonio.decode_array(d["r_h_hls"]),
            float(d["sigma_x2"]),
            int(d["sample_count"]),
        )

    def save(self, path):
        _jsonio.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path):
        return cls.from_dict(_jsonio.load(path))


def estimate_statistics(h_true, h_ls, pilot_subcarriers=None, sigma_x2: float = 1.0) -> ChannelStatistics:
    """Sample statistics from paired realizations.

    ``h_true`` is (S, N_full) true frequency responses, ``h_ls`` (S, N_P) LS
    values on the comb at ``pilot_subcarriers`` (defaults to all of N_full).
    """
    h_true = np.atleast_2d(np.asarray(h_true, dtype=complex))
    h_ls = np.atleast_2d(np.asarray(h_ls, dtype=complex))
    if h_true.shape[0] == 0:
        raise ValueError("no realizations given")
    if h_true.shape[0] < 2:
        raise ValueError("statistics need at least 2 realizations")
    if h_true.shape[0] != h_ls.shape[0]:
        raise ValueError(f"{h_true.shape[0]} channels but {h_ls.shape[0]} LS estimates")
    if pilot_subcarriers is None:
        pilot_subcarriers = np.arange(h_true.shape[1])
    h_p = h_true[:, pilot_subcarriers]
    if h_p.shape[1] != h_ls.shape[1]:
        raise ValueError("LS estimates do not match the pilot subcarriers")
    s = h_true.shape[0]
    r_hh = h_p.T @ h_p.conj() / s
    r_hh = 0.5 * (r_hh + r_hh.conj().T)
    r_h_hls = h_true.T @ h_ls.conj() / s
    return ChannelStatistics(r_hh, r_h_hls, sigma_x2, s)


def lmmse_filter(h_ls, stats: ChannelStatistics, noise_variance: float) -> np.ndarray:
    """R_hh_ls (R_hh + (sigma_w^2 / sigma_x^2) I)^-1 h_ls along the last axis."""
    h_ls = np.asarray(h_ls, dtype=complex)
    if h_ls.shape[-1] != stats.n_pilots:
        raise ValueError(f"LS vector has {h_ls.shape[-1]} entries, statistics expect {stats.n_pilots}")
    lam, u, ru = stats._eig
    reg = noise_variance / stats.sigma_x2
    top, bottom = lam[-1] + reg, lam[0] + reg
    cond = top / bottom if bottom > 0 else np.inf
    if cond > COND_LIMIT:
        reg += RIDGE
        bottom = lam[0] + reg
        cond = (lam[-1] + reg) / bottom if bottom > 0 else np.inf
    if not bottom > 0 or not cond < SINGULAR_COND:
        raise SolverError("regularized autocorrelation is numerically singular", cond)
    coeff = (h_ls @ u.conj()) / (lam + reg)
    return coeff @ ru.T


def lmmse_estimate(
    h_ls,
    stats: ChannelStatistics,
    noise_variance: float,
    pattern: PilotPattern,
    n_symbols: int,
) -> ChannelEstimate:
    """Filter each pilot symbol's comb in frequency, then interpolate in time."""
    h_ls = np.asarray(h_ls, dtype=complex)
    n_fft = stats.n_full
    per_symbol = np.empty(h_ls.shape[:-1] + (n_fft,), dtype=complex)
    for a in range(h_ls.shape[0]):
        offset = int(pattern.pilot_subcarriers(n_fft, a)[0])
        per_symbol[a] = np.roll(lmmse_filter(h_ls[a], stats, noise_variance), offset, axis=-1)
    return ChannelEstimate(interpolate_time(per_symbol, pattern, n_symbols), "LMMSE")


def equalize(y: ResourceGrid, h_hat: ChannelEstimate, k_idx, t_idx) -> np.ndarray:
    """Zero-forcing 2x2 detection on the listed cells; returns (2, n_cells).

    Cells whose estimated channel matrix has |det| < 1e-12 come out as 0.
    """
    h = h_hat.h_hat[:, :, k_idx, t_idx]  # (a, b, n)
    yy = y.cells[k_idx, t_idx, :].T  # (b, n)
    # channel matrix rows = receive antenna, columns = transmit antenna
    h11, h12, h21, h22 = h[0, 0], h[1, 0], h[0, 1], h[1, 1]
    det = h11 * h22 - h12 * h21
    ok = np.abs(det) >= ERASURE_DET
    safe = np.where(ok, det, 1.0)
    x0 = (h22 * yy[0] - h12 * yy[1]) / safe
    x1 = (-h21 * yy[0] + h11 * yy[1]) / safe
    out = np.stack((x0, x1))
    out[:, ~ok] = 0.0
    return out


def mse(h_hat, h_true) -> float:
    h_hat = h_hat.h_hat if isinstance(h_hat, ChannelEstimate) else np.asarray(h_hat)
    h_true = h_true.h_hat if isinstance(h_true, ChannelEstimate) else np.asarray(h_true)
    if h_hat.shape != h_true.shape:
        raise ValueError(f"shape mismatch {h_hat.shape} vs {h_true.shape}")
    return float(np.mean(np.abs(h_hat - h_true) ** 2))
