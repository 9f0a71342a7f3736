"""Training rows of (LS tap estimate, true taps) and the DNN-aided estimator.

Binary dataset file, little-endian::

    header  struct '<4sIQII'  magic b"TAPD", version, rows, n_in, n_out
    body    rows x (n_in + n_out) float64, row-major: inputs then targets

Rows are stored after the seeded shuffle; the split is positional.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..channel import PowerDelayProfile, frequency_response
from ..estimate import ChannelEstimate, interpolate_frequency, interpolate_time, ls_estimate
from ..harness.link import Stream, frame_rng, simulate_frame
from ..phy import idft
from .mlp import N_FEATURES, N_TAPS, MlpModel, pack_taps, unpack_taps

__all__ = ["TapDataset", "split_sizes", "extract_ls_taps", "build_dataset", "dnn_estimate"]

MAGIC = b"TAPD"
VERSION = 1
_HEADER = struct.Struct("<4sIQII")


def split_sizes(n: int):
    """70/15/15 with floor on validation and test, remainder to training."""
    n_val = n_test = int(np.floor(0.15 * n))
    return n - n_val - n_test, n_val, n_test


class TapDataset:
    def __init__(self, inputs, targets, n_train=None, n_val=None, n_test=None):
        self.inputs = np.ascontiguousarray(inputs, dtype=np.float64)
        self.targets = np.ascontiguousarray(targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2 or self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(f"inputs {self.inputs.shape} and targets {self.targets.shape} do not pair up")
        n = self.inputs.shape[0]
        if n_train is None:
            n_train, n_val, n_test = split_sizes(n)
        if n_train + n_val + n_test != n or min(n_train, n_val, n_test) < 0:
            raise ValueError(f"split {n_train}/{n_val}/{n_test} does not cover {n} rows")
        self.n_train, self.n_val, self.n_test = int(n_train), int(n_val), int(n_test)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def n_in(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_out(self) -> int:
        return self.targets.shape[1]

    def _rows(self, lo, hi):
        return self.inputs[lo:hi], self.targets[lo:hi]

    @property
    def train(self):
        return self._rows(0, self.n_train)

    @property
    def validation(self):
        return self._rows(self.n_train, self.n_train + self.n_val)

    @property
    def test(self):
        return self._rows(self.n_train + self.n_val, len(self))

    def to_bytes(self) -> bytes:
        body = np.hstack((self.inputs, self.targets)).astype("<f8", copy=False)
        return _HEADER.pack(MAGIC, VERSION, len(self), self.n_in, self.n_out) + body.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TapDataset":
        if len(blob) < _HEADER.size:
            raise ValueError("dataset file is truncated (no header)")
        magic, version, rows, n_in, n_out = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ValueError(f"not a tap dataset file (magic {magic!r})")
        if version != VERSION:
            raise ValueError(f"unsupported dataset version {version}")
        width = n_in + n_out
        expected = _HEADER.size + rows * width * 8
        if len(blob) != expected:
            raise ValueError(f"dataset file has {len(blob)} bytes, header implies {expected}")
        body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(rows, width)
        return cls(body[:, :n_in].astype(np.float64), body[:, n_in:].astype(np.float64))

    def save(self, path):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_bytes(self.to_bytes())
            tmp.replace(path)
        except OSError as exc:
            raise OSError(f"cannot write dataset {path}: {exc.strerror}") from exc

    @classmethod
    def load(cls, path) -> "TapDataset":
        return cls.from_bytes(Path(path).read_bytes())


def _check_pdp(pdp: PowerDelayProfile):
    if pdp.n_taps != N_TAPS:
        raise ValueError(f"the DNN input is fixed at {N_TAPS} taps, profile has {pdp.n_taps}")


def extract_ls_taps(h_grid, pdp: PowerDelayProfile) -> np.ndarray:
    """Taps at the profile's delays from frequency-domain estimates (..., n_fft)."""
    _check_pdp(pdp)
    h_grid = np.asarray(h_grid, dtype=complex)
    n_fft = h_grid.shape[-1]
    if max(pdp.delays) >= n_fft:
        raise ValueError(f"tap delay {max(pdp.delays)} outside a {n_fft}-point grid")
    # idft is unitary; H[k] = sum_i g_i e^{-j2pi k d_i/N} comes back as sqrt(N) g_i
    return idft(h_grid)[..., list(pdp.delays)] / np.sqrt(n_fft)


def _frame_rows(cfg, frame_index, stream, snr_range, noiseless):
    frame = simulate_frame(cfg, frame_index, stream, draw_noise=not noiseless)
    snr = None
    if not noiseless:
        snr = float(frame_rng(cfg.seeds, "snr", stream, frame_index).uniform(*snr_range))
    _, pilots, _ = frame.rx_pilots(cfg, snr)
    freq = interpolate_frequency(ls_estimate(pilots, cfg.pattern), cfg.pattern, cfg.ofdm.n_fft)
    x = pack_taps(extract_ls_taps(freq, cfg.pdp)).reshape(-1, N_FEATURES)  # (a, b, s) order
    syms = cfg.pattern.pilot_symbols(cfg.n_symbols)
    true = np.moveaxis(frame.taps_true[..., syms], 2, -1)  # (2, 2, n_ps, L)
    y = pack_taps(true).reshape(-1, N_FEATURES)
    return x, y


def build_dataset(
    n_realizations: int,
    cfg,
    snr_range=None,
    *,
    workers: int = 1,
    noiseless: bool = False,
    stream: int = Stream.DATASET,
) -> TapDataset:
    """``n_realizations`` rows; each frame contributes one row per antenna pair and pilot symbol."""
    if n_realizations < 10:
        raise ValueError(f"need at least 10 realizations, got {n_realizations}")
    _check_pdp(cfg.pdp)
    snr_range = tuple(cfg.dataset_snr if snr_range is None else snr_range)
    if len(snr_range) != 2 or snr_range[0] > snr_range[1]:
        raise ValueError(f"bad SNR range {snr_range}")
    per_frame = 4 * cfg.pattern.pilot_symbols(cfg.n_symbols).size
    n_frames = -(-n_realizations // per_frame)

    def job(f):
        return _frame_rows(cfg, f, stream, snr_range, noiseless)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(n_frames)))
    else:
        parts = [job(f) for f in range(n_frames)]
    x = np.concatenate([p[0] for p in parts])[:n_realizations]
    y = np.concatenate([p[1] for p in parts])[:n_realizations]

    order = frame_rng(cfg.seeds, "shuffle", stream, 0).permutation(n_realizations)
    return TapDataset(x[order], y[order])


def dnn_estimate(model: MlpModel, h_ls_freq, pdp: PowerDelayProfile, pattern, n_symbols: int, method="DNN1") -> ChannelEstimate:
    """Refine frequency-interpolated LS estimates (2, 2, n_ps, n_fft) through the network."""
    if model.layer_sizes[0] != N_FEATURES or model.layer_sizes[-1] != N_FEATURES:
        raise ValueError(f"model {model.layer_sizes} does not map {N_FEATURES} to {N_FEATURES} values")
    h_ls_freq = np.asarray(h_ls_freq, dtype=complex)
    n_fft = h_ls_freq.shape[-1]
    taps = extract_ls_taps(h_ls_freq, pdp)
    refined = unpack_taps(model.predict(pack_taps(taps).reshape(-1, N_FEATURES))).reshape(taps.shape)
    per_symbol = frequency_response(refined, pdp.delays, n_fft)
    return ChannelEstimate(interpolate_time(per_symbol, pattern, n_symbols), method)
