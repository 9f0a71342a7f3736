"""Constellation mapping, layer mapping and pilot placement on the resource grid.

Grid layout convention: ``cells[k, t, a]`` is subcarrier ``k``, OFDM symbol
``t``, antenna ``a``.  Antenna 0 owns the pilot comb starting at subcarrier 0,
antenna 1 owns the comb shifted by ``antenna_offset``; on each comb cell the
non-owning antenna stays silent.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CellKind",
    "Constellation",
    "QPSK",
    "QAM16",
    "PilotPattern",
    "ResourceGrid",
    "modulate",
    "demodulate",
    "layer_map",
    "layer_demap",
    "insert_pilots",
    "extract_pilots",
    "data_capacity",
]

N_ANTENNAS = 2


class CellKind(enum.IntEnum):
    DATA = 0
    PILOT = 1
    NULL = 2


@dataclass(frozen=True)
class Constellation:
    """Unit-energy constellation; ``points[m]`` carries the bit label ``m`` (MSB first)."""

    name: str
    points: np.ndarray
    bits_per_symbol: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        if pts.size != 2**self.bits_per_symbol:
            raise ValueError(
                f"{self.name}: {pts.size} points for {self.bits_per_symbol} bits/symbol"
            )
        if abs(np.mean(np.abs(pts) ** 2) - 1.0) > 1e-12:
            raise ValueError(f"{self.name}: constellation is not unit-energy")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


def _qpsk_points():
    labels = np.arange(4)
    b0, b1 = labels >> 1, labels & 1
    return ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2.0)


def _qam16_points():
    # Gray PAM4 per axis: 00 -> +3, 01 -> +1, 11 -> -1, 10 -> -3
    pam = {0b00: 3, 0b01: 1, 0b11: -1, 0b10: -3}
    labels = np.arange(16)
    i = np.array([pam[m >> 2] for m in labels])
    q = np.array([pam[m & 0b11] for m in labels])
    return (i + 1j * q) / np.sqrt(10.0)


QPSK = Constellation("QPSK", _qpsk_points(), 2)
QAM16 = Constellation("QAM16", _qam16_points(), 4)


def modulate(bits, c: Constellation = QPSK) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = c.bits_per_symbol
    if bits.size % k:
        raise ValueError(f"bit count {bits.size} not divisible by {k} ({c.name})")
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = bits.reshape(-1, k) @ weights
    return c.points[labels]


def demodulate(symbols, c: Constellation = QPSK) -> np.ndarray:
    """Hard-decision nearest-point demapping back to a flat bit array."""
    symbols = np.asarray(symbols, dtype=complex).ravel()
    k = c.bits_per_symbol
    if c.name == "QPSK":
        # quadrant decision, equivalent to nearest point for the Gray QPSK above
        out = np.empty((symbols.size, 2), dtype=np.int8)
        out[:, 0] = symbols.real < 0
        out[:, 1] = symbols.imag < 0
        return out.ravel()
    dist = np.abs(symbols[:, None] - c.points[None, :])
    labels = np.argmin(dist, axis=1)
    shifts = np.arange(k - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.int8).ravel()


def layer_map(x):
    """Split a symbol stream onto two layers: odd positions (1-based) to the first."""
    x = np.asarray(x)
    if x.shape[0] % 2:
        raise ValueError(f"layer mapping needs an even length, got {x.shape[0]}")
    return x[0::2].copy(), x[1::2].copy()


def layer_demap(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"layer lengths differ: {a.shape[0]} vs {b.shape[0]}")
    out = np.empty((2 * a.shape[0],) + a.shape[1:], dtype=np.result_type(a, b))
    out[0::2] = a
    out[1::2] = b
    return out


@dataclass(frozen=True)
class PilotPattern:
    d_t: int
    d_f: int
    pilot_value: complex = 1.0 + 0.0j
    antenna_offset: int = 1

    def __post_init__(self):
        if self.d_t < 1:
            raise ValueError(f"d_t must be >= 1, got {self.d_t}")
        if self.d_f < 2:
            raise ValueError(f"d_f must be >= 2 for disjoint combs, got {self.d_f}")
        if not 0 < self.antenna_offset < self.d_f:
            raise ValueError(
                f"antenna_offset must lie in [1, d_f), got {self.antenna_offset}"
            )
        if abs(abs(self.pilot_value) - 1.0) > 1e-12:
            raise ValueError("pilot value must have unit magnitude")

    def check(self, n_fft: int, n_symbols: int):
        if n_fft % self.d_f:
            raise ValueError(f"d_f={self.d_f} does not divide n_fft={n_fft}")
        if n_symbols < 1:
            raise ValueError("need at least one OFDM symbol")

    def pilot_symbols(self, n_symbols: int) -> np.ndarray:
        return np.arange(0, n_symbols, self.d_t)

    def pilot_subcarriers(self, n_fft: int, antenna: int) -> np.ndarray:
        offset = 0 if antenna == 0 else self.antenna_offset
        return np.arange(offset, n_fft, self.d_f)

    def n_pilots(self, n_fft: int) -> int:
        """Pilot subcarriers per antenna per pilot symbol."""
        return n_fft // self.d_f


@dataclass
class ResourceGrid:
    cells: np.ndarray  # (n_fft, n_symbols, 2) complex
    cell_kind: np.ndarray = field(default=None)  # (n_fft, n_symbols, 2) CellKind codes

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=complex)
        if self.cells.ndim != 3 or self.cells.shape[2] != N_ANTENNAS:
            raise ValueError(f"grid cells must be n_fft x n_symbols x 2, got {self.cells.shape}")
        if self.cell_kind is None:
            self.cell_kind = np.full(self.cells.shape, CellKind.DATA, dtype=np.int8)
        elif self.cell_kind.shape != self.cells.shape:
            raise ValueError("cell_kind shape does not match cells")

    @property
    def n_fft(self) -> int:
        return self.cells.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.cells.shape[1]


def _kind_layout(p: PilotPattern, n_fft: int, n_symbols: int) -> np.ndarray:
    p.check(n_fft, n_symbols)
    kind = np.full((n_fft, n_symbols, N_ANTENNAS), CellKind.DATA, dtype=np.int8)
    syms = p.pilot_symbols(n_symbols)
    for a in range(N_ANTENNAS):
        sc = p.pilot_subcarriers(n_fft, a)
        kind[np.ix_(sc, syms, [a])] = CellKind.PILOT
        kind[np.ix_(sc, syms, [1 - a])] = CellKind.NULL
    return kind


def data_mask(p: PilotPattern, n_fft: int, n_symbols: int) -> np.ndarray:
    """Boolean (n_fft, n_symbols) mask of data cells; identical on both antennas."""
    kind = _kind_layout(p, n_fft, n_symbols)
    return kind[:, :, 0] == CellKind.DATA


def data_capacity(p: PilotPattern, n_fft: int, n_symbols: int) -> int:
    return int(data_mask(p, n_fft, n_symbols).sum())


def insert_pilots(data, p: PilotPattern, n_fft: int, n_symbols: int) -> ResourceGrid:
    """Place pilots and per-antenna data on a fresh grid.

    ``data`` is a pair of symbol sequences, one per antenna.  Data cells are
    filled subcarrier by subcarrier within an OFDM symbol, then symbol by
    symbol; cells left over are marked null.
    """
    if len(data) != N_ANTENNAS:
        raise ValueError(f"expected data for {N_ANTENNAS} antennas, got {len(data)}")
    kind = _kind_layout(p, n_fft, n_symbols)
    cells = np.zeros(kind.shape, dtype=complex)
    cells[kind == CellKind.PILOT] = p.pilot_value
    mask = kind[:, :, 0] == CellKind.DATA
    capacity = int(mask.sum())
    # column-major walk over (k, t): frequency fastest
    k_idx, t_idx = np.nonzero(mask.T)[::-1]
    for a in range(N_ANTENNAS):
        d = np.asarray(data[a], dtype=complex).ravel()
        if d.size > capacity:
            raise ValueError(
                f"antenna {a}: {d.size} data symbols exceed the {capacity} data cells available"
            )
        cells[k_idx[: d.size], t_idx[: d.size], a] = d
        kind[k_idx[d.size :], t_idx[d.size :], a] = CellKind.NULL
    return ResourceGrid(cells, kind)


def data_order(p: PilotPattern, n_fft: int, n_symbols: int):
    """(k, t) coordinates of data cells in fill order."""
    mask = data_mask(p, n_fft, n_symbols)
    k_idx, t_idx = np.nonzero(mask.T)[::-1]
    return k_idx, t_idx


def extract_pilots(grid: ResourceGrid, p: PilotPattern) -> np.ndarray:
    """Values at every comb's pilot cells on every grid antenna.

    Returns an array indexed ``[comb a, antenna b, pilot symbol, pilot subcarrier]``.
    For a transmit grid the ``[a, a]`` entries are the pilots antenna ``a`` sent;
    for a received grid ``[a, b]`` is what receive antenna ``b`` saw on
    transmit antenna ``a``'s comb.
    """
    n_fft, n_symbols = grid.n_fft, grid.n_symbols
    try:
        p.check(n_fft, n_symbols)
    except ValueError as exc:
        raise ValueError(f"pilot pattern does not fit the grid: {exc}") from None
    syms = p.pilot_symbols(n_symbols)
    out = np.empty((N_ANTENNAS, N_ANTENNAS, syms.size, p.n_pilots(n_fft)), dtype=complex)
    for a in range(N_ANTENNAS):
        sc = p.pilot_subcarriers(n_fft, a)
        # (n_pf, n_ps, 2) -> (2, n_ps, n_pf)
        out[a] = grid.cells[np.ix_(sc, syms)].transpose(2, 1, 0)
    return out
