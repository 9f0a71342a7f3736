import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimochest.grid import (
    QAM16,
    QPSK,
    CellKind,
    Constellation,
    PilotPattern,
    ResourceGrid,
    data_capacity,
    demodulate,
    extract_pilots,
    insert_pilots,
    layer_demap,
    layer_map,
    modulate,
)

S2 = np.sqrt(2.0)


def test_qpsk_gray_points():
    assert modulate([0, 0])[0] == pytest.approx((1 + 1j) / S2, abs=1e-15)
    assert modulate([1, 1])[0] == pytest.approx((-1 - 1j) / S2, abs=1e-15)
    assert modulate([0, 1])[0] == pytest.approx((1 - 1j) / S2, abs=1e-15)
    assert modulate([1, 0])[0] == pytest.approx((-1 + 1j) / S2, abs=1e-15)


def test_constellations_unit_energy_and_size():
    for c in (QPSK, QAM16):
        assert c.points.size == 2**c.bits_per_symbol
        assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12


def test_constellation_rejects_bad_energy():
    with pytest.raises(ValueError, match="unit-energy"):
        Constellation("bad", np.array([2, -2, 2j, -2j]), 2)


def test_qam16_adjacent_points_differ_in_one_bit():
    pts = QAM16.points
    d_min = 2 / np.sqrt(10)
    for m, n in itertools.combinations(range(16), 2):
        if abs(abs(pts[m] - pts[n]) - d_min) < 1e-9:
            assert bin(m ^ n).count("1") == 1


def test_modulate_rejects_odd_length():
    with pytest.raises(ValueError, match="not divisible"):
        modulate([0, 1, 1])
    with pytest.raises(ValueError):
        modulate([0, 1], QAM16)


def test_demodulate_examples():
    assert demodulate([0.9 + 0.8j]).tolist() == [0, 0]
    assert demodulate([-0.1 - 0.2j]).tolist() == [1, 1]


@pytest.mark.parametrize("c", [QPSK, QAM16])
def test_modulation_round_trip_exhaustive(c):
    # every bit pattern of every whole-symbol length up to 16 bits
    for n_bits in range(c.bits_per_symbol, 17, c.bits_per_symbol):
        patterns = (np.arange(2**n_bits)[:, None] >> np.arange(n_bits - 1, -1, -1)) & 1
        bits = patterns.ravel()
        assert np.array_equal(demodulate(modulate(bits, c), c), bits)


def test_demodulate_nearest_point_oracle():
    rng = np.random.default_rng(1)
    y = rng.normal(size=500) + 1j * rng.normal(size=500)
    for c in (QPSK, QAM16):
        k = c.bits_per_symbol
        labels = np.argmin(np.abs(y[:, None] - c.points[None, :]), axis=1)
        expected = [(m >> s) & 1 for m in labels for s in range(k - 1, -1, -1)]
        assert demodulate(y, c).tolist() == expected


def test_layer_map_examples():
    a, b = layer_map(np.array([1, 2, 3, 4]))
    assert a.tolist() == [1, 3] and b.tolist() == [2, 4]
    a, b = layer_map(np.array([]))
    assert a.size == 0 and b.size == 0
    assert layer_demap(np.array([1, 3]), np.array([2, 4])).tolist() == [1, 2, 3, 4]
    assert layer_demap(np.array([]), np.array([])).size == 0


def test_layer_map_errors():
    with pytest.raises(ValueError, match="even"):
        layer_map(np.arange(3))
    with pytest.raises(ValueError, match="differ"):
        layer_demap(np.arange(2), np.arange(3))


@given(st.lists(st.complex_numbers(allow_nan=False, allow_infinity=False, max_magnitude=1e6), max_size=40))
def test_layer_round_trip(values):
    x = np.array(values[: len(values) // 2 * 2], dtype=complex)
    assert np.array_equal(layer_demap(*layer_map(x)), x)


def test_pilot_pattern_validation():
    with pytest.raises(ValueError):
        PilotPattern(0, 2)
    with pytest.raises(ValueError):
        PilotPattern(1, 1)
    with pytest.raises(ValueError):
        PilotPattern(1, 2, antenna_offset=2)
    with pytest.raises(ValueError, match="unit magnitude"):
        PilotPattern(1, 2, pilot_value=2.0)


def test_insert_pilots_comb_layout():
    p = PilotPattern(d_t=4, d_f=2, antenna_offset=1)
    g = insert_pilots((np.zeros(0), np.zeros(0)), p, 8, 8)
    kind = g.cell_kind
    assert np.flatnonzero((kind[:, 0, 0] == CellKind.PILOT)).tolist() == [0, 2, 4, 6]
    assert np.flatnonzero((kind[:, 0, 1] == CellKind.PILOT)).tolist() == [1, 3, 5, 7]
    assert p.pilot_symbols(8).tolist() == [0, 4]
    pilot_syms = np.flatnonzero((kind[:, :, 0] == CellKind.PILOT).any(axis=0))
    assert pilot_syms.tolist() == [0, 4]
    # other antenna silent on each comb
    assert np.all(g.cells[kind == CellKind.NULL] == 0)
    assert np.all(kind[kind[:, :, 0] == CellKind.PILOT][:, 1] == CellKind.NULL)


def test_insert_pilots_zero_data_is_pilots_and_nulls():
    p = PilotPattern(2, 2)
    g = insert_pilots((np.zeros(0), np.zeros(0)), p, 8, 4)
    assert set(np.unique(g.cell_kind)) == {CellKind.PILOT, CellKind.NULL}
    assert np.all(g.cells[g.cell_kind == CellKind.PILOT] == p.pilot_value)


def test_insert_pilots_fill_order_frequency_first():
    p = PilotPattern(d_t=2, d_f=2)
    n_fft, n_sym = 4, 3
    cap = data_capacity(p, n_fft, n_sym)
    assert cap == 4  # only symbol 1 is pilot-free
    data = np.arange(1, cap + 1) + 0j
    g = insert_pilots((data, -data), p, n_fft, n_sym)
    assert g.cells[:, 1, 0].tolist() == [1, 2, 3, 4]
    assert g.cells[:, 1, 1].tolist() == [-1, -2, -3, -4]


def test_insert_pilots_overflow_reports_capacity():
    p = PilotPattern(2, 2)
    cap = data_capacity(p, 8, 4)
    with pytest.raises(ValueError, match=f"{cap} data cells"):
        insert_pilots((np.zeros(cap + 1), np.zeros(1)), p, 8, 4)


def test_insert_pilots_partial_fill_marks_null():
    p = PilotPattern(2, 2)
    g = insert_pilots((np.ones(3), np.ones(3)), p, 8, 4)
    assert np.count_nonzero(g.cell_kind[:, :, 0] == CellKind.DATA) == 3


def test_extract_pilots_recovers_pilot_value():
    p = PilotPattern(4, 2, pilot_value=np.exp(0.3j))
    g = insert_pilots((np.ones(10), np.ones(10)), p, 16, 8)
    pil = extract_pilots(g, p)
    assert pil.shape == (2, 2, 2, 8)
    for a in range(2):
        assert np.all(pil[a, a] == p.pilot_value)
        assert np.all(pil[a, 1 - a] == 0)


def test_extract_pilots_coordinates_match_lattice():
    n_fft, n_sym = 8, 5
    p = PilotPattern(2, 4, antenna_offset=3)
    cells = np.zeros((n_fft, n_sym, 2), dtype=complex)
    cells[..., 0] = np.arange(n_fft)[:, None] + 100 * np.arange(n_sym)[None, :]
    pil = extract_pilots(ResourceGrid(cells), p)
    assert pil[0, 0].real.tolist() == [[0, 4], [200, 204], [400, 404]]
    assert pil[1, 0].real.tolist() == [[3, 7], [203, 207], [403, 407]]


def test_extract_pilots_mismatch():
    with pytest.raises(ValueError, match="does not fit"):
        extract_pilots(ResourceGrid(np.zeros((10, 2, 2))), PilotPattern(1, 4))


def test_pilot_count_512():
    p = PilotPattern(4, 2)
    assert p.n_pilots(512) == 256
    assert p.pilot_subcarriers(512, 0).size == 256
    assert p.pilot_subcarriers(512, 1).size == 256


@settings(max_examples=60)
@given(
    st.integers(1, 5),
    st.sampled_from([2, 4, 8]),
    st.integers(1, 7),
    st.sampled_from([8, 16, 32]),
    st.integers(1, 14),
)
def test_pilot_sets_disjoint_and_counted(d_t, d_f, offset, n_fft, n_sym):
    if offset >= d_f:
        offset = d_f - 1
    p = PilotPattern(d_t, d_f, antenna_offset=offset)
    g = insert_pilots((np.zeros(0), np.zeros(0)), p, n_fft, n_sym)
    pil0 = g.cell_kind[:, :, 0] == CellKind.PILOT
    pil1 = g.cell_kind[:, :, 1] == CellKind.PILOT
    assert not np.any(pil0 & pil1)
    expected = -(-n_fft // d_f) * -(-n_sym // d_t)
    assert pil0.sum() == expected and pil1.sum() == expected
    pil = extract_pilots(g, p)
    assert np.all(pil[0, 0] == p.pilot_value) and np.all(pil[1, 1] == p.pilot_value)
