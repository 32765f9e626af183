import numpy as np
import pytest

from pvqsim.analysis import (
    TINYYOLO_LAYERS,
    CycleRow,
    compression_report,
    cycle_comparison,
    cycle_totals,
    design_bandpass,
    fir_compare,
    fir_frequency_response,
    naf_width,
    pulse_table,
    render_text,
    rows_to_csv,
    synthetic_network,
    to_int16_taps,
    weight_histogram,
)
from pvqsim.pvq import pvq_quantize, pvq_quantize_tensor
from pvqsim.sdr import pulse_count, to_digit_matrix
from pvqsim.weights_io import LayerSpec, WeightTensor, synth_laplacian

# per-layer (N, Q, NZ, Ns) as published, with row 6's N and Q read as
# 3x3x64x128 = 73,728 and 1.5 * 73,728 = 110,592
PUBLISHED_LAYERS = [
    (432, 1728, 371, 558),
    (4608, 6912, 2820, 3375),
    (18432, 27648, 11989, 14180),
    (73728, 110592, 51839, 60814),
    (294912, 442368, 213392, 251784),
    (1179648, 1769472, 877721, 1033521),
    (4718592, 7077888, 4668036, 5221710),
    (262144, 393216, 194402, 229973),
    (1179648, 1769472, 854302, 1020873),
    (130560, 195840, 85879, 106308),
    (32768, 49152, 24299, 29299),
    (884736, 1327104, 633226, 752090),
    (65280, 97920, 43369, 53112),
]


def _synthetic_codes(n=4608, seed=1):
    t = synth_laplacian(n, 1.0, seed, shape=(3, 3, 16, 32) if n == 4608 else None)
    return pvq_quantize_tensor(t, 1.5).codes


def test_histogram_examples():
    h = weight_histogram([0, 1, -1, 2])
    assert h.percentages["0"] == 25.0
    assert h.percentages["+-1"] == 50.0
    assert h.percentages["+-2-3"] == 25.0
    assert weight_histogram([0, 0, 0]).percentages["0"] == 100.0


def test_histogram_sums_to_100():
    rng = np.random.default_rng(30)
    for _ in range(100):
        codes = rng.integers(-200, 200, size=int(rng.integers(1, 500)))
        h = weight_histogram(codes)
        assert sum(h.percentages.values()) == pytest.approx(100.0, abs=0.01)
        assert h.count == codes.size


def test_histogram_empty():
    with pytest.raises(ValueError):
        weight_histogram([])


def test_synthetic_layer_is_small_magnitude():
    codes = _synthetic_codes()
    # independent count of |w| < 4
    share = 100.0 * np.count_nonzero(np.abs(codes) < 4) / codes.size
    h = weight_histogram(codes)
    small = h.percentages["0"] + h.percentages["+-1"] + h.percentages["+-2-3"]
    assert small == pytest.approx(share)
    assert small >= 85.0


def test_compression_eor_only():
    rows = compression_report([0, 0, 0, 0], modes=("weights",))
    assert rows[0].estimate_bits == 0.0
    assert rows[0].model_bits > 0


def test_compression_directional():
    codes = _synthetic_codes()
    wl, bl = compression_report(codes, q=int(np.abs(codes).sum()))
    assert wl.mode == "weights" and bl.mode == "bitlayers"
    assert bl.bits_per_weight > wl.bits_per_weight
    for r in (wl, bl):
        assert r.payload_bits >= r.estimate_bits
        assert r.file_bits > r.payload_bits + r.model_bits


def test_compression_bad_mode():
    with pytest.raises(ValueError):
        compression_report([1], modes=("columns",))


def test_cycle_row_invariant():
    CycleRow("ok", 432, 1728, 371, 558, 558)
    with pytest.raises(ValueError):
        CycleRow("bad", 10, 5, 3, 6, 6)
    with pytest.raises(ValueError):
        CycleRow("bad", 10, 5, 4, 3, 3)


def test_published_totals_from_per_layer_columns():
    rows = [CycleRow(label, n, q, nz, ns, ns, pos)
            for (label, _, pos), (n, q, nz, ns) in zip(TINYYOLO_LAYERS, PUBLISHED_LAYERS)]
    totals, _ = cycle_totals(rows)
    assert totals["N"] == 2_140_369_920
    assert totals["Q"] == 3_354_324_480
    assert totals["Ns_pulses"] == 1_974_123_320
    # the published NZ total is 130 lower than its own column implies
    assert totals["NZ"] - 1_685_206_900 == 130


def test_tinyyolo_layer_shapes():
    for (label, shape, _), (n, *_rest) in zip(TINYYOLO_LAYERS, PUBLISHED_LAYERS):
        assert int(np.prod(shape)) == n, label


def test_first_layer_q():
    spec = LayerSpec(synth_laplacian(432, 1.0, 1, shape=(3, 3, 3, 16)), 1, "0")
    table = cycle_comparison([spec], first_layer_q_over_n=4)
    assert table.rows[0].q == 1728
    r = table.rows[0]
    assert r.nz <= r.ns_pulses <= r.q


def test_cycle_comparison_counts_match_engines():
    rng = np.random.default_rng(31)
    specs = [LayerSpec(WeightTensor((40,), rng.laplace(size=40)), 3, "a"),
             LayerSpec(WeightTensor((25,), rng.laplace(size=25)), 2, "b")]
    for policy in ("shift_counted", "shift_folded"):
        table = cycle_comparison(specs, q_over_n=2, policy=policy)
        for spec, row in zip(specs, table.rows):
            v = pvq_quantize(spec.tensor.flat(), row.q)
            plan = to_digit_matrix(v.codes, "naf")
            assert row.ns_pulses == plan.pulses()
            assert row.nz == np.count_nonzero(v.codes)
            shifts = plan.nb - 1 if policy == "shift_counted" else 0
            assert row.ns_cycles == row.ns_pulses + shifts
        assert table.totals["Q"] == 3 * 80 + 2 * 50


def test_integer_layer_passes_through():
    spec = LayerSpec(WeightTensor((3,), [3, 0, -1], "integer"), 1, "int")
    row = cycle_comparison([spec]).rows[0]
    assert (row.q, row.nz, row.ns_pulses) == (4, 2, 3)


def test_naf_width():
    rng = np.random.default_rng(32)
    for _ in range(500):
        codes = rng.integers(-3000, 3000, size=int(rng.integers(1, 20)))
        assert naf_width(codes) == to_digit_matrix(codes, "naf").nb
    assert naf_width([0, 0]) == 1


def test_small_synthetic_network_averages():
    table = cycle_comparison(synthetic_network(seed=1, channel_divisor=8))
    assert len(table.rows) == 13
    assert table.per_weight["accum_adds"] == pytest.approx(1.5, abs=0.01)
    assert table.per_weight["blmac_pulses"] < table.per_weight["accum_adds"]
    for r in table.rows:
        assert r.nz <= r.ns_pulses <= r.q


def test_pulse_table_rows():
    rows = pulse_table(7)
    assert [r["nb"] for r in rows] == list(range(1, 8))
    assert rows[2]["avg"] == "1.375000"
    assert rows[6]["max"] == 4 and rows[6]["avg_2dp"] == "2.77"


def test_response_single_tap():
    f, db = fir_frequency_response([1.0], 2000, 64)
    assert f[0] == 0 and f[-1] == 1000
    assert np.allclose(db, 0.0)


def test_response_two_tap_null():
    _, db = fir_frequency_response([0.5, 0.5], 2000, 16)
    assert db[-1] == -160.0
    assert db[0] == pytest.approx(0.0)


def test_response_errors():
    with pytest.raises(ValueError):
        fir_frequency_response([], 2000)
    with pytest.raises(ValueError):
        fir_frequency_response([1.0], 2000, 1)


def test_linear_phase_symmetric_form():
    h = design_bandpass(197, 220, 400, 2000)
    n = h.size
    m = (n - 1) // 2
    f, db = fir_frequency_response(h, 2000, 512)
    # amplitude of a symmetric odd-length filter: h_m + 2 sum h_{m-k} cos(w k)
    w = 2 * np.pi * f / 2000
    k = np.arange(1, m + 1)
    amp = np.abs(h[m] + 2 * np.cos(np.outer(w, k)) @ h[m - k])
    direct = 10 ** (db / 20)
    # relative to the peak: deep stopband values sit at the rounding floor of the sum
    assert np.max(np.abs(amp - direct)) <= 1e-9 * direct.max()
    # and the DFT times exp(i w m) is real, i.e. the phase is exactly linear
    H = np.exp(-1j * np.outer(w, np.arange(n))) @ h
    assert np.max(np.abs((H * np.exp(1j * w * m)).imag)) <= 1e-9 * direct.max()


def test_bandpass_symmetric_and_deterministic():
    h = design_bandpass(197, 220, 400, 2000)
    assert np.array_equal(h, h[::-1])
    assert np.array_equal(h, design_bandpass(197, 220, 400, 2000))


def test_bandpass_quality():
    h = design_bandpass(197, 220, 400, 2000)
    f, db = fir_frequency_response(h, 2000, 4096)
    passband = db[(f >= 220) & (f <= 400)]
    assert passband.max() - passband.min() < 1.0
    stop = db[(f <= 120) | (f >= 500)]
    assert stop.max() < -50.0


def test_bandpass_errors():
    with pytest.raises(ValueError):
        design_bandpass(1, 220, 400, 2000)
    with pytest.raises(ValueError):
        design_bandpass(196, 220, 400, 2000)
    with pytest.raises(ValueError):
        design_bandpass(197, 400, 220, 2000)


def test_pvq_taps_track_passband():
    h = design_bandpass(197, 220, 400, 2000)
    v = pvq_quantize(h, 5 * 197)
    f, orig = fir_frequency_response(h, 2000, 2048)
    _, quant = fir_frequency_response(v.rho * v.codes, 2000, 2048)
    band = (f >= 220) & (f <= 400)
    assert np.max(np.abs(orig[band] - quant[band])) < 3.0


def test_int16_taps():
    assert to_int16_taps([0.5, -1.0, 0.25]).tolist() == [16384, -32767, 8192]
    assert to_int16_taps(np.array([3, -4])).tolist() == [3, -4]
    assert to_int16_taps([0.0, 0.0]).tolist() == [0, 0]
    # half-way values round to even
    assert to_int16_taps([1.0, 0.5 / 32767, 1.5 / 32767]).tolist() == [32767, 0, 2]


def test_fir_compare_forced_columns():
    rep = fir_compare(design_bandpass(197, 220, 400, 2000), 999)
    assert (rep.additions["MAC"], rep.multiplications["MAC"]) == (197, 197)
    assert (rep.additions["PVQ"], rep.multiplications["PVQ"]) == (999, 1)
    assert rep.multiplications["BLMAC"] == 0
    assert rep.multiplications["PVQ+BLMAC"] == 1
    assert rep.additions["BLMAC"] == sum(pulse_count(int(t)) for t in rep.int_taps)
    assert rep.additions["PVQ+BLMAC"] == sum(pulse_count(int(c)) for c in rep.pvq.codes)
    assert rep.additions["PVQ+BLMAC"] <= 999
    assert [r["Operations"] for r in rep.table_rows()] == ["Additions", "Multiplications"]
    assert len(rep.response_rows("orig")) == len(rep.response_rows("pvq")) == 1024


def test_fir_compare_unit_taps():
    rng = np.random.default_rng(33)
    for k in (1, 5, 40):
        taps = rng.choice([-1, 1], size=k)
        assert fir_compare(taps, 2 * k).additions["BLMAC"] == k


def test_fir_compare_empty():
    with pytest.raises(ValueError):
        fir_compare([], 10)


def test_csv_and_text():
    rows = [{"a": 1, "b": "x"}, {"a": 22, "b": "yy", "c": 3}]
    assert rows_to_csv(rows) == "a,b,c\n1,x,\n22,yy,3\n"
    text = render_text(rows).splitlines()
    assert text[0].split() == ["a", "b", "c"]
    assert len({len(line) for line in text}) == 1
    assert rows_to_csv([]) == "" and render_text([]) == ""
