import numpy as np
import pytest

from oracles import entropy_from_tokens
from pvqsim.pvq import pvq_quantize_tensor
from pvqsim.rle import (
    EOR,
    BitstreamError,
    MalformedStreamError,
    Run,
    RunLengthStream,
    build_model,
    decode_bitlayer_rle,
    decode_weight_rle,
    encode_bitlayer_rle,
    encode_weight_rle,
    estimate_bits,
    header_size,
    range_decode,
    range_decode_full,
    range_encode,
)
from pvqsim.sdr import DigitMatrix, to_digit_matrix
from pvqsim.weights_io import synth_laplacian

EXAMPLE = (1, 27, 7, 0, 2)


def _payload_bits(data):
    return 8 * (len(data) - header_size(data))


def _random_sparse(rng, n, density=0.3, big=False):
    w = rng.integers(-5, 6, size=n) * (rng.random(n) < density)
    if big and n:
        w[rng.integers(0, n)] = int(rng.integers(64, 200_000)) * int(rng.choice([-1, 1]))
    return w


def test_weight_rle_examples():
    assert encode_weight_rle([0, 0, 5, 0, -3, 0, 0]).tokens == [Run(2, 5), Run(1, -3), EOR]
    assert encode_weight_rle([0, 0, 0]).tokens == [EOR]
    assert encode_weight_rle([7]).tokens == [Run(0, 7), EOR]


def test_weight_rle_decode_examples():
    s = RunLengthStream("weight_level", [Run(2, 5), Run(1, -3), EOR], 7)
    assert decode_weight_rle(s).tolist() == [0, 0, 5, 0, -3, 0, 0]
    assert decode_weight_rle(RunLengthStream("weight_level", [EOR], 4)).tolist() == [0] * 4


def test_weight_rle_errors():
    with pytest.raises(MalformedStreamError):
        decode_weight_rle(RunLengthStream("weight_level", [Run(9, 1), EOR], 5))
    with pytest.raises(MalformedStreamError):
        decode_weight_rle(RunLengthStream("weight_level", [Run(0, 1)], 5))
    with pytest.raises(MalformedStreamError):
        decode_weight_rle(RunLengthStream("weight_level", [EOR, Run(0, 1)], 5))


def test_bitlayer_example_layers():
    s = encode_bitlayer_rle(to_digit_matrix(EXAMPLE, "naf"))
    assert s.layers == 6
    assert s.tokens == [
        Run(1, 1), EOR,                      # layer 5
        EOR,                                 # layer 4
        Run(2, 1), EOR,                      # layer 3
        Run(1, -1), EOR,                     # layer 2
        Run(4, 1),                           # layer 1, implicit end
        Run(0, 1), Run(0, -1), Run(0, -1), EOR,  # layer 0
    ]
    assert decode_bitlayer_rle(s).digits.tolist() == to_digit_matrix(EXAMPLE, "naf").digits.tolist()


def test_bitlayer_errors():
    with pytest.raises(MalformedStreamError):
        decode_bitlayer_rle(RunLengthStream("bit_layer", [Run(9, 1)], 5, 1, "naf"))
    with pytest.raises(MalformedStreamError):
        decode_bitlayer_rle(RunLengthStream("bit_layer", [Run(0, 1), EOR], 5, 2, "naf"))
    with pytest.raises(MalformedStreamError):
        decode_bitlayer_rle(RunLengthStream("bit_layer", [Run(0, 2), EOR], 5, 1, "naf"))
    with pytest.raises(MalformedStreamError):
        decode_bitlayer_rle(RunLengthStream("bit_layer", [EOR, EOR], 5, 1, "naf"))


def test_rle_round_trips():
    rng = np.random.default_rng(20)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        w = _random_sparse(rng, n, density=rng.random())
        s = encode_weight_rle(w)
        assert decode_weight_rle(s).tolist() == w.tolist()
        for mode in ("naf", "twos_complement"):
            plan = to_digit_matrix(w, mode)
            back = decode_bitlayer_rle(encode_bitlayer_rle(plan))
            assert back.mode == mode
            assert np.array_equal(back.digits, plan.digits)


def test_estimate_equiprobable_zrun():
    # four distinct zero-run symbols once each in a twos-complement (unsigned) layer
    s = RunLengthStream("bit_layer", [Run(0, 1), Run(1, 1), Run(2, 1), EOR], 10, 1, "twos_complement")
    assert estimate_bits(s) == pytest.approx(8.0)


def test_estimate_single_symbol_is_free():
    s = RunLengthStream("bit_layer", [EOR] * 5, 3, 5, "twos_complement")
    assert estimate_bits(s) == 0.0


def test_estimate_matches_independent_count():
    rng = np.random.default_rng(21)
    for _ in range(200):
        w = _random_sparse(rng, int(rng.integers(1, 300)), big=rng.random() < 0.3)
        s = encode_weight_rle(w)
        assert estimate_bits(s) == pytest.approx(entropy_from_tokens(s.tokens))
        for mode, signed in (("naf", True), ("twos_complement", False)):
            sb = encode_bitlayer_rle(to_digit_matrix(w, mode))
            assert estimate_bits(sb) == pytest.approx(
                entropy_from_tokens(sb.tokens, signed=signed, weight_level=False))


def test_estimate_escape_costs():
    s = encode_weight_rle([0] * 100 + [70])
    # one ESC zero-run (36 -> one chunk), one ESC magnitude (6 -> one chunk), one sign
    assert estimate_bits(s) == pytest.approx(2.0 + 16 + 16 + 1)


@pytest.mark.parametrize("w", [
    [0, 0, 5, 0, -3, 0, 0],
    [0, 0, 0, 0],
    [7],
    [0] * 70000 + [1],
    [100000, -3, 0, 64, -64, 63],
])
def test_range_round_trip_examples(w):
    s = encode_weight_rle(w)
    data = range_encode(s, q=int(np.abs(w).sum()), rho=0.5)
    out = range_decode_full(data)
    assert out.stream == s
    assert out.rho == 0.5 and out.q == int(np.abs(w).sum())


def test_range_round_trip_bitlayers():
    plan = to_digit_matrix(EXAMPLE, "naf")
    s = encode_bitlayer_rle(plan)
    back = range_decode(range_encode(s))
    assert back == s
    assert decode_bitlayer_rle(back).values() == list(EXAMPLE)


def test_range_round_trip_random():
    rng = np.random.default_rng(22)
    for i in range(1000):
        n = int(rng.integers(1, 120))
        w = _random_sparse(rng, n, density=rng.random(), big=i % 7 == 0)
        streams = [encode_weight_rle(w), encode_bitlayer_rle(to_digit_matrix(w, "naf")),
                   encode_bitlayer_rle(to_digit_matrix(w, "twos_complement")),
                   encode_bitlayer_rle(to_digit_matrix(np.abs(w), "binary"))]
        for s in streams:
            data = range_encode(s)
            assert range_decode(data) == s
            est = estimate_bits(s)
            bits = _payload_bits(data)
            assert est - 1e-6 <= bits <= est + 64 + build_model(s).table_bits()


def test_payload_bound_on_synthetic_layer():
    t = synth_laplacian(4608, 1.0, 1, shape=(3, 3, 16, 32))
    v = pvq_quantize_tensor(t, 1.5)
    for s in (encode_weight_rle(v.codes), encode_bitlayer_rle(to_digit_matrix(v.codes, "naf"))):
        data = range_encode(s, q=v.q, rho=v.rho)
        est = estimate_bits(s)
        bits = _payload_bits(data)
        assert est <= bits <= est + 64
        assert range_decode(data) == s


def test_header_layout():
    s = encode_weight_rle([0, 3])
    data = range_encode(s, q=3, rho=2.0)
    assert data[:4] == b"PVQB" and data[4] == 1 and data[5] == 0
    assert int.from_bytes(data[6:10], "little") == 2
    assert int.from_bytes(data[10:14], "little") == 3
    assert range_encode(encode_bitlayer_rle(to_digit_matrix([1], "naf")))[5] == 1


@pytest.mark.parametrize("mutate, where", [
    (lambda d: b"XXXX" + d[4:], "byte 0"),
    (lambda d: d[:4] + b"\x09" + d[5:], "byte 4"),
    (lambda d: d[:5] + b"\x07" + d[6:], "byte 5"),
    (lambda d: d[:30], "byte"),
])
def test_corrupt_header(mutate, where):
    data = range_encode(encode_weight_rle([0, 0, 5, 0, -3, 0, 0]))
    with pytest.raises(BitstreamError, match=where):
        range_decode(mutate(data))


def test_corrupt_payload_detected_or_differs():
    # every flipped payload byte either raises with an offset or changes the stream
    rng = np.random.default_rng(23)
    w = _random_sparse(rng, 400)
    s = encode_weight_rle(w)
    data = bytearray(range_encode(s))
    hs = header_size(bytes(data))
    seen_error = False
    for k in range(hs, len(data)):
        bad = bytearray(data)
        bad[k] ^= 0xFF
        try:
            out = range_decode(bytes(bad))
        except BitstreamError as exc:
            assert "byte" in str(exc)
            seen_error = True
        else:
            assert out != s
    assert seen_error


def test_digit_matrix_without_pulses_round_trips():
    plan = DigitMatrix(np.zeros((3, 4), dtype=np.int8), "naf")
    s = encode_bitlayer_rle(plan)
    assert s.tokens == [EOR] * 3
    assert range_decode(range_encode(s)) == s
