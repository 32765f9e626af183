"""PVQ weight quantization, bit-layer MAC models and run-length weight compression."""

from .engines import (
    EngineReport,
    reference_dot,
    run_accumulator,
    run_blmac,
    run_naive_mac,
    run_serial_mac,
    run_zero_skip_mac,
)
from .pvq import PvqVector, pvq_quantize, pvq_quantize_tensor, pvq_reconstruct
from .rle import (
    EOR,
    Run,
    RunLengthStream,
    decode_bitlayer_rle,
    decode_weight_rle,
    encode_bitlayer_rle,
    encode_weight_rle,
    estimate_bits,
    range_decode,
    range_encode,
)
from .sdr import DigitMatrix, PulseStats, naf_encode, pulse_count, pulse_stats, to_digit_matrix
from .weights_io import LayerSpec, WeightTensor, load_tensor, save_tensor, synth_laplacian

__version__ = "0.1.0"
