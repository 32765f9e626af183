"""Command-line entry point: ``pvqsim <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import analysis
from .engines import AccumulatorOverflow, run_engine
from .pvq import (
    DegenerateInputError,
    PvqVector,
    parse_ratio,
    pvq_quantize_tensor,
    read_sidecar,
    write_sidecar,
)
from .rle import (
    BitstreamError,
    MalformedStreamError,
    decode_bitlayer_rle,
    decode_weight_rle,
    encode_bitlayer_rle,
    encode_weight_rle,
    range_decode_full,
    range_encode,
)
from .sdr import to_digit_matrix
from .weights_io import LayerSpec, TensorFormatError, WeightTensor, load_tensor, save_tensor, synth_laplacian

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

ENGINES = ("naive", "zeroskip", "accum", "blmac", "serial")
MODE_NAMES = {"binary": "binary", "twos": "twos_complement", "naf": "naf"}
DIRECTIONS = {"msb": "msb_first", "lsb": "lsb_first"}
POLICY_NAMES = {"counted": "shift_counted", "folded": "shift_folded"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _ratio(text: str) -> Fraction:
    try:
        return parse_ratio(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def _emit(rows, out: str | None, text: bool) -> None:
    """CSV to ``out`` when given (aligned text on stdout), else CSV or text on stdout."""
    csv_text = analysis.rows_to_csv(rows)
    if out:
        Path(out).write_text(csv_text)
        sys.stdout.write(analysis.render_text(rows))
    else:
        sys.stdout.write(analysis.render_text(rows) if text else csv_text)


def _load(path: str) -> WeightTensor:
    if not Path(path).exists():
        raise DataError(f"{path}: no such file")
    return load_tensor(path)


def _codes(t: WeightTensor, ratio, path: str | None = None) -> PvqVector:
    """Integer tensors are taken as codes as-is; real tensors are quantized.

    For integer codes, ``rho`` comes from a ``PATH.pvq`` sidecar when one exists.
    """
    if t.mode == "integer":
        codes = t.flat()
        q = int(np.abs(codes).sum())
        rho = 1.0
        sidecar = Path(f"{path}.pvq") if path else None
        if sidecar is not None and sidecar.exists():
            rho, side_q, side_n = read_sidecar(sidecar)
            if (side_q, side_n) != (q, codes.size):
                raise DataError(f"{sidecar}: q={side_q} n={side_n} does not match the codes "
                                f"(q={q} n={codes.size})")
        return PvqVector(rho, codes, q)
    return pvq_quantize_tensor(t, ratio)


# -- subcommands -----------------------------------------------------------------

def cmd_synth(args) -> None:
    shape = tuple(args.shape) if args.shape else (args.count,)
    count = int(np.prod(shape))
    t = synth_laplacian(count, args.scale, args.seed, shape=shape)
    save_tensor(t, args.out, args.format)


def cmd_quantize(args) -> None:
    t = _load(args.input)
    if t.mode != "real":
        raise DataError(f"{args.input}: quantize expects a real-valued tensor")
    v = pvq_quantize_tensor(t, args.q_over_n)
    save_tensor(WeightTensor(t.shape, v.codes, "integer"), args.out, args.format)
    sidecar = args.sidecar or args.out + ".pvq"
    write_sidecar(v, sidecar)
    sys.stdout.write(Path(sidecar).read_text())


def cmd_encode(args) -> None:
    v = _codes(_load(args.input), args.q_over_n, args.input)
    if args.mode == "weights":
        s = encode_weight_rle(v.codes)
    else:
        s = encode_bitlayer_rle(to_digit_matrix(v.codes, MODE_NAMES[args.plan]))
    blob = range_encode(s, q=v.q, rho=v.rho)
    Path(args.out).write_bytes(blob)
    sys.stdout.write(f"mode={s.mode} n={s.n} q={v.q} tokens={len(s.tokens)} bytes={len(blob)}\n")


def cmd_decode(args) -> None:
    path = Path(args.input)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    dec = range_decode_full(path.read_bytes())
    s = dec.stream
    if s.mode == "weight_level":
        codes = decode_weight_rle(s)
    else:
        codes = np.array(decode_bitlayer_rle(s).values(), dtype=np.int64)
    t = WeightTensor((max(s.n, 1),), codes if s.n else np.zeros(1, np.int64), "integer")
    if args.out:
        save_tensor(t, args.out, args.format)
        sys.stdout.write(f"rho={dec.rho!r} q={dec.q} n={s.n}\n")
    else:
        sys.stdout.write("# shape " + str(t.shape[0]) + "\n")
        sys.stdout.write(" ".join(str(int(c)) for c in t.data) + "\n")


def cmd_simulate(args) -> None:
    wt = _load(args.weights)
    xt = _load(args.inputs)
    if xt.mode != "integer":
        raise DataError(f"{args.inputs}: inputs must be an integer tensor")
    v = _codes(wt, args.q_over_n, args.weights)
    rho = v.rho if wt.mode == "real" or Path(f"{args.weights}.pvq").exists() else None
    x = xt.data.reshape(-1, xt.shape[-1]) if len(xt.shape) > 1 else xt.data.reshape(1, -1)
    if x.shape[1] != v.n:
        raise DataError(f"inputs have {x.shape[1]} values per run, weights have {v.n}")
    engines = args.engine or list(ENGINES)
    rows = []
    for r, xr in enumerate(x):
        for name in engines:
            rep = run_engine(name, v.codes, xr, mode=MODE_NAMES[args.mode],
                             direction=DIRECTIONS[args.direction],
                             policy=POLICY_NAMES[args.policy], rho=rho)
            row = {"run": r}
            row.update(rep.as_row())
            rows.append(row)
    _emit(rows, args.out, args.text)


def _layer_inputs(paths, ratio, first_ratio) -> list[tuple[str, PvqVector]]:
    out = []
    for i, p in enumerate(paths):
        r = first_ratio if i == 0 and first_ratio is not None else ratio
        out.append((Path(p).stem, _codes(_load(p), r, p)))
    return out


def cmd_stats(args) -> None:
    if args.verb == "pulses":
        if not 1 <= args.nb_max <= 24:
            raise UsageError("--nb-max must be in 1..24")
        _emit(analysis.pulse_table(args.nb_max), args.out, args.text)
    elif args.verb == "hist":
        rows = [analysis.weight_histogram(v.codes, label).row()
                for label, v in _layer_inputs(args.tensors, args.q_over_n, args.first_q_over_n)]
        _emit(rows, args.out, args.text)
    elif args.verb == "compress":
        rows = []
        for label, v in _layer_inputs(args.tensors, args.q_over_n, args.first_q_over_n):
            rows += [r.row() for r in analysis.compression_report(v.codes, label, v.q, v.rho)]
        _emit(rows, args.out, args.text)
    elif args.verb == "cycles":
        policy = POLICY_NAMES[args.policy]
        if args.layer:
            specs = []
            for item in args.layer:
                path, _, pos = item.partition(":")
                try:
                    positions = int(pos) if pos else 1
                except ValueError:
                    raise UsageError(f"bad --layer {item!r}, expected PATH[:POSITIONS]") from None
                specs.append(LayerSpec(_load(path), positions, Path(path).stem))
        else:
            specs = analysis.synthetic_network(args.seed, channel_divisor=args.channel_divisor)
        table = analysis.cycle_comparison(specs, args.q_over_n, args.first_q_over_n, policy)
        _emit(table.table_rows(), args.out, args.text)
        if args.averages:
            Path(args.averages).write_text(analysis.rows_to_csv(table.average_rows()))
        else:
            # second table on stdout, separated by a blank line
            sys.stdout.write("\n")
            sys.stdout.write(analysis.render_text(table.average_rows()) if args.text or args.out
                             else analysis.rows_to_csv(table.average_rows()))


def cmd_fir(args) -> None:
    if args.taps:
        t = _load(args.taps)
        taps = t.flat()
    else:
        try:
            taps = analysis.design_bandpass(args.num_taps, args.low, args.high, args.fs)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    rep = analysis.fir_compare(taps, args.q, args.fs, args.grid)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fir_compare.csv").write_text(analysis.rows_to_csv(rep.table_rows()))
    (out / "response_orig.csv").write_text(analysis.rows_to_csv(rep.response_rows("orig")))
    (out / "response_pvq.csv").write_text(analysis.rows_to_csv(rep.response_rows("pvq")))
    sys.stdout.write(analysis.render_text(rep.table_rows()))


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pvqsim", description="PVQ weights, bit-layer MACs and weight compression.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def fmt(sp):
        sp.add_argument("--format", choices=("text", "binary"), default=None,
                        help="tensor file format (default: by extension, .bin is binary)")

    def report(sp):
        sp.add_argument("--out", help="write CSV here and print an aligned table")
        sp.add_argument("--text", action="store_true", help="aligned table on stdout instead of CSV")

    sp = sub.add_parser("synth", help="write a synthetic Laplacian tensor")
    sp.add_argument("--count", type=_positive_int, default=4608)
    sp.add_argument("--shape", type=_positive_int, nargs="+")
    sp.add_argument("--scale", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    fmt(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("quantize", help="PVQ a real tensor into integer codes plus a sidecar")
    sp.add_argument("input")
    sp.add_argument("--q-over-n", type=_ratio, default=Fraction(3, 2))
    sp.add_argument("--out", required=True)
    sp.add_argument("--sidecar", help="default: OUT.pvq")
    fmt(sp)
    sp.set_defaults(func=cmd_quantize)

    sp = sub.add_parser("encode", help="run-length + range-code a tensor")
    sp.add_argument("input")
    sp.add_argument("--mode", choices=("weights", "bitlayers"), default="weights")
    sp.add_argument("--plan", choices=("naf", "twos"), default="naf")
    sp.add_argument("--q-over-n", type=_ratio, default=Fraction(3, 2))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="decode a compressed bitstream into integer codes")
    sp.add_argument("input")
    sp.add_argument("--out")
    fmt(sp)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("simulate", help="run dot-product engines")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--inputs", required=True)
    sp.add_argument("--engine", action="append", choices=ENGINES)
    sp.add_argument("--direction", choices=tuple(DIRECTIONS), default="msb")
    sp.add_argument("--mode", choices=tuple(MODE_NAMES), default="naf")
    sp.add_argument("--policy", choices=tuple(POLICY_NAMES), default="counted")
    sp.add_argument("--q-over-n", type=_ratio, default=Fraction(3, 2))
    report(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("stats", help="report tables")
    verbs = sp.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    v = verbs.add_parser("pulses", help="NAF pulse statistics per bit width")
    v.add_argument("--nb-max", type=int, default=24)
    report(v)
    for name, helptext in (("hist", "weight value bands"), ("compress", "compressed sizes")):
        v = verbs.add_parser(name, help=helptext)
        v.add_argument("tensors", nargs="+")
        v.add_argument("--q-over-n", type=_ratio, default=Fraction(3, 2))
        v.add_argument("--first-q-over-n", type=_ratio, default=Fraction(4))
        report(v)
    v = verbs.add_parser("cycles", help="per-layer cycle comparison")
    v.add_argument("--layer", action="append", metavar="PATH[:POSITIONS]")
    v.add_argument("--seed", type=int, default=1, help="seed for the synthetic network")
    v.add_argument("--channel-divisor", type=_positive_int, default=1)
    v.add_argument("--q-over-n", type=_ratio, default=Fraction(3, 2))
    v.add_argument("--first-q-over-n", type=_ratio, default=Fraction(4))
    v.add_argument("--policy", choices=tuple(POLICY_NAMES), default="counted")
    v.add_argument("--averages", help="write per-weight averages CSV here")
    report(v)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("fir", help="FIR filter operation counts and frequency responses")
    sp.add_argument("--taps", help="tap tensor; default designs a bandpass filter")
    sp.add_argument("--num-taps", type=_positive_int, default=197)
    sp.add_argument("--low", type=float, default=220.0)
    sp.add_argument("--high", type=float, default=400.0)
    sp.add_argument("--fs", type=float, default=2000.0)
    sp.add_argument("--q", type=_positive_int, default=999)
    sp.add_argument("--grid", type=_positive_int, default=1024)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_fir)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, TensorFormatError, BitstreamError, MalformedStreamError,
            DegenerateInputError, AccumulatorOverflow, OSError, ValueError) as exc:
        print(f"pvqsim: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
