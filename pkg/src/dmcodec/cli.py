"""Command-line front end: ``dmcodec {encode,decode,metrics,synth,bench}``."""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import sys
import time
import warnings

from . import bitstream
from .codec import VARIANTS, EncoderConfig, decode, encode
from .errors import CodecError, InvalidConfig
from .io import atomic_write_bytes, load_sequence, save_sequence
from .metrics import distortion, rate_exact, sequence_rms, write_frame_csv
from .synth import SynthesisParams, synth_sequence

EXIT_USAGE = 2
EXIT_IO = 60


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _bits(text):
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or a comma-separated list, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty bit list")
    return vals[0] if len(vals) == 1 else tuple(vals)


def _sweep(text):
    key, _, vals = text.partition("=")
    if key != "kl" or not vals:
        raise argparse.ArgumentTypeError(f"sweep must look like kl=1,2,5, got {text!r}")
    try:
        return [int(v) for v in vals.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-integer k_l in {text!r}")


def _add_encoder_opts(p):
    p.add_argument("--variant", choices=VARIANTS, default=None,
                   help="default: blocks when --blocks > 1, else pca_qp")
    p.add_argument("--kl", type=int, default=None, help="retained coefficient rows (default: all)")
    p.add_argument("--bits", type=_bits, default=12, help="bits per row, one value or a list of k_l values")
    p.add_argument("--blocks", type=int, default=1, help="number of temporal blocks n_b")
    p.add_argument("--tmax", type=int, default=4, help="orthogonal iteration count per block")
    p.add_argument("--anchors", type=float, default=0.01, help="anchor fraction of the vertex count")
    p.add_argument("--anchor-bits", type=int, default=16)
    p.add_argument("--dict-bits", type=int, default=16)
    p.add_argument("--diff-bits", type=int, default=8)
    p.add_argument("--anchor-strategy", choices=("stride", "seeded_random"), default="stride")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalized-laplacian", action="store_true")
    p.add_argument("--raw", action="store_true", help="store every value as float64 (test mode)")


def _config(args, **override) -> EncoderConfig:
    variant = args.variant or ("blocks" if args.blocks > 1 else "pca_qp")
    kw = dict(variant=variant, k_l=args.kl, row_bits=args.bits, n_b=args.blocks, t_max=args.tmax,
              anchor_fraction=args.anchors, anchor_bits=args.anchor_bits, dict_bits=args.dict_bits,
              diff_bits=args.diff_bits, anchor_strategy=args.anchor_strategy, seed=args.seed,
              normalized_laplacian=args.normalized_laplacian, raw=args.raw)
    kw.update(override)
    return EncoderConfig(**kw)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dmcodec", description="Spectral compression of dynamic triangle meshes.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="compress a frame sequence")
    p.add_argument("--input", required=True, help="glob, printf pattern, or .json/.txt manifest")
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=("off", "obj"), default=None)
    _add_encoder_opts(p)

    p = sub.add_parser("decode", help="reconstruct frames from a stream")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output pattern, e.g. out/frame_%%04d.off")
    p.add_argument("--format", choices=("off", "obj"), default=None)

    p = sub.add_parser("metrics", help="compare two frame sequences")
    p.add_argument("--orig", required=True)
    p.add_argument("--recon", required=True)
    p.add_argument("--csv", default=None, help="per-frame RMS/NMSVE table")

    p = sub.add_parser("synth", help="write a procedural animation")
    p.add_argument("--shape", choices=("cylinder", "sphere-grid"), default="cylinder")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output pattern, e.g. seq/frame_%%04d.off")

    p = sub.add_parser("bench", help="rate/distortion sweep over k_l")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("off", "obj"), default=None)
    p.add_argument("--sweep", type=_sweep, default=[1, 2, 5, 10, 20])
    p.add_argument("--csv", default=None)
    p.add_argument("--timing", action="store_true", help="add an encode wall-clock column")
    _add_encoder_opts(p)
    return ap


def _cmd_encode(args):
    seq = load_sequence(args.input, args.format)
    comp = encode(seq, _config(args))
    sizes = {}
    data = bitstream.serialize(comp, sizes)
    atomic_write_bytes(args.output, data)
    rate = rate_exact(comp, sizes)
    print(json.dumps({"output": args.output, "bytes": len(data), "n": seq.n, "k": seq.k,
                      "bpvf": round(rate.q_s, 6)}))


def _cmd_decode(args):
    comp = bitstream.load(args.input)
    seq = decode(comp)
    paths = save_sequence(seq, args.output, args.format)
    print(json.dumps({"frames": len(paths), "first": paths[0]}))


def _cmd_metrics(args):
    orig = load_sequence(args.orig)
    recon = load_sequence(args.recon)
    rep = distortion(orig, recon)
    if args.csv:
        buf = _stdio.StringIO()
        write_frame_csv(rep, buf)
        atomic_write_bytes(args.csv, buf.getvalue().encode())
    print(json.dumps({"rms": rep.mean_rms, "nmsve": rep.mean_nmsve,
                      "rms_rel": sequence_rms(orig, recon) / max(orig.bbox_diagonal(), 1e-300)}))


def _cmd_synth(args):
    try:
        params = SynthesisParams(shape=args.shape, n_target=args.n, k=args.k, noise=args.noise, seed=args.seed)
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from None
    seq = synth_sequence(params)
    paths = save_sequence(seq, args.out)
    print(json.dumps({"frames": len(paths), "n": seq.n, "first": paths[0]}))


BENCH_COLUMNS = ("variant", "n_b", "k_l", "bits", "q", "q_a", "q_d", "aux", "q_s", "rms", "rms_rel", "nmsve")


def _cmd_bench(args):
    seq = load_sequence(args.input, args.format)
    diag = max(seq.bbox_diagonal(), 1e-300)
    limit = -(-seq.k // args.blocks)
    rows = []
    for k_l in args.sweep:
        if not 0 <= k_l <= limit:
            raise InvalidConfig(f"sweep value k_l={k_l} outside 0..{limit}")
        cfg = _config(args, k_l=k_l)
        t0 = time.perf_counter()
        comp = encode(seq, cfg)
        elapsed = time.perf_counter() - t0
        recon = decode(comp)
        rep = distortion(seq, recon)
        rate = rate_exact(comp)
        rms = sequence_rms(seq, recon)
        row = {"variant": cfg.variant, "n_b": cfg.n_b, "k_l": k_l,
               "bits": cfg.row_bits if isinstance(cfg.row_bits, int) else "/".join(map(str, cfg.row_bits)),
               "q": rate.q, "q_a": rate.q_a, "q_d": rate.q_d, "aux": rate.auxiliary, "q_s": rate.q_s,
               "rms": rms, "rms_rel": rms / diag, "nmsve": rep.mean_nmsve}
        if args.timing:
            row["encode_s"] = elapsed
        rows.append(row)
    cols = BENCH_COLUMNS + (("encode_s",) if args.timing else ())
    buf = _stdio.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({c: (repr(float(v)) if isinstance(v, float) else v) for c, v in row.items()})
    if args.csv:
        atomic_write_bytes(args.csv, buf.getvalue().encode())
    else:
        sys.stdout.write(buf.getvalue())


COMMANDS = {"encode": _cmd_encode, "decode": _cmd_decode, "metrics": _cmd_metrics,
            "synth": _cmd_synth, "bench": _cmd_bench}


def _fail(kind, code, message):
    line = " ".join(str(message).split())
    print(f"error: {kind}: {line}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    """Run one subcommand and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        return _fail("Usage", EXIT_USAGE, exc)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            COMMANDS[args.cmd](args)
    except CodecError as exc:
        return _fail(type(exc).__name__, exc.exit_code, exc)
    except OSError as exc:
        return _fail("IoError", EXIT_IO, exc)
    except (ValueError, TypeError) as exc:
        return _fail("InvalidConfig", InvalidConfig.exit_code, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
