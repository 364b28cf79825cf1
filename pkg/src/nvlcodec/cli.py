"""Command line front end: synth, analyze, encode, decode, verify.

Exit codes: 0 success, 2 malformed input or configuration, 3 a
verification failed (invariant check or decode equality). The NVC_LOG
environment variable sets the logging level (DEBUG, INFO, ...).
"""

import argparse
import dataclasses
import logging
import os
import sys

from .analyze import analyze_container, render_table, write_csv
from .codec import DEFAULT_K, DEFAULT_S, decode_sequence, encode_sequence
from .container import (
    read_bitstream,
    read_latent_container,
    write_bitstream,
    write_latent_container,
)
from .errors import CodecError
from .synth import SynthConfig, drifted_sigma_preset, generate_container, matched_preset
from .verify import containers_match, render_verdicts, verify_container

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_VERIFY = 3

SYNTH_PRESETS = {
    "drifted-sigma": drifted_sigma_preset,
    "matched": matched_preset,
}

log = logging.getLogger("nvlcodec")


def _setup_logging():
    name = os.environ.get("NVC_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _read_file(path):
    with open(path, "rb") as fh:
        return fh.read()


def _write_file(path, data):
    with open(path, "wb") as fh:
        fh.write(data)


def _add_selection_flags(parser):
    parser.add_argument("--mixtures", type=int, default=DEFAULT_K, metavar="K",
                        help="mixture components per side-channel refit")
    parser.add_argument("--top-s-factorized", type=int, default=DEFAULT_S, metavar="S",
                        help="side channels eligible for replacement per stream")
    parser.add_argument("--top-s-hyper", type=int, default=DEFAULT_S, metavar="S",
                        help="scale groups eligible for replacement per stream")


# Synth flags that map straight onto SynthConfig fields. Defaults stay None
# so explicit flags can override a preset without clobbering its values.
_SYNTH_FIELDS = (
    ("--gop", "gop", str, "GOP preset (p-chain, hier-b, mixed) or I/P/B pattern"),
    ("--frames", "frames", int, "frame count"),
    ("--channels", "channels", int, "side channels per stream model"),
    ("--side-height", "side_height", int, "side tensor height"),
    ("--side-width", "side_width", int, "side tensor width"),
    ("--main-symbols", "main_symbols", int, "main latent elements per frame"),
    ("--scale-count", "scale_count", int, "size of the predefined scale set"),
    ("--side-alphabet", "side_alphabet", int, "side alphabet half width"),
    ("--main-alphabet", "main_alphabet", int, "main alphabet half width"),
    ("--sigma-ratio-side", "sigma_ratio_side", float,
     "model sigma over true sigma for side channels"),
    ("--sigma-ratio-main", "sigma_ratio_main", float,
     "model sigma over true sigma for main latents"),
    ("--mean-shift-side", "mean_shift_side", float, "true mean of side channels"),
    ("--temporal-drift", "temporal_drift", float,
     "fraction of latents redrawn per inter frame (0 = static scene)"),
    ("--seed", "seed", int, "generator seed"),
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="nvlc",
        description="Lossless entropy coding toolkit for neural video codec latents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic latent container")
    synth.add_argument("--output", required=True, help="path of the .nvl file to write")
    synth.add_argument("--preset", choices=sorted(SYNTH_PRESETS),
                       help="start from a shipped mismatch preset")
    for flag, _, kind, help_text in _SYNTH_FIELDS:
        synth.add_argument(flag, type=kind, default=None, help=help_text)
    synth.add_argument("--no-motion", action="store_true",
                       help="omit motion streams from inter frames")

    analyze = sub.add_parser("analyze", help="report ratio, gap, and saving per frame kind")
    analyze.add_argument("--input", required=True, help=".nvl file to analyze")
    analyze.add_argument("--csv", metavar="PATH", help="also write the report as CSV")
    _add_selection_flags(analyze)

    encode = sub.add_parser("encode", help="encode a latent container to a bitstream")
    encode.add_argument("--input", required=True, help=".nvl file to encode")
    encode.add_argument("--output", required=True, help="path of the .nvb file to write")
    _add_selection_flags(encode)

    decode = sub.add_parser("decode", help="decode a bitstream and check it against its source")
    decode.add_argument("--input", required=True, help=".nvb file to decode")
    decode.add_argument("--reference", required=True,
                        help=".nvl file supplying model tables, shapes, and frame kinds")
    decode.add_argument("--output", help="write the reconstructed latents as .nvl")

    verify = sub.add_parser("verify", help="run the invariant checks on a latent container")
    verify.add_argument("--input", required=True, help=".nvl file to verify")
    _add_selection_flags(verify)

    return parser


def _cmd_synth(args):
    if args.preset is not None:
        config = SYNTH_PRESETS[args.preset]()
    else:
        config = SynthConfig()
    overrides = {
        field: getattr(args, field)
        for _, field, _, _ in _SYNTH_FIELDS
        if getattr(args, field) is not None
    }
    if args.no_motion:
        overrides["motion"] = False
    config = dataclasses.replace(config, **overrides)
    log.info("generating %d frames (gop=%s, seed=%d)", config.frames, config.gop, config.seed)
    container = generate_container(config)
    data = write_latent_container(container)
    _write_file(args.output, data)
    print(f"wrote {args.output}: {container.frame_count} frames, {len(data)} bytes")
    return EXIT_OK


def _cmd_analyze(args):
    container = read_latent_container(_read_file(args.input))
    report = analyze_container(
        container, args.mixtures, args.top_s_factorized, args.top_s_hyper
    )
    print(render_table(report))
    if args.csv:
        write_csv(report, args.csv)
        print(f"\nwrote {args.csv}")
    return EXIT_OK


def _cmd_encode(args):
    container = read_latent_container(_read_file(args.input))
    log.info("encoding %d frames", container.frame_count)
    bitstream, stats = encode_sequence(
        container, args.mixtures, args.top_s_factorized, args.top_s_hyper
    )
    data = write_bitstream(bitstream)
    _write_file(args.output, data)
    print(f"wrote {args.output}: {len(data)} bytes")
    print(f"baseline bits: {stats.baseline_bits} (coded, learned tables)")
    print(f"achieved bits: {stats.achieved_bits} (coded, with table selection)")
    print(f"saving: {100.0 * stats.saving:.1f}%")
    estimate = sum(frame.estimate_bits for frame in stats.frames)
    print(f"learned-table estimate: {estimate:.1f} bits")
    return EXIT_OK


def _cmd_decode(args):
    bitstream = read_bitstream(_read_file(args.input))
    reference = read_latent_container(_read_file(args.reference))
    decoded = decode_sequence(bitstream, reference)
    if args.output:
        _write_file(args.output, write_latent_container(decoded))
        print(f"wrote {args.output}")
    if containers_match(reference, decoded):
        print(f"decoded {decoded.frame_count} frames, latents match the reference exactly")
        return EXIT_OK
    print(f"decoded {decoded.frame_count} frames, latents DIFFER from the reference")
    return EXIT_VERIFY


def _cmd_verify(args):
    container = read_latent_container(_read_file(args.input))
    results = verify_container(
        container, args.mixtures, args.top_s_factorized, args.top_s_hyper
    )
    print(render_verdicts(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


_COMMANDS = {
    "synth": _cmd_synth,
    "analyze": _cmd_analyze,
    "encode": _cmd_encode,
    "decode": _cmd_decode,
    "verify": _cmd_verify,
}


def main(argv=None):
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
