"""Command line front end: export a codec's latents to a container.

Exit codes: 0 success, 2 malformed input, unusable codec, or a runtime
whose output fails validation. The NVC_LOG environment variable sets the
logging level, matching the container toolkit.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from nvlcodec import CodecError

from .errors import AdapterError
from .export import export_sequence
from .mappings import RUNTIME_BUILDERS, resolve_codec

EXIT_OK = 0
EXIT_FORMAT = 2

log = logging.getLogger("nvladapter")


def _setup_logging():
    name = os.environ.get("NVC_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="nvla",
        description="Export latents and entropy tables from a codec runtime.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    export = sub.add_parser("export", help="run a codec over frames and write a container")
    export.add_argument("--codec", required=True, choices=sorted(RUNTIME_BUILDERS),
                        help="registered codec tag")
    export.add_argument("--checkpoint", required=True, help="pretrained weights file")
    export.add_argument("--frames", required=True, help="directory of video frame files")
    export.add_argument("--out", required=True, help="container file to write")
    return parser


def _frame_paths(directory):
    root = Path(directory)
    if not root.is_dir():
        raise AdapterError(f"frames directory {directory!r} does not exist")
    paths = sorted(p for p in root.iterdir() if p.is_file() and not p.name.startswith("."))
    if not paths:
        raise AdapterError(f"frames directory {directory!r} holds no frame files")
    return paths


def _cmd_export(args):
    paths = _frame_paths(args.frames)
    log.info("loading %s checkpoint %s", args.codec, args.checkpoint)
    runtime = resolve_codec(args.codec, args.checkpoint)
    manifest = runtime.default_manifest(paths)
    log.info("coding %d input frames", len(paths))
    data = export_sequence(runtime, paths, manifest)
    Path(args.out).write_bytes(data)
    print(f"wrote {args.out}: {manifest.frame_count} frames, {len(data)} bytes")
    print(f"codec: {manifest.codec_tag}, checkpoint: {manifest.checkpoint_id}")
    print(f"reported rate: {runtime.reported_rate_bits():.1f} bits")
    return EXIT_OK


def main(argv=None):
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        return _cmd_export(args)
    except (AdapterError, CodecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
