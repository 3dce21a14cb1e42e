"""CLI: extract --encoder <name> --in <wav> --out <emb1>."""

import argparse
import json
import sys

from .audio_io import AudioDecodeError
from .encoders import ENCODER_NAMES, ExtractorConfig, ModelUnavailable, extract


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="extract")
    parser.add_argument("--encoder", required=True,
                        help=", ".join(ENCODER_NAMES))
    parser.add_argument("--in", dest="audio", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    try:
        config = ExtractorConfig(encoder=args.encoder, device=args.device)
        extract(args.audio, args.out, config)
    except (ModelUnavailable, AudioDecodeError, FileNotFoundError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__,
                                    "message": str(exc)}}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
