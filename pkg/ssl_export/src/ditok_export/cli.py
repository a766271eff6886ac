"""`ditok-export`: dump model features for one audio file."""

from __future__ import annotations

import argparse
import json
import sys

from .exporter import ExportSpec, export_codec_tokens, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ditok-export",
                                description="export SSL/codec features to DSEM/DSTK")
    p.add_argument("--model", required=True, help="checkpoint id or local path")
    p.add_argument("--layer", type=int, default=21, help="1-based encoder layer (SSL path)")
    p.add_argument("--audio", required=True, help="mono 16-bit PCM WAV")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("dsem", "dstk"), default="dsem",
                   help="dsem for SSL hidden states, dstk for codec tokens")
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--bandwidth", type=float, default=6.0, help="codec kbps")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = ExportSpec(model_id=args.model, layer_index=args.layer, output=args.format,
                      sample_rate=args.sample_rate, bandwidth_kbps=args.bandwidth)
    if args.format == "dsem":
        info = export_embeddings(args.audio, spec, args.out)
    else:
        info = export_codec_tokens(args.audio, spec, args.out)
    print(json.dumps(info))
    return 0


if __name__ == "__main__":
    sys.exit(main())
