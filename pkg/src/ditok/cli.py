"""Command-line entry points for the workbench pipeline stages."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bpe as bpe_mod
from . import corpus_io as cio
from . import decode_eval as de
from . import fbank as fb
from . import harness as hz
from . import tokenizer as tok


def _cmd_synth(args):
    info = hz.make_synthetic_corpus(
        args.outdir, n_utts=args.n_utts, K_true=args.k_true, D=args.dim,
        frame_rate=args.frame_rate, seed=args.seed, lang=args.lang,
        dur_range=(args.dur_min, args.dur_max),
    )
    print(json.dumps(info))


def _cmd_fbank(args):
    utts = cio.read_manifest(args.manifest)
    out_utts = []
    for utt in utts:
        pcm = fb.read_wav(utt.source_path)
        feats = fb.compute_fbank(pcm)
        out = Path(args.outdir) / f"{utt.utt_id}.dsem"
        cio.write_embedding_file(feats, out)
        out_utts.append(cio.Utterance(utt.utt_id, utt.lang, str(out), utt.text,
                                      utt.duration_s))
    cio.write_manifest(out_utts, args.out_manifest)
    print(f"wrote {len(out_utts)} feature files to {args.outdir}")


def _cmd_kmeans_train(args):
    utts = cio.read_manifest(args.manifest)

    def load(u):
        return cio.read_embedding_file(u.source_path).frames

    sample = tok.subsample_for_training(utts, args.hours, args.seed, load)
    if sample.warned_empty:
        print("warning: empty manifest, nothing to train on", file=sys.stderr)
        return
    cb = tok.kmeans_train(sample.frames, args.units, seed=args.seed,
                          lang_scope=args.lang,
                          trained_on_hours=cio.total_duration_s(sample.utterances) / 3600.0)
    cio.write_codebook(cb, args.out)
    print(f"codebook K={cb.K} D={cb.D} inertia={cb.inertia_history[-1]:.4f} -> {args.out}")


def _cmd_tokenize(args):
    cb = cio.read_codebook(args.codebook)
    utts = cio.read_manifest(args.manifest)
    for utt in utts:
        seq = cio.read_embedding_file(utt.source_path)
        tokens = tok.assign(seq, cb)
        cio.write_token_file(tokens, Path(args.outdir) / f"{utt.utt_id}.dstk")
    print(f"tokenized {len(utts)} utterances -> {args.outdir}")


def _cmd_bpe_train(args):
    corpus = []
    for manifest in args.manifest:
        corpus.extend(u.text for u in cio.read_manifest(manifest))
    model = bpe_mod.bpe_train(corpus, args.size)
    model.save(args.out)
    print(f"bpe vocab {model.vocab_size} (target {args.size}) -> {args.out}")


def _cmd_train(args):
    cfg = hz.load_config(args.config)
    reports = hz.run_experiment(cfg)
    print(hz.wer_table(reports))


def _cmd_decode(args):
    cfg = hz.load_config(args.config)
    hyps = hz.decode_split(cfg, args.run, args.split, beam=args.beam)
    for h in hyps:
        print(json.dumps(h))


def _cmd_score(args):
    refs = {u.utt_id: u for u in cio.read_manifest(args.manifest)}
    per_lang: dict[str, list[int]] = {}
    with open(args.hyps) as fh:
        for line in fh:
            h = json.loads(line)
            utt = refs[h["utt_id"]]
            ref_words = bpe_mod.normalize(utt.text).split()
            r = de.wer(ref_words, h["hyp_text"].split())
            err, n = per_lang.setdefault(utt.lang, [0, 0])
            per_lang[utt.lang] = [err + r.errors, n + r.n_ref]
    print("lang  WER%")
    for lang, (err, n) in sorted(per_lang.items()):
        print(f"{lang}    {100.0 * err / n:.2f}")


def _cmd_report(args):
    reports = []
    for path in sorted(Path(args.runs).rglob("report.json")):
        reports.append(hz.RunReport.from_json(path.read_text()))
    if not reports:
        print("no reports found")
        return
    print(hz.wer_table(reports))
    table, ratios = hz.timing_report(reports)
    print()
    print(table)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ditok",
                                description="discrete-token ASR workbench")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--outdir", required=True)
    s.add_argument("--n-utts", type=int, default=200)
    s.add_argument("--k-true", type=int, default=5)
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--frame-rate", type=float, default=50.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lang", default="syn")
    s.add_argument("--dur-min", type=float, default=4.0)
    s.add_argument("--dur-max", type=float, default=6.0)
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("fbank", help="compute log-mel features from WAVs")
    s.add_argument("--manifest", required=True)
    s.add_argument("--outdir", required=True)
    s.add_argument("--out-manifest", required=True)
    s.set_defaults(func=_cmd_fbank)

    s = sub.add_parser("kmeans-train", help="train a codebook")
    s.add_argument("--manifest", required=True)
    s.add_argument("--units", type=int, required=True)
    s.add_argument("--lang", required=True, help="language code or 'shared'")
    s.add_argument("--hours", type=float, default=100.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_kmeans_train)

    s = sub.add_parser("tokenize", help="assign tokens with a codebook")
    s.add_argument("--codebook", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=_cmd_tokenize)

    s = sub.add_parser("bpe-train", help="train the BPE label tokenizer")
    s.add_argument("--manifest", action="append", required=True)
    s.add_argument("--size", type=int, required=True, help="e.g. 500 or 3500")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_bpe_train)

    s = sub.add_parser("train", help="run a training experiment from a config")
    s.add_argument("--config", required=True)
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("decode", help="emit hypothesis JSON lines for a run")
    s.add_argument("--config", required=True)
    s.add_argument("--run", required=True)
    s.add_argument("--split", default="test", choices=("dev", "test"))
    s.add_argument("--beam", type=int, default=0, help="0 = greedy")
    s.set_defaults(func=_cmd_decode)

    s = sub.add_parser("score", help="WER table from hypotheses + manifest")
    s.add_argument("--hyps", required=True)
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=_cmd_score)

    s = sub.add_parser("report", help="summarize run reports")
    s.add_argument("--runs", required=True, help="directory containing report.json files")
    s.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
