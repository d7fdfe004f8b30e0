"""Command-line front end.

Exit codes: 0 success (or Match), 2 Mismatch, 3 NoRecord, 4 DecodeFailed,
1 any operational error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .checkpoint import load_checkpoint, save_checkpoint
from .codec import decode_payload_bits, payload_to_id
from .corruption import PRESETS, CorruptionSpec, get_preset
from .errors import StegoError
from .evaluate import evaluate, format_table, write_report
from .images import load_dataset, load_image, save_png
from .train import TrainConfig, train
from .verify import (
    DEFAULT_MAX_SENTENCES,
    DEFAULT_THRESHOLD,
    Registry,
    embed_summary,
    read_bits,
    summarize_extractive,
    verify,
)

EXIT_ERROR = 1


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise StegoError(f"cannot read {path}: {exc}") from exc


def _suite(name: str) -> CorruptionSpec:
    if name in PRESETS:
        return get_preset(name)
    if Path(name).is_file():
        return CorruptionSpec.load(name)
    raise StegoError(f"unknown suite {name!r} (presets: {', '.join(PRESETS)}, or a spec file)")


def cmd_train(args) -> int:
    config = TrainConfig.load(args.config) if args.config else TrainConfig()
    if args.steps is not None:
        config = TrainConfig.from_dict({**config.to_dict(), "steps": args.steps}).validate()
    data = load_dataset(args.data, config.net.image_size)
    result = train(data, config, log_path=args.log, progress_every=args.progress)
    save_checkpoint(result.params, args.out)
    last = result.log[-1] if result.log else None
    if last is not None:
        print(f"trained {len(result.log)} steps; final batch bit accuracy {last['bit_acc']:.4f}")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_encode(args) -> int:
    params = load_checkpoint(args.ckpt)
    cover = load_image(args.image, params.image_size)
    summary = _read_text(args.summary_file).strip()
    store = Registry(args.registry)
    stego, entry = embed_summary(cover, summary, params, store, source_ref=args.source_ref or str(args.summary_file))
    save_png(stego, args.out)
    print(f"id {entry.id:016x} registered; stego image written to {args.out}")
    return 0


def cmd_decode(args) -> int:
    params = load_checkpoint(args.ckpt)
    bits = read_bits(load_image(args.image, params.image_size), params)
    _, corrected, _ = decode_payload_bits(bits)
    value, nbits = payload_to_id(bits)
    print("bits  " + "".join(str(int(b)) for b in bits))
    print(f"ecc   {corrected} bit(s) corrected")
    print(f"id    low {nbits} bits = {value:0{(nbits + 3) // 4}x}")
    if args.registry:
        store = Registry(args.registry)
        hits = store.find_low_bits(value, nbits)
        if not hits:
            print("registry: no record")
            return 3
        for e in hits:
            print(f"registry: {e.id:016x} {e.summary}")
    return 0


def cmd_eval(args) -> int:
    params = load_checkpoint(args.ckpt)
    images = load_dataset(args.data, params.image_size)
    suites = [_suite(s) for s in args.suite]
    reports = evaluate(
        params, images, suites,
        n_payloads_per_image=args.payloads,
        seed=args.seed,
        resolutions=args.resolutions,
    )
    write_report(reports, args.out_dir)
    print(format_table(reports))
    return 0


def cmd_verify(args) -> int:
    params = load_checkpoint(args.ckpt)
    claimed = _read_text(args.claimed_text) if args.claimed_text else None
    verdict = verify(args.image, claimed, params, Registry(args.registry),
                     threshold=args.threshold, max_sentences=args.max_sentences)
    print(f"status: {verdict.status.value}")
    if verdict.decoded_summary is not None:
        print(f"summary: {verdict.decoded_summary}")
    if verdict.similarity is not None:
        print(f"similarity: {verdict.similarity:.4f}")
    return verdict.exit_code


def cmd_summarize(args) -> int:
    print(summarize_extractive(_read_text(args.text_file), args.max_sentences))
    return 0


class _Parser(argparse.ArgumentParser):
    # argparse's own exit status 2 would read as Mismatch
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="newsstego", description="Hide news-summary ids in images and verify them.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train encoder and decoder on an image directory")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="JSON training config (defaults if omitted)")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--log", help="CSV training log path")
    t.add_argument("--steps", type=int, help="override the configured step count")
    t.add_argument("--progress", type=int, default=0, help="log every N steps (with -v)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("encode", help="register a summary and hide its id in an image")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--image", required=True)
    e.add_argument("--summary-file", required=True)
    e.add_argument("--registry", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--source-ref", help="article identifier stored with the entry")
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="read the hidden bits of an image")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--image", required=True)
    d.add_argument("--registry")
    d.set_defaults(func=cmd_decode)

    v = sub.add_parser("eval", help="bit-accuracy table over corruption suites")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--suite", nargs="+", default=["none", "digital", "print-sim"],
                   help="preset names or key = value spec files")
    v.add_argument("--out-dir", required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--payloads", type=int, default=1, help="payload draws per image")
    v.add_argument("--resolutions", type=int, nargs="*", help="resize-and-back sweep, e.g. 200 400 720")
    v.set_defaults(func=cmd_eval)

    f = sub.add_parser("verify", help="check an image's hidden summary against quoting text")
    f.add_argument("--ckpt", required=True)
    f.add_argument("--image", required=True)
    f.add_argument("--registry", required=True)
    f.add_argument("--claimed-text", help="file holding the quoting article")
    f.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    f.add_argument("--max-sentences", type=int, default=DEFAULT_MAX_SENTENCES)
    f.set_defaults(func=cmd_verify)

    s = sub.add_parser("summarize", help="extractive summary of a text file")
    s.add_argument("--text-file", required=True)
    s.add_argument("--max-sentences", type=int, default=DEFAULT_MAX_SENTENCES)
    s.set_defaults(func=cmd_summarize)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (StegoError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
