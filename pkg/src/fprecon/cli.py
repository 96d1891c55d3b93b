"""Command-line entry point.

Exit codes: 0 success/accept, 1 reject/no match, 2 usage or data error.
Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import math
import os
import sys
from pathlib import Path

from . import synth
from .attendance import Registry, load_query, parse_timestamp
from .errors import FingerprintError
from .imaging import equalize_histogram, read_pgm, segment, write_pgm
from .matching import attack_csv, attack_eval, decide, match
from .minutiae import extract_minutiae, read_template, write_template
from .orientation import field_from_image
from .phase import FrequencyMap, compose_and_render, reconstruct_phase

EXIT_OK, EXIT_REJECT, EXIT_ERROR = 0, 1, 2


def _write_text(path, text: str) -> None:
    Path(path).write_text(text)


def cmd_synth(args) -> int:
    field = synth.parse_field(args.field)
    spec = synth.random_spec(
        args.width, args.height, args.minutiae, args.seed, field_kind=field, freq=args.freq
    )
    image, truth = synth.generate(spec)
    write_pgm(image, args.out_image)
    write_template(truth, args.out_template)
    print(f"minutiae={len(truth)}")
    return EXIT_OK


def cmd_extract(args) -> int:
    image = read_pgm(args.image)
    if args.equalize:
        image = equalize_histogram(image)
    mask = segment(image, args.variance_threshold)
    t = extract_minutiae(image, mask, args.border_margin, args.min_separation)
    write_template(t, args.out)
    if args.dump_orientation:
        _write_text(args.dump_orientation, field_from_image(image, mask).dump())
    print(f"minutiae={len(t)}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    t = read_template(args.template)
    cont, spiral = reconstruct_phase(t, FrequencyMap(args.freq), args.full_frame)
    write_pgm(compose_and_render(cont, spiral), args.out)
    if args.dump_phase:
        mask = cont.mask.pixel_mask()
        psi = (cont.psi + spiral.psi) * mask
        _write_text(args.dump_phase, "\n".join(" ".join(f"{v:.4f}" for v in row) for row in psi) + "\n")
    return EXIT_OK


def cmd_match(args) -> int:
    result = match(read_template(args.ref), read_template(args.query), args.r0, args.a0)
    accepted = decide(result, args.threshold)
    print(f"score={result.score:.6f} paired={result.paired} decision={'accept' if accepted else 'reject'}")
    return EXIT_OK if accepted else EXIT_REJECT


def load_attack_dir(root: Path):
    """``root/<id>/original.txt`` plus any ``root/<id>/impression*.txt``."""
    originals, impressions = [], []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        orig = sub / "original.txt"
        if not orig.exists():
            continue
        originals.append(read_template(orig))
        impressions.append([read_template(p) for p in sorted(sub.glob("impression*.txt"))])
    return originals, impressions


def cmd_attack_eval(args) -> int:
    originals, impressions = load_attack_dir(Path(args.dir))
    reports = attack_eval(originals, impressions, args.threshold, FrequencyMap(args.freq))
    text = attack_csv(reports)
    if args.out:
        _write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def _registry(args) -> Registry:
    root = args.root or os.environ.get("REGISTRY_ROOT")
    if not root:
        raise SystemExit("error: --root not given and REGISTRY_ROOT is unset")
    return Registry(root)


def _now(args) -> dt.datetime:
    if args.now:
        return parse_timestamp(args.now)
    return dt.datetime.now(dt.timezone.utc)


def _query_source(args):
    return args.template if args.template else args.image


def cmd_enroll(args) -> int:
    reg = _registry(args)
    entry = reg.enroll(args.roll, load_query(_query_source(args)), _now(args))
    print(f"enrolled={entry.roll} minutiae={len(entry.template)}")
    return EXIT_OK


def cmd_identify(args) -> int:
    reg = _registry(args)
    hit = reg.identify(load_query(_query_source(args)), args.threshold)
    if hit is None:
        print("no-match")
        return EXIT_REJECT
    print(f"roll={hit[0]} score={hit[1]:.6f}")
    return EXIT_OK


def cmd_attend(args) -> int:
    reg = _registry(args)
    hit = reg.mark_attendance(_query_source(args), _now(args), args.threshold)
    if hit is None:
        print("no-match")
        return EXIT_REJECT
    print(f"roll={hit[0]} already_marked={'true' if hit[1] else 'false'}")
    return EXIT_OK


def cmd_report(args) -> int:
    reg = _registry(args)
    text = reg.report(dt.date.fromisoformat(args.date))
    if args.out:
        _write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def _add_query(p) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--template", help="minutiae template file")
    g.add_argument("--image", help="binary PGM fingerprint image")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fprecon", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="render a synthetic print and its ground-truth template")
    p.add_argument("--width", type=int, default=300)
    p.add_argument("--height", type=int, default=300)
    p.add_argument("--field", default="constant:0.0", help="constant:THETA or arch:AMP:WAVELENGTH")
    p.add_argument("--minutiae", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--freq", type=float, default=1.0 / 9.0)
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-template", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract a minutiae template from a PGM image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variance-threshold", type=float, default=100.0)
    p.add_argument("--border-margin", type=float, default=10.0)
    p.add_argument("--min-separation", type=float, default=5.0)
    p.add_argument("--equalize", action="store_true", help="histogram-equalize before extraction")
    p.add_argument("--dump-orientation", metavar="FILE")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("reconstruct", help="rebuild a grayscale print from a template")
    p.add_argument("--template", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--freq", type=float, default=1.0 / 9.0)
    p.add_argument("--full-frame", action="store_true")
    p.add_argument("--dump-phase", metavar="FILE")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("match", help="compare two templates")
    p.add_argument("--ref", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--r0", type=float, default=12.0)
    p.add_argument("--a0", type=float, default=math.pi / 6)
    p.add_argument("--threshold", type=float, default=0.25)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("attack-eval", help="type-I/type-II masquerade attack rates")
    p.add_argument("--dir", required=True)
    p.add_argument("--threshold", type=float, default=0.25)
    p.add_argument("--freq", type=float, default=1.0 / 9.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack_eval)

    p = sub.add_parser("enroll", help="enroll a roll number")
    p.add_argument("--root")
    p.add_argument("--roll", required=True)
    _add_query(p)
    p.add_argument("--now", help="UTC timestamp, ISO 8601 (default: current time)")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("identify", help="find the enrolled roll matching a print")
    p.add_argument("--root")
    _add_query(p)
    p.add_argument("--threshold", type=float, default=0.25)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("attend", help="identify a print and mark attendance")
    p.add_argument("--root")
    _add_query(p)
    p.add_argument("--now", help="UTC timestamp, ISO 8601 (default: current time)")
    p.add_argument("--threshold", type=float, default=0.25)
    p.set_defaults(func=cmd_attend)

    p = sub.add_parser("report", help="attendance report for one date")
    p.add_argument("--root")
    p.add_argument("--date", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (FingerprintError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
