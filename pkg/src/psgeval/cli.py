"""Command-line interface.

Exit codes: 0 on success, 1 when an input fails validation, 2 on usage errors.
Diagnostics go to stderr; data goes to files or stdout.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

from psgeval import ingest
from psgeval.errors import PsgEvalError
from psgeval.metrics import PER_IMAGE, PER_PREDICATE, evaluate_dataset
from psgeval.protocol import MULTI, SINGLE, convert_graph, normalize_single_mpo
from psgeval.report import dumps_report, report_csv
from psgeval.synth import SynthConfig, adversarial_predictor, generate_ground_truth, honest_predictor

THREADS_ENV = "PSGEVAL_THREADS"
_PROTOCOLS = {"single": (SINGLE,), "multi": (MULTI,), "both": (SINGLE, MULTI)}


class UsageError(Exception):
    pass


def _ratio(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1)")
    return value


def _ks(text: str) -> list[int]:
    try:
        ks = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not ks or min(ks) <= 0:
        raise argparse.ArgumentTypeError("k values must be positive")
    return ks


def _range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(",")
    return int(lo), int(hi or lo)


def resolve_threads(flag) -> int:
    if flag is not None:
        threads = flag
    else:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    if threads == 0:
        threads = os.cpu_count() or 1
    return threads


def _add_eval_flags(p: argparse.ArgumentParser):
    p.add_argument("--gt", required=True, help="ground-truth JSON file")
    p.add_argument("--k", type=_ks, default=[20, 50], help="comma-separated k values (default 20,50)")
    p.add_argument("--iou-threshold", type=_ratio, default=0.5)
    p.add_argument("--merge-threshold", type=_ratio, default=0.5)
    p.add_argument("--aggregation", choices=[PER_IMAGE, PER_PREDICATE], default=PER_IMAGE)
    p.add_argument("--threads", type=int, default=None, help=f"worker threads, 0 = all cores (env {THREADS_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psgeval", description="Panoptic scene graph evaluation under SingleMPO and MultiMPO.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    _add_eval_flags(p)
    p.add_argument("--pred", required=True, help="prediction JSON-lines file")
    p.add_argument("--protocol", choices=sorted(_PROTOCOLS), default="both")
    p.add_argument("--out", help="report JSON path (CSV written next to it); stdout when omitted")

    p = sub.add_parser("compare", help="SingleMPO vs MultiMPO deltas for several prediction files")
    _add_eval_flags(p)
    p.add_argument("--pred", action="append", default=[], help="prediction file (repeatable)")
    p.add_argument("--out", help="CSV path; stdout when omitted")

    p = sub.add_parser("normalize", help="rewrite predictions to satisfy SingleMPO")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--merge-threshold", type=_ratio, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("convert", help="explode SingleMPO predictions into the MultiMPO exploit form")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset with honest and adversarial predictions")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--images", type=int, default=20)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--predicates", type=int, default=6)
    p.add_argument("--nodes", type=_range, default=(2, 6), help="min,max nodes per image")
    p.add_argument("--triplets", type=_range, default=(1, 6), help="min,max triplets per image")
    p.add_argument("--mask-dup", type=int, default=3)
    p.add_argument("--rel-dup", type=int, default=3)
    p.add_argument("--jitter", type=int, default=1)
    p.add_argument("--label-noise", type=float, default=0.1)
    p.add_argument("--multi-predicate-rate", type=float, default=0.0, help="chance a GT pair gets two predicates")

    p = sub.add_parser("kernels", help="numeric kernel utilities")
    ksub = p.add_subparsers(dest="kernels_command", required=True)
    s = ksub.add_parser("selftest", help="run gradient and identity checks")
    s.add_argument("--seed", type=int, default=0)
    return parser


def _load(args, pred_path):
    header, gts = ingest.load_ground_truth(Path(args.gt))
    preds = ingest.load_predictions(Path(pred_path), header, gts)
    return header, gts, preds


def cmd_evaluate(args) -> int:
    header, gts, preds = _load(args, args.pred)
    report = evaluate_dataset(
        header, gts, preds, _PROTOCOLS[args.protocol], args.k, args.iou_threshold,
        args.merge_threshold, args.aggregation, resolve_threads(args.threads),
    )
    text, table = dumps_report(report), report_csv(report)
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        out.with_suffix(".csv").write_text(table)
    else:
        sys.stdout.write(text)
    return 0


def cmd_compare(args) -> int:
    if not args.pred:
        raise UsageError("compare needs at least one --pred file")
    header, gts = ingest.load_ground_truth(Path(args.gt))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["predictions", "metric", "k", "single", "multi", "delta"])
    for path in args.pred:
        preds = ingest.load_predictions(Path(path), header, gts)
        report = evaluate_dataset(
            header, gts, preds, (SINGLE, MULTI), args.k, args.iou_threshold,
            args.merge_threshold, args.aggregation, resolve_threads(args.threads),
        )
        if not report.results:
            continue
        single, multi = report.protocol(SINGLE), report.protocol(MULTI)
        for metric in ("mR", "mNgR", "R"):
            for k in report.ks:
                a, b = single.scores[metric][k], multi.scores[metric][k]
                delta = None if a is None or b is None else b - a
                writer.writerow([path, metric, k, *("" if v is None else repr(v) for v in (a, b, delta))])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_normalize(args) -> int:
    _, _, preds = _load(args, args.pred)
    ingest.save_predictions(args.out, [normalize_single_mpo(p, args.merge_threshold).graph for p in preds])
    return 0


def cmd_convert(args) -> int:
    header, _, preds = _load(args, args.pred)
    ingest.save_predictions(args.out, [convert_graph(p, header.num_predicates) for p in preds])
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        seed=args.seed, images=args.images, grid=args.grid, classes=args.classes,
        predicates=args.predicates, nodes=args.nodes, triplets=args.triplets,
        mask_duplicates=args.mask_dup, relation_duplicates=args.rel_dup,
        jitter=args.jitter, label_noise=args.label_noise, multi_predicate_rate=args.multi_predicate_rate,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header, gts = generate_ground_truth(cfg)
    ingest.save_ground_truth(out / "gt.json", header, gts)
    ingest.save_predictions(out / "honest.jsonl", honest_predictor(header, gts, cfg.jitter, cfg.label_noise, cfg.seed))
    ingest.save_predictions(
        out / "adversarial.jsonl",
        adversarial_predictor(header, gts, cfg.mask_duplicates, cfg.relation_duplicates, cfg.seed, cfg.uncertainty),
    )
    return 0


def cmd_kernels_selftest(args) -> int:
    from psgeval.selftest import run_selftest

    ok = True
    for name, passed, detail in run_selftest(args.seed):
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok &= passed
    return 0 if ok else 1


_COMMANDS = {
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "normalize": cmd_normalize,
    "convert": cmd_convert,
    "synth": cmd_synth,
    "kernels": cmd_kernels_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"psgeval: usage error: {exc}", file=sys.stderr)
        return 2
    except (PsgEvalError, ValueError, OSError) as exc:
        print(f"psgeval: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
