"""Command-line interface.

Exit codes: 0 on success, 1 for bad input data, 2 for configuration or
model errors.  Every flag may also be set through an environment variable
named ``CSLID_<FLAG>`` (e.g. ``CSLID_MODEL``, ``CSLID_JOBS``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterator

from .evaluation import (
    BaselineConfig,
    MalformedRecord,
    baseline_predict,
    ingest_token_labeled,
    load_label_map,
    preprocess,
    score,
    synthesize_cs,
    write_jsonl,
)
from .inference import EmptyInput, NoLabelsMatched, load_subset, predict_text
from .masklid import ConfigError, MaskLIDConfig, masklid
from .model_io import ModelFormatError, load_model

logger = logging.getLogger("cslid")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2
ENV_PREFIX = "CSLID_"


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _add_model_args(p):
    p.add_argument("--model", default=_env("model"), help="fastText .bin model")
    p.add_argument("--labels", default=_env("labels"), help="file of labels to restrict prediction to")


def _add_masklid_args(p):
    p.add_argument("--config", default=_env("config"), help="key = value config file")
    p.add_argument("--alpha", type=int, default=_env("alpha"))
    p.add_argument("--beta", type=int, default=_env("beta"))
    p.add_argument("--tau", type=int, default=_env("tau"))
    p.add_argument("--lambda", dest="lam", type=int, default=_env("lambda"))
    p.add_argument("--conf", type=float, default=_env("conf"), help="feature-set confidence")
    p.add_argument("--retry-factor", type=int, default=_env("retry_factor"), help="beta multiplier for the retry")
    p.add_argument("--step1-conf", type=float, default=_env("step1_conf"))


def _add_input_args(p):
    p.add_argument("--text", action="append", help="sentence to process (repeatable); default: stdin")
    p.add_argument("--input", default=_env("input"), help="input file, one sentence per line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cslid", description="Code-switching language identification")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="rank labels for each input line")
    _add_model_args(p)
    _add_input_args(p)
    p.add_argument("--top-k", type=int, default=_env("top_k", "5"))
    p.add_argument("--format", choices=["jsonl", "tsv"], default=_env("format", "tsv"))

    p = sub.add_parser("masklid", help="run MaskLID on each input line")
    _add_model_args(p)
    _add_masklid_args(p)
    _add_input_args(p)
    p.add_argument("--jobs", type=int, default=_env("jobs", "1"))
    p.add_argument("--format", choices=["jsonl", "tsv"], default=_env("format", "jsonl"))

    p = sub.add_parser("mine", help="emit only lines detected as code-switched")
    _add_model_args(p)
    _add_masklid_args(p)
    _add_input_args(p)
    p.add_argument("--jobs", type=int, default=_env("jobs", "1"))
    p.add_argument("--min-languages", type=int, default=2)
    p.add_argument("--format", choices=["jsonl", "tsv"], default=_env("format", "jsonl"))

    p = sub.add_parser("evaluate", help="score a labeled dataset")
    _add_model_args(p)
    _add_masklid_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--dataset-format", choices=["jsonl", "conll"], default="jsonl")
    p.add_argument("--label-map", help="tag-to-label map for conll datasets")
    p.add_argument("--preprocess", action="store_true", help="clean tags/emoji and drop short sentences")
    p.add_argument("--mode", choices=["masklid", "baseline"], default=_env("mode", "masklid"))
    p.add_argument("--threshold", type=float, default=0.3, help="baseline probability threshold")
    p.add_argument("--max-labels", type=int, default=2, help="baseline label cap")
    p.add_argument("--jobs", type=int, default=_env("jobs", "1"))
    p.add_argument("--format", choices=["jsonl", "tsv"], default=_env("format", "tsv"),
                   help="tsv table or a JSON document")
    p.add_argument("--output", help="write the report here; a .png figure is written next to it")
    p.add_argument("--figure", help="figure path (overrides the one derived from --output)")

    p = sub.add_parser("synth", help="build a synthetic code-switched corpus")
    p.add_argument("--corpus-a", required=True)
    p.add_argument("--corpus-b", required=True)
    p.add_argument("--label-a", required=True)
    p.add_argument("--label-b", required=True)
    p.add_argument("--min-fraction", type=float, default=0.3)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    return parser


def _config(args) -> MaskLIDConfig:
    try:
        base = MaskLIDConfig.from_file(args.config) if args.config else MaskLIDConfig()
        return MaskLIDConfig.from_mapping({
            "alpha": args.alpha, "beta": args.beta, "tau": args.tau, "lam": args.lam,
            "feature_set_confidence": args.conf, "beta_retry_factor": args.retry_factor,
            "step1_confidence": args.step1_conf,
        }, base=base)
    except ConfigError as exc:
        raise CLIError(f"invalid config: {exc}", EXIT_CONFIG) from None
    except OSError as exc:
        raise CLIError(f"cannot read config: {exc}", EXIT_CONFIG) from None


def _model(args):
    if not args.model:
        raise CLIError("--model is required", EXIT_CONFIG)
    try:
        model = load_model(args.model)
        subset, missing = load_subset(model, args.labels)
    except (OSError, ModelFormatError, NoLabelsMatched) as exc:
        raise CLIError(f"cannot load model: {exc}", EXIT_CONFIG) from None
    if missing:
        logger.warning("%d labels not in model: %s", len(missing), " ".join(missing[:10]))
    return model, subset


def _lines(args) -> Iterator[tuple[int, str]]:
    """Numbered non-blank input lines; undecodable lines are reported and skipped."""
    if args.text:
        for i, t in enumerate(args.text, 1):
            if t.strip():
                yield i, t.strip()
        return
    try:
        stream = open(args.input, "rb") if args.input else sys.stdin.buffer
    except OSError as exc:
        raise CLIError(f"cannot read input: {exc}", EXIT_INPUT) from None
    with stream:
        for i, raw in enumerate(stream, 1):
            try:
                line = raw.decode("utf-8").strip()
            except UnicodeDecodeError as exc:
                logger.error("line %d: not valid UTF-8 (%s), skipped", i, exc)
                continue
            if line:
                yield i, line


def _ordered_map(fn, items, jobs):
    if jobs <= 1:
        yield from map(fn, items)
        return
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        # bounded window keeps memory flat on long streams, order preserved
        window = []
        for item in items:
            window.append(pool.submit(fn, item))
            if len(window) >= jobs * 16:
                yield window.pop(0).result()
        for fut in window:
            yield fut.result()


def _out(text):
    sys.stdout.write(text + "\n")


def cmd_predict(args) -> int:
    model, subset = _model(args)
    for lineno, line in _lines(args):
        try:
            ranked = predict_text(line, model, subset).topk(args.top_k)
        except EmptyInput:
            continue
        if args.format == "jsonl":
            _out(json.dumps({"line": lineno, "labels": [l for l, _ in ranked],
                             "probs": [p for _, p in ranked]}, ensure_ascii=False))
        else:
            _out("\t".join([str(lineno)] + [f"{l}\t{p:.6f}" for l, p in ranked]))
    return EXIT_OK


def mine_record(lineno: int, text: str, result) -> dict:
    return {"line": lineno, "text": text, **result.to_dict()}


def _masklid_records(args, min_languages=0):
    cfg = _config(args)
    model, subset = _model(args)

    def run(item):
        lineno, line = item
        return mine_record(lineno, line, masklid(line, model, subset, cfg))

    for rec in _ordered_map(run, _lines(args), args.jobs):
        if len(rec["labels"]) >= min_languages:
            if args.format == "jsonl":
                _out(json.dumps(rec, ensure_ascii=False))
            else:
                _out(f"{rec['line']}\t{','.join(rec['labels'])}\t{rec['termination']}\t{rec['text']}")
    return EXIT_OK


def cmd_masklid(args) -> int:
    return _masklid_records(args)


def cmd_mine(args) -> int:
    return _masklid_records(args, min_languages=args.min_languages)


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    try:
        bcfg = BaselineConfig(args.threshold, args.max_labels)
    except ValueError as exc:
        raise CLIError(f"invalid baseline config: {exc}", EXIT_CONFIG) from None
    model, subset = _model(args)
    try:
        label_map = load_label_map(args.label_map) if args.label_map else None
        data = ingest_token_labeled(args.dataset, args.dataset_format, label_map)
    except MalformedRecord as exc:
        raise CLIError(str(exc), EXIT_INPUT) from None
    except OSError as exc:
        raise CLIError(f"cannot read dataset: {exc}", EXIT_INPUT) from None
    if args.preprocess:
        data = preprocess(data)

    if args.mode == "masklid":
        def run(g):
            try:
                return frozenset(masklid(g.text, model, subset, cfg).labels)
            except EmptyInput:
                return frozenset()
    else:
        def run(g):
            try:
                return baseline_predict(g.text, model, subset, bcfg)
            except EmptyInput:
                return frozenset()

    preds = list(_ordered_map(run, data, args.jobs))
    report = score(preds, data)
    text = report.to_json() if args.format == "jsonl" else report.to_tsv().rstrip("\n")
    figure = args.figure
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
        figure = figure or str(Path(args.output).with_suffix(".png"))
    else:
        _out(text)
    if figure:
        from .plotting import plot_report

        plot_report(report, figure, title=f"{Path(args.dataset).stem} ({args.mode})")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        a = Path(args.corpus_a).read_text(encoding="utf-8").splitlines()
        b = Path(args.corpus_b).read_text(encoding="utf-8").splitlines()
        out = synthesize_cs(a, b, (args.label_a, args.label_b), args.min_fraction, args.count, args.seed)
    except (OSError, ValueError) as exc:
        raise CLIError(str(exc), EXIT_INPUT) from None
    write_jsonl(out, args.output)
    return EXIT_OK


COMMANDS = {
    "predict": cmd_predict,
    "masklid": cmd_masklid,
    "mine": cmd_mine,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except CLIError as exc:
        print(f"cslid: {exc}", file=sys.stderr)
        return exc.code
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
