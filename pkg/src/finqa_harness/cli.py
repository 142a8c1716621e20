"""Command line entry point: ``finqa-harness <verb>``.

Exit codes: 0 success, 1 configuration error, 2 empty run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .dataset import MalformedFile, load_dataset, skip_summary, write_normalized
from .genclient import GenerationError, Transcript
from .metrics import EmptyRun, render_report
from .pipeline import (REPORT_JSON, REPORT_MD, ConfigError, RunConfig, evaluate, make_client,
                       read_answers, report_for, run_split, write_answers)
from .serialize import EmptyTable, SerializationMethod, load_exemplar_asset, serialize_llm, serialize_naive

EXIT_OK, EXIT_CONFIG, EXIT_EMPTY = 0, 1, 2

log = logging.getLogger("finqa_harness")


def _config(args: argparse.Namespace, **forced: object) -> RunConfig:
    config = RunConfig.load(args.config, args.set)
    for key in ("dataset_path", "transcript_path", "output_dir", "split"):
        value = getattr(args, key, None)
        if value is not None:
            forced.setdefault(key, value)
    return replace(config, **forced) if forced else config


def _split(config: RunConfig):
    if not config.dataset_path:
        raise ConfigError("no dataset given (--dataset or dataset_path in the config)")
    return load_dataset(config.dataset_path, config.split)


def cmd_ingest(args: argparse.Namespace) -> int:
    split = load_dataset(args.input, args.split)
    write_normalized(split, args.out)
    print(json.dumps({"split": split.name, "examples": len(split), "skipped": len(split.skipped),
                      "skip_reasons": skip_summary(split)}, sort_keys=True))
    return EXIT_OK


def cmd_serialize(args: argparse.Namespace) -> int:
    config = _config(args)
    split = _split(config)
    method = SerializationMethod(args.method or config.serialization)
    client = None if method is SerializationMethod.NAIVE else make_client(config)
    asset = load_exemplar_asset(config.serialization_asset) if method is SerializationMethod.LLM_FEW_SHOT else None
    out = []
    for ex in split.subsample(config.subsample_size, config.seed).examples:
        try:
            if method is SerializationMethod.NAIVE:
                st = serialize_naive(ex.table)
            else:
                mode = "few_shot" if method is SerializationMethod.LLM_FEW_SHOT else "zero_shot"
                st = serialize_llm(ex.table, client, mode, config.gen, asset)
        except (EmptyTable, GenerationError) as e:
            out.append({"id": ex.id, "error": f"{type(e).__name__}: {e}"})
            continue
        out.append({"id": ex.id, "method": st.method.value, "table_hash": st.source_table_hash, "text": st.text})
    text = "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in out)
    if config.output_dir:
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        (Path(config.output_dir) / "serialized.jsonl").write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_answer(args: argparse.Namespace) -> int:
    config = _config(args)
    if not config.output_dir:
        raise ConfigError("no output directory (--out or output_dir in the config)")
    records = run_split(_split(config), config, make_client(config))
    Path(config.output_dir).mkdir(parents=True, exist_ok=True)
    write_answers(records, Path(config.output_dir) / "answers.jsonl")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config(args)
    if not config.output_dir:
        raise ConfigError("no output directory (--out or output_dir in the config)")
    report = evaluate(_split(config), config, make_client(config))
    print(render_report(report), end="")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    config = _config(args)
    records = read_answers(args.answers)
    if not records:
        raise EmptyRun(f"{args.answers} holds no records")
    transcript = "none"
    if config.transcript_path and Path(config.transcript_path).exists():
        transcript = Transcript(config.transcript_path).digest()
    report = report_for(records, config, transcript)
    out = Path(config.output_dir or Path(args.answers).parent)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_JSON).write_text(report.dumps(), encoding="utf-8")
    (out / REPORT_MD).write_text(render_report(report), encoding="utf-8")
    print(render_report(report), end="")
    return EXIT_OK


def cmd_record(args: argparse.Namespace) -> int:
    config = _config(args, client_mode="record")
    if not config.output_dir:
        raise ConfigError("no output directory (--out or output_dir in the config)")
    report = evaluate(_split(config), config, make_client(config))
    print(render_report(report), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finqa-harness", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="YAML/JSON run configuration")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. k=3 or gen.temperature=0.2")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_args(p: argparse.ArgumentParser, out_required: bool = False) -> None:
        p.add_argument("--dataset", dest="dataset_path", help="FinQA .json or normalized .jsonl")
        p.add_argument("--split", choices=("train", "validation", "test"))
        p.add_argument("--transcript", dest="transcript_path")
        p.add_argument("--out", dest="output_dir", required=out_required)

    p = sub.add_parser("ingest", help="validate a FinQA file and write the normalized layout")
    p.add_argument("input")
    p.add_argument("--split", default="validation", choices=("train", "validation", "test"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("serialize", help="serialize every table of a dataset")
    run_args(p)
    p.add_argument("--method", choices=[m.value for m in SerializationMethod])
    p.set_defaults(func=cmd_serialize)

    p = sub.add_parser("answer", help="run the pipeline and write answers.jsonl")
    run_args(p)
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("eval", help="run the pipeline and write answers plus reports")
    run_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="score an existing answers.jsonl")
    p.add_argument("answers")
    p.add_argument("--transcript", dest="transcript_path")
    p.add_argument("--out", dest="output_dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("record-transcript", help="run against the live endpoint, recording responses")
    run_args(p)
    p.set_defaults(func=cmd_record)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EmptyRun as e:
        print(f"empty run: {e}", file=sys.stderr)
        return EXIT_EMPTY
    except (ConfigError, FileNotFoundError, MalformedFile, GenerationError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
