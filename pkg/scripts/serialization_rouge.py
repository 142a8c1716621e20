"""Score zero-shot and few-shot table serializations against reference texts.

Reads a JSON list of ``{"id", "table", "reference"}`` items, serializes every
table in both prompting modes (replayed from a transcript by default) and
prints mean ROUGE-1/2/L/Lsum per mode as a Markdown table.

    python scripts/serialization_rouge.py \\
        --refs tests/fixtures/serialization_refs.json \\
        --transcript tests/fixtures/serialization_transcript.jsonl
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from finqa_harness.genclient import GenParams, LiveClient, RecordingClient, ReplayClient, Transcript
from finqa_harness.metrics import RougeScores, mean_rouge
from finqa_harness.serialize import load_exemplar_asset, serialize_llm

MODES = (("Zeroshot", "zero_shot"), ("Fewshot", "few_shot"))


def score_modes(refs: list[dict], client, params: GenParams, asset=None) -> dict[str, RougeScores]:
    out = {}
    for label, mode in MODES:
        pairs = [(serialize_llm(r["table"], client, mode, params, asset).text, r["reference"]) for r in refs]
        out[label] = mean_rouge(pairs)
    return out


def render(scores: dict[str, RougeScores]) -> str:
    lines = ["| | rouge1 | rouge2 | rougeL | rougeLsum |", "|---|---|---|---|---|"]
    for label, s in scores.items():
        lines.append(f"| **{label}** | {s.rouge1:.4f} | {s.rouge2:.4f} | {s.rougeL:.4f} | {s.rougeLsum:.4f} |")
    return "\n".join(lines) + "\n"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--refs", required=True)
    ap.add_argument("--transcript", required=True)
    ap.add_argument("--model", default=GenParams().model_name)
    ap.add_argument("--max-output-tokens", type=int, default=256)
    ap.add_argument("--asset", help="exemplar asset file (default: the bundled one)")
    ap.add_argument("--record", action="store_true",
                    help="call the live endpoint for prompts missing from the transcript")
    args = ap.parse_args()

    refs = json.loads(Path(args.refs).read_text(encoding="utf-8"))
    params = GenParams(model_name=args.model, max_output_tokens=args.max_output_tokens)
    transcript = Transcript(args.transcript)
    client = RecordingClient(LiveClient.from_env(), transcript) if args.record else ReplayClient(transcript)
    print(render(score_modes(refs, client, params, load_exemplar_asset(args.asset))), end="")


if __name__ == "__main__":
    main()
