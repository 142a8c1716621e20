"""Regenerate the checked-in fixture corpus and its replay transcript.

The corpus is 22 FinQA-layout records: 20 usable examples plus one with an
out-of-scope operator and one with a ragged table. Each usable example has a
scripted model answer chosen to exercise one behaviour of the parser and the
metrics (stated-result slips, extra steps, wrong operands, ...). A small
table-to-text set with reference serializations and scripted zero-shot and
few-shot responses is written alongside. All answers are recorded through the
normal code paths so the transcript keys match the prompts a replay run builds.

    python scripts/make_fixtures.py [--out tests/fixtures]
"""

from __future__ import annotations

import argparse
import json
from dataclasses import replace
from pathlib import Path

from finqa_harness.dataset import load_dataset
from finqa_harness.genclient import GenParams, RecordingClient, Transcript
from finqa_harness.pipeline import RunConfig, run_split
from finqa_harness.serialize import render_pipe_table, serialize_llm


def rec(ex_id, question, table, program, exe_ans, pre=(), post=()):
    return {
        "id": ex_id,
        "pre_text": list(pre),
        "post_text": list(post),
        "table": table,
        "qa": {"question": question, "program": program, "exe_ans": exe_ans},
    }


FILLER_PRE = [
    "the company operates in three reportable segments and reports in millions of dollars .",
    "management reviews segment results on a quarterly basis .",
]
FILLER_POST = [
    "amounts may not sum due to rounding .",
    "see note 12 for additional information on commitments and contingencies .",
]

RECORDS = [
    rec("ex01", "what was the change in net revenue from 2018 to 2019?",
        [["", "2019", "2018"], ["net revenue", "$ 5,829", "$ 5,735"], ["operating expenses", "4,100", "3,980"]],
        "subtract(5829, 5735)", 94.0, FILLER_PRE, FILLER_POST),
    rec("ex02", "what was the percentage change in total debt from 2016 to 2017?",
        [["", "2017", "2016"], ["total debt", "1,200", "1,000"], ["equity", "3,400", "3,150"]],
        "subtract(1200, 1000), divide(#0, 1000)", 0.2, FILLER_PRE),
    rec("ex03", "what is the ratio of cash to current liabilities in 2015?",
        [["( in millions )", "2015"], ["cash", "840"], ["current liabilities", "600"]],
        "divide(840, 600)", 1.4, post=FILLER_POST),
    rec("ex04", "what was the average operating income from 2012 to 2014?",
        [["", "2014", "2013", "2012"], ["operating income", "310", "275", "290"]],
        "add(310, 275), add(#0, 290), divide(#1, 3)", 291.66667, FILLER_PRE, FILLER_POST),
    rec("ex05", "what was the total cost of shares repurchased in 2010 , in millions?",
        [["", "2010"], ["shares repurchased ( millions )", "4.2"], ["average price per share", "$ 25.50"]],
        "multiply(4.2, 25.5)", 107.1,
        ["during 2010 the board authorized a new repurchase program ."]),
    rec("ex06", "what was the growth rate of backlog from 2013 to 2014?",
        [["", "2014", "2013"], ["backlog", "2,450", "2,100"]],
        "subtract(2450, 2100), divide(#0, 2100)", 0.16667, FILLER_PRE),
    rec("ex07", "what was the percentage increase in research and development expense from 2008 to 2009?",
        [["", "2009", "2008"], ["research and development", "918", "743"], ["selling and marketing", "1,204", "1,187"]],
        "subtract(918, 743), divide(#0, 743)", 0.23553, post=FILLER_POST),
    rec("ex08", "what was the average monthly rent expense in 2011?",
        [["", "2011"], ["rent expense", "3,350"], ["months", "12"]],
        "divide(3350, 12)", 279.16667, FILLER_PRE),
    rec("ex09", "what was the difference between the gross margin percentages of 2006 and 2005?",
        [["", "2006", "2005"], ["gross margin %", "15.2", "9.7"]],
        "subtract(15.2, 9.7)", 5.5, FILLER_PRE, FILLER_POST),
    rec("ex10", "what was the total value of the contracts , in thousands?",
        [["", "value"], ["contracts signed", "1,250"], ["average value per contract", "3.5"]],
        "multiply(1250, 3.5)", 4375.0,
        ["contract counts are presented in units and values in thousands ."]),
    rec("ex11", "what was the decrease in capital expenditures from 2012 to 2013?",
        [["", "2013", "2012"], ["capital expenditures", "520", "640"]],
        "subtract(640, 520)", 120.0, FILLER_PRE),
    rec("ex12", "what was the percentage change in long-term debt during 2012?",
        [["( in millions )", "december 31 2012", "december 31 2011"],
         ["long-term debt", "1,875", "2,010"], ["short-term debt", "1,950", "1,720"]],
        "subtract(1875, 2010), divide(#0, 2010)", -0.06716, post=FILLER_POST),
    rec("ex13", "what portion of total employees are in europe?",
        [["region", "employees"], ["europe", "45"], ["total", "300"]],
        "divide(45, 300)", 0.15, FILLER_PRE),
    rec("ex14", "what was the increase in interest expense from 2015 to 2016?",
        [["", "2016", "2015"], ["interest expense", "980", "870"]],
        "subtract(980, 870)", 110.0, post=FILLER_POST),
    rec("ex15", "what was the average of the dividends paid in 2017 and 2018?",
        [["", "2018", "2017"], ["dividends paid", "220", "180"]],
        "add(220, 180), divide(#0, 2)", 200.0, FILLER_PRE, FILLER_POST),
    rec("ex16", "what was the percentage change in the share price from 2013 to 2014?",
        [["", "2014", "2013"], ["closing share price", "$ 75.40", "$ 68.20"]],
        "subtract(75.4, 68.2), divide(#0, 68.2)", 0.10557, FILLER_PRE),
    rec("ex17", "what was the average sales per store in 2019?",
        [["", "2019"], ["net sales", "560"], ["stores", "7"]],
        "divide(560, 7)", 80.0, post=FILLER_POST),
    rec("ex18", "what was the change in revenue from 2018 to 2019?",
        [["", "2019", "2018"], ["revenue", "3,100", "2,800"]],
        "subtract(3100, 2800)", 300.0, FILLER_PRE),
    rec("ex19", "what was the percentage growth in total assets from 2010 to 2011?",
        [["", "2011", "2010"], ["total assets", "1,413", "1,238"], ["total liabilities", "802", "790"]],
        "subtract(1413, 1238), divide(#0, 1238)", 0.14136, FILLER_PRE, FILLER_POST),
    rec("ex20", "excluding the 300 restructuring charge , what was the growth of adjusted income relative to 2016?",
        [["", "2017", "2016"], ["income before taxes", "5,200", "4,100"]],
        "subtract(5200, 4100), subtract(#0, 300), divide(#1, 4100)", 0.19512,
        ["the 2017 results include a restructuring charge of $ 300 million ."]),
    rec("ex21", "what was the total of the three segments?",
        [["segment", "revenue"], ["a", "10"], ["b", "20"], ["c", "30"]],
        "table_sum(revenue, none)", 60.0),
    rec("ex22", "what was the change in headcount?",
        [["", "2019", "2018"], ["headcount", "900"]],
        "subtract(900, 850)", 50.0),
]

# scripted model output per example
ANSWERS = {
    "ex01": "Step 1: subtract(5829, 5735) = 94\nAnswer: 94",
    "ex02": "Step 1: subtract(1200, 1000) = 200\nStep 2: divide(#0, 1000) = 0.2\nAnswer: 20%",
    "ex03": "Step 1: divide(840, 600) = 1.4\nAnswer: 1.4",
    "ex04": "Step 1: add(310, 275) = 585\nStep 2: add(#0, 290) = 875\nStep 3: divide(#1, 3) = 291.67\nAnswer: 291.67",
    "ex05": "Step 1: multiply(4.2, 25.5) = 127.1\nAnswer: 127.1",
    "ex06": "Step 1: subtract(2450, 2100) = 350\nStep 2: divide(#0, 2100) = 0.35\nAnswer: 0.35",
    "ex07": "Step 1: subtract(918, 743) = 175\nStep 2: divide(#0, 743) = 0.31\nAnswer: 31%",
    "ex08": "Step 1: divide(3350, 12) = 290\nAnswer: 290",
    "ex09": "Step 1: subtract(15.2, 9.7) = 6.5\nAnswer: 6.5",
    "ex10": "Step 1: multiply(1250, 3.5) = 4375000000\nAnswer: 4375000000",
    "ex11": "Step 1: add(640, 520) = 1160\nAnswer: 1160",
    "ex12": "Step 1: subtract(1950, 2010) = -60\nStep 2: divide(#0, 2010) = -0.0299\nAnswer: -2.99%",
    "ex13": "Step 1: divide(45, 300) = 0.15\nStep 2: multiply(#0, 100) = 15\nAnswer: 15%",
    "ex14": ("Step 1: subtract(980, 870) = 110\nStep 2: divide(#0, 870) = 0.1264\n"
             "Step 3: multiply(#1, 100) = 12.64\nAnswer: 12.64"),
    "ex15": ("Step 1: add(220, 180) = 400\nStep 2: divide(#0, 2) = 200\n"
             "Step 3: subtract(#1, 0) = 200\nAnswer: 200"),
    "ex16": "Step 1: divide(75.4, 68.2) = 1.1056\nAnswer: 1.1056",
    "ex17": "The answer is about 80 based on the table.",
    "ex18": "Step 1: subtract(revenue_2019, 2800) = 300\nAnswer: 300",
    "ex19": "Step 1: subtract(1,413, 1,238) = 175\nStep 2: divide(#0, 1,238) = 0.1414\nAnswer: 14.1%",
    "ex20": ("Step 1: subtract(5200, 4100) = 1100\nStep 2: subtract(#0, 300) = 800\n"
             "Step 3: divide(#1, 4100) = 0.25\nAnswer: 25%"),
}

# table-to-text references and scripted zero-/few-shot serializations
SERIALIZATION_CASES = [
    {
        "id": "s1",
        "table": [["", "2019", "2018"], ["net revenue", "$ 5,829", "$ 5,735"], ["operating expenses", "4,100", "3,980"]],
        "reference": ("Net revenue was $5,829 million in 2019 and $5,735 million in 2018. "
                      "Operating expenses were 4,100 in 2019 and 3,980 in 2018."),
        "zero_shot": ("Here is the table in sentences:\n- In 2019 the company reported revenue of 5,829.\n"
                      "- Expenses for operations came to 4,100, compared with 3,980 one year earlier."),
        "few_shot": ("Net revenue was $5,829 in 2019 and $5,735 in 2018. "
                     "Operating expenses were 4,100 in 2019 and 3,980 in 2018."),
    },
    {
        "id": "s2",
        "table": [["( in millions )", "2015"], ["cash", "840"], ["current liabilities", "600"]],
        "reference": "In 2015, cash was $840 million and current liabilities were $600 million.",
        "zero_shot": "Sure! The table shows that the firm held 840 in cash while owing 600 in the short term.",
        "few_shot": "In 2015, cash was 840 million and current liabilities were 600 million.",
    },
    {
        "id": "s3",
        "table": [["region", "employees"], ["europe", "45"], ["total", "300"]],
        "reference": "Europe has 45 employees. The total number of employees is 300.",
        "zero_shot": "The staff count for the european region is 45 people, out of an overall workforce of 300.",
        "few_shot": "Europe has 45 employees, and there are 300 employees in total.",
    },
    {
        "id": "s4",
        "table": [["", "2014", "2013"], ["backlog", "2,450", "2,100"], ["orders", "3,020", "2,870"]],
        "reference": ("Backlog was 2,450 in 2014 and 2,100 in 2013. "
                      "Orders were 3,020 in 2014 and 2,870 in 2013."),
        "zero_shot": ("This table lists backlog and orders. The backlog figure rose to 2,450 from 2,100, "
                      "while orders grew from 2,870 to 3,020."),
        "few_shot": "Backlog was 2,450 in 2014 and 2,100 in 2013. Orders totaled 3,020 in 2014 and 2,870 in 2013.",
    },
]

CONFIG = {
    "serialization": "naive",
    "context_scope": "full",
    "max_tokens": 48,
    "overlap_tokens": 8,
    "k": 2,
    "template_id": "canonical-v1",
    "exemplars": 2,
    "gen": {"model_name": "llama-2-7b-chat", "temperature": 0.0, "max_output_tokens": 256},
    "client_mode": "replay-strict",
    "workers": 4,
    "split": "validation",
}


class ScriptedSerializer:
    """Answers a serialization prompt by matching the table it ends with."""

    def __init__(self, cases):
        self.by_table = {render_pipe_table(c["table"]): c for c in cases}

    def generate(self, prompt, params):
        table = prompt.rsplit("Table:\n", 1)[1].rsplit("\nSentences:", 1)[0]
        case = self.by_table[table]
        return case["few_shot" if "Example 1" in prompt else "zero_shot"]


class ScriptedModel:
    """Answers by matching the task question at the end of the prompt."""

    def __init__(self, answers_by_question: dict[str, str]):
        self.answers = answers_by_question

    def generate(self, prompt, params):
        question = prompt.rstrip("\n").rsplit("Question: ", 1)[1]
        return self.answers[question]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dataset = out / "finqa_fixture.json"
    dataset.write_text(json.dumps(RECORDS, indent=1) + "\n", encoding="utf-8")
    (out / "run_config.json").write_text(json.dumps(CONFIG, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    transcript_path = out / "transcript.jsonl"
    transcript_path.unlink(missing_ok=True)
    split = load_dataset(dataset, "validation")
    by_question = {r["qa"]["question"]: ANSWERS[r["id"]] for r in RECORDS if r["id"] in ANSWERS}
    config = RunConfig.from_dict(CONFIG)
    config = replace(config, gen=GenParams(**CONFIG["gen"]), workers=1)
    client = RecordingClient(ScriptedModel(by_question), Transcript(transcript_path))
    records = run_split(split, config, client)
    bad = [r.example_id for r in records if r.error]
    if bad:
        raise SystemExit(f"recording failed for {bad}")

    refs = [{k: c[k] for k in ("id", "table", "reference")} for c in SERIALIZATION_CASES]
    (out / "serialization_refs.json").write_text(json.dumps(refs, indent=1) + "\n", encoding="utf-8")
    ser_path = out / "serialization_transcript.jsonl"
    ser_path.unlink(missing_ok=True)
    ser_client = RecordingClient(ScriptedSerializer(SERIALIZATION_CASES), Transcript(ser_path))
    for case in SERIALIZATION_CASES:
        for mode in ("zero_shot", "few_shot"):
            serialize_llm(case["table"], ser_client, mode, config.gen)

    print(f"wrote {len(RECORDS)} records, {len(client.transcript)} transcript entries to {out}")


if __name__ == "__main__":
    main()
