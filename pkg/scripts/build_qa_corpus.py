#!/usr/bin/env python3
"""Regenerate fixtures/qa_corpus.jsonl from the process documents.

Gold answers are computed by reading the document JSON fields directly, so
the corpus stays an independent cross-check of the query pipeline. Run from
the repository root:

    python scripts/build_qa_corpus.py
"""

from __future__ import annotations

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DOCS_DIR = ROOT / "fixtures" / "docs"
OUT_PATH = ROOT / "fixtures" / "qa_corpus.jsonl"

# The six exemplar questions keep their original phrasing (including the
# curly quotes in the applicability one) and lead the corpus.
EXEMPLARS = [
    ("overall_process", "single", "What is the complete assembly process for connector C901?"),
    ("applicability", "single", "Which products require the “laser marking” process for assembly?"),
    ("sequence_comparison", "multi", "What is the first assembly step for connector C901?"),
    ("sequence_linking", "multi", "What is the next step after the first assembly process of connector C901?"),
    ("requirement_query", "multi", "Which components and tools are required for the first assembly step of connector C901?"),
    (
        "relation_comparison",
        "multi",
        "In step 05 of inserting socket parts during connector C901 assembly, "
        "which part serves as the reference component?",
    ),
]

APPLICABILITY_PROCESSES = [
    "laser marking",
    "insert terminal pins",
    "crimp cable shield",
    "install locking clip",
    "apply sealing gel",
    "final continuity inspection",
    "ultrasonic welding",
    "place cover plate",
    "tighten retention screws",
    "install gasket",
    "press fit valve seat",
    "install rubber ring",
]

# Steps without a reference part used for the "no reference part" cases.
NO_REFERENCE_CASES = [("PRV01", 1), ("C902", 5)]


def display_name(catalog_id: str) -> str:
    return catalog_id.rsplit("/", 1)[-1].replace("_", " ").strip()


def question_name(doc: dict) -> str:
    name = doc.get("product_name") or doc["product_id"]
    return f"the {name}" if not name.startswith("connector") else name


def requirements_gold(step: dict) -> str:
    parts = [display_name(p) for p in sorted(step.get("parts", []))]
    tools = [display_name(t) for t in sorted(step.get("tools", []))]
    return (
        f"parts: {', '.join(parts) if parts else 'none'}; "
        f"tools: {', '.join(tools) if tools else 'none'}"
    )


def main() -> None:
    docs = [
        json.loads(path.read_text(encoding="utf-8"))
        for path in sorted(DOCS_DIR.glob("*.json"))
    ]
    docs.sort(key=lambda d: d["product_id"])
    by_id = {d["product_id"]: d for d in docs}

    items: list[dict] = []
    seen_questions: set[str] = set()

    def add(qtype: str, hops: str, question: str, gold: str) -> None:
        normalized = question.replace("“", '"').replace("”", '"')
        if normalized in seen_questions:
            return
        seen_questions.add(normalized)
        items.append(
            {
                "id": f"q{len(items) + 1:03d}",
                "type": qtype,
                "hops": hops,
                "question": question,
                "gold": gold,
            }
        )

    def gold_for(qtype: str, question: str) -> str:
        c901 = by_id["C901"]
        steps = c901["steps"]
        if qtype == "overall_process":
            return " -> ".join(s["name"] for s in steps)
        if qtype == "applicability":
            hits = [
                d.get("product_name") or d["product_id"]
                for d in docs
                if any(s["name"].casefold() == "laser marking" for s in d["steps"])
            ]
            return ", ".join(hits)
        if qtype == "sequence_comparison":
            return steps[0]["name"]
        if qtype == "sequence_linking":
            return steps[1]["name"]
        if qtype == "requirement_query":
            return requirements_gold(steps[0])
        if qtype == "relation_comparison":
            step = next(s for s in steps if s["order"] == 5)
            return display_name(step["reference_part"])
        raise ValueError(qtype)

    for qtype, hops, question in EXEMPLARS:
        add(qtype, hops, question, gold_for(qtype, question))

    # Overall process, first step, next-after-first and first-step
    # requirements for every product.
    for doc in docs:
        pname = question_name(doc)
        steps = doc["steps"]
        add(
            "overall_process",
            "single",
            f"What is the complete assembly process for {pname}?",
            " -> ".join(s["name"] for s in steps),
        )
        add(
            "sequence_comparison",
            "multi",
            f"What is the first assembly step for {pname}?",
            steps[0]["name"],
        )
        add(
            "sequence_linking",
            "multi",
            f"What is the next step after the first assembly process of {pname}?",
            steps[1]["name"] if len(steps) > 1 else "no successor",
        )
        add(
            "requirement_query",
            "multi",
            f"Which components and tools are required for the first assembly step of {pname}?",
            requirements_gold(steps[0]),
        )

    # Applicability over a fixed list of process names.
    for process in APPLICABILITY_PROCESSES:
        hits = [
            d.get("product_name") or d["product_id"]
            for d in docs
            if any(s["name"].casefold() == process.casefold() for s in d["steps"])
        ]
        add(
            "applicability",
            "single",
            f'Which products require the "{process}" process for assembly?',
            ", ".join(hits) if hits else "no products",
        )

    # Successor questions for the second, third and final step of each
    # product; the final step's gold is "no successor".
    for doc in docs:
        pname = question_name(doc)
        steps = doc["steps"]
        picks = {min(1, len(steps) - 1), min(2, len(steps) - 1), len(steps) - 1}
        for index in sorted(picks):
            step = steps[index]
            gold = steps[index + 1]["name"] if index + 1 < len(steps) else "no successor"
            add(
                "sequence_linking",
                "multi",
                f"What is the next step after {step['name']} in the assembly of {pname}?",
                gold,
            )

    # Requirements for the second and final step of each product.
    for doc in docs:
        pname = question_name(doc)
        steps = doc["steps"]
        for index in sorted({min(1, len(steps) - 1), len(steps) - 1}):
            step = steps[index]
            add(
                "requirement_query",
                "multi",
                f"Which components and tools are required for {step['name']} "
                f"in the assembly of {pname}?",
                requirements_gold(step),
            )

    # Reference-part questions: every step that declares one, plus two
    # steps that do not.
    for doc in docs:
        pname = question_name(doc)
        for step in doc["steps"]:
            if step.get("reference_part"):
                add(
                    "relation_comparison",
                    "multi",
                    f"In step {step['order']:02d} of {step['name']} during {pname} "
                    f"assembly, which part serves as the reference component?",
                    display_name(step["reference_part"]),
                )
    for product_id, order in NO_REFERENCE_CASES:
        doc = by_id[product_id]
        pname = question_name(doc)
        step = next(s for s in doc["steps"] if s["order"] == order)
        add(
            "relation_comparison",
            "multi",
            f"In step {step['order']:02d} of {step['name']} during {pname} "
            f"assembly, which part serves as the reference component?",
            "no reference part",
        )

    with OUT_PATH.open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item, ensure_ascii=False) + "\n")
    by_type: dict[str, int] = {}
    for item in items:
        by_type[item["type"]] = by_type.get(item["type"], 0) + 1
    print(f"wrote {len(items)} questions to {OUT_PATH}")
    for qtype, count in sorted(by_type.items()):
        print(f"  {qtype}: {count}")


if __name__ == "__main__":
    main()
