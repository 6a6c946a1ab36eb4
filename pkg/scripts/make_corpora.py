#!/usr/bin/env python3
"""Regenerate the bundled demo corpora (data/overfit50.jsonl, data/demo200.jsonl).

Both corpora are built from fixed four-word phrase inventories arranged in a
cycle; each document walks the cycle from its own offset. Every document
therefore shares long runs with its neighbors, which is what the copy
mechanism needs to learn from, and documents are long enough for the
32-token-prefix / 128-token-continuation protocol.
"""

from __future__ import annotations

import json
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "data"

# 20 phrases, 80 distinct words: no word appears twice, so segment boundaries
# have unambiguous local context.
OVERFIT_PHRASES = [
    "rivers bend toward north",
    "old maps fade slowly",
    "lanterns swing above doors",
    "copper bells ring twice",
    "quiet monks copy scrolls",
    "heavy rains flood valleys",
    "merchants trade salted fish",
    "pale stars guide sailors",
    "wooden carts climb hills",
    "warm winds cross plains",
    "stone towers watch roads",
    "young scribes mix ink",
    "iron gates close early",
    "dusty shelves hold ledgers",
    "silver coins change hands",
    "tired horses drink deeply",
    "sealed letters travel far",
    "bright flags mark borders",
    "patient weavers knot thread",
    "fresh bread cools overnight",
]

DEMO_EXTRA_PHRASES = [
    "glassblowers shape molten spheres",
    "falcons circle harvest fields",
    "miners follow narrow seams",
    "printers set lead type",
    "pilots read cloud banks",
    "farmers rotate spring crops",
    "masons square granite blocks",
    "clerks stamp customs forms",
    "divers surface near reefs",
    "shepherds count grey ewes",
    "smiths temper curved blades",
    "bakers knead dark dough",
    "archers string yew bows",
    "potters glaze round bowls",
    "tanners cure thick hides",
    "fishers mend torn nets",
    "coopers bind oak staves",
    "millers grind autumn grain",
    "chandlers dip beeswax candles",
    "glaziers cut tinted panes",
]


def cyclic_docs(phrases: list[str], n_docs: int, phrases_per_doc: int) -> list[str]:
    docs = []
    cycle = len(phrases)
    for i in range(n_docs):
        offset = i % cycle
        parts = [phrases[(offset + j) % cycle] for j in range(phrases_per_doc)]
        docs.append(" ".join(parts))
    return docs


def write_jsonl(path: Path, texts: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, text in enumerate(texts):
            fh.write(json.dumps({"id": i, "text": text}) + "\n")
    print(f"wrote {path} ({len(texts)} docs)")


def main() -> None:
    DATA.mkdir(exist_ok=True)
    overfit = cyclic_docs(OVERFIT_PHRASES, 50, 10)
    demo = cyclic_docs(OVERFIT_PHRASES + DEMO_EXTRA_PHRASES, 200, 10)
    write_jsonl(DATA / "overfit50.jsonl", overfit)
    write_jsonl(DATA / "demo200.jsonl", demo)
    # enlarged collection preset: the overfit corpus plus every demo document
    write_jsonl(DATA / "enlarged250.jsonl", overfit + demo)


if __name__ == "__main__":
    main()
