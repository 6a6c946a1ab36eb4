"""Repetition and diversity metrics over generated token sequences.

rep_n = 100 * (1 - unique n-grams / total n-grams); sequences shorter than n
(zero n-grams) score 0.0 by convention so degenerate desk-scale samples do not
poison corpus means. diversity = 100 * product over n in {2,3,4} of
(1 - rep_n / 100). Both depend only on the equality structure of the tokens.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

TOKENIZATION_NOTE = "whitespace tokens with ASCII punctuation split out"


def rep_n(tokens: Sequence, n: int) -> float:
    if n < 1:
        raise ValueError("n-gram order must be >= 1")
    total = len(tokens) - n + 1
    if total <= 0:
        return 0.0
    grams = {tuple(tokens[i : i + n]) for i in range(total)}
    return 100.0 * (1.0 - len(grams) / total)


def diversity_from_reps(rep_2: float, rep_3: float, rep_4: float) -> float:
    out = 100.0
    for r in (rep_2, rep_3, rep_4):
        out *= 1.0 - r / 100.0
    return out


def diversity(tokens: Sequence) -> float:
    return diversity_from_reps(rep_n(tokens, 2), rep_n(tokens, 3), rep_n(tokens, 4))


@dataclass
class EvalReport:
    rep_2: float
    rep_3: float
    rep_4: float
    diversity: float
    n_samples: int
    per_sample: list[dict] = field(default_factory=list)
    tokenization: str = TOKENIZATION_NOTE

    def to_dict(self) -> dict:
        return {
            "tokenization": self.tokenization,
            "n_samples": self.n_samples,
            "rep_2": self.rep_2,
            "rep_3": self.rep_3,
            "rep_4": self.rep_4,
            "diversity": self.diversity,
            "per_sample": self.per_sample,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def evaluate(samples: list[Sequence]) -> EvalReport:
    """Metrics per sample (continuation tokens only) plus corpus means.

    The corpus diversity is computed from the mean rep values, keeping the
    report internally consistent with the formula.
    """
    if not samples:
        raise ValueError("no samples to evaluate")
    per_sample = []
    for tokens in samples:
        r2, r3, r4 = rep_n(tokens, 2), rep_n(tokens, 3), rep_n(tokens, 4)
        per_sample.append(
            {
                "tokens": len(tokens),
                "rep_2": r2,
                "rep_3": r3,
                "rep_4": r4,
                "diversity": diversity_from_reps(r2, r3, r4),
            }
        )
    mean = lambda key: sum(s[key] for s in per_sample) / len(per_sample)
    r2, r3, r4 = mean("rep_2"), mean("rep_3"), mean("rep_4")
    return EvalReport(
        rep_2=r2,
        rep_3=r3,
        rep_4=r4,
        diversity=diversity_from_reps(r2, r3, r4),
        n_samples=len(per_sample),
        per_sample=per_sample,
    )


def tokens_from_trace_file(path: str | Path) -> list[str]:
    """Continuation token surfaces from a generation trace (one sample)."""
    tokens: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            surface = rec.get("surface", "")
            if surface:
                tokens.extend(surface.split(" "))
    return tokens


def tokens_from_text_file(path: str | Path) -> list[str]:
    """Whitespace-separated token surfaces from a plain-text sample."""
    return Path(path).read_text(encoding="utf-8").split()
