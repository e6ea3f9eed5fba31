"""Answer checking: exact match, last-boxed extraction, option letters."""

from __future__ import annotations

import re
from dataclasses import dataclass

from seqmem.errors import ValidationError

EVALUATORS = ("exact_match", "boxed_extract", "option_letter")

_WS = re.compile(r"\s+")
_LETTER_FALLBACK = re.compile(r"answer is\s*\(?([A-Ja-j])\)?")


@dataclass(frozen=True)
class Feedback:
    correct: int
    evaluator_id: str
    detail: str = ""

    def __post_init__(self):
        if self.correct not in (0, 1):
            raise ValidationError("feedback correctness must be 0 or 1")


def normalize(text: str) -> str:
    return _WS.sub(" ", text.strip().strip("$").strip())


def last_boxed(text: str) -> str | None:
    """Content of the last balanced \\boxed{...}, or None."""
    start = text.rfind("\\boxed")
    while start != -1:
        i = start + len("\\boxed")
        while i < len(text) and text[i].isspace():
            i += 1
        if i < len(text) and text[i] == "{":
            depth = 0
            for j in range(i, len(text)):
                if text[j] == "{":
                    depth += 1
                elif text[j] == "}":
                    depth -= 1
                    if depth == 0:
                        return text[i + 1 : j]
        start = text.rfind("\\boxed", 0, start)
    return None


def evaluate_answer(prediction: str, task, evaluator: str = "exact_match") -> Feedback:
    target = task.target
    if evaluator == "exact_match":
        ok = normalize(prediction) == normalize(target)
        return Feedback(int(ok), evaluator)
    if evaluator == "boxed_extract":
        boxed = last_boxed(prediction)
        if boxed is None:
            return Feedback(0, evaluator, "no boxed answer")
        ok = _WS.sub("", boxed) == _WS.sub("", normalize(target))
        return Feedback(int(ok), evaluator, f"extracted {boxed!r}")
    if evaluator == "option_letter":
        boxed = last_boxed(prediction)
        if boxed is None:
            m = _LETTER_FALLBACK.search(prediction)
            if m:
                boxed = m.group(1)
            elif len(prediction.strip()) == 1:
                boxed = prediction.strip()
            else:
                return Feedback(0, evaluator, "no boxed answer")
        ok = normalize(boxed).upper() == normalize(target).upper()
        return Feedback(int(ok), evaluator, f"extracted {boxed!r}")
    raise ValidationError(f"unknown evaluator {evaluator!r}; choose from {', '.join(EVALUATORS)}")
