"""Dataset ingestion, sentence segmentation, and tokenization.

Everything in here is a pure function over immutable inputs, so callers may
fan out over instances freely.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, Sequence

from ffci.errors import DataError

Span = tuple[int, int]

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_TERMINATORS = ".!?"
# Characters that may trail a terminator and still belong to the sentence.
_CLOSERS = "\"')]}’”"
_OPEN_QUOTES = "\"'‘“([{"


def _load_abbreviations() -> frozenset[str]:
    text = resources.files("ffci.data").joinpath("abbreviations.txt").read_text("utf-8")
    out = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.add(line)
    return frozenset(out)


ABBREVIATIONS = _load_abbreviations()


@dataclass(frozen=True)
class EvalInstance:
    """One (article, reference summary, system summary) tuple to be scored."""

    id: str
    article: str
    reference: str
    system_summary: str
    system_name: str

    def __post_init__(self):
        if not self.article:
            raise DataError(f"instance {self.id!r}: article must be non-empty")
        if not self.reference:
            raise DataError(f"instance {self.id!r}: reference must be non-empty")
        # system_summary may be empty: degenerate outputs are scored, not rejected


@dataclass(frozen=True)
class SegmentedText:
    """Text plus its sentence/EDU decomposition with stable character spans.

    Spans index into ``raw``; they are non-overlapping and in document order.
    Every EDU span lies inside exactly one sentence span.
    """

    raw: str
    sentences: tuple[Span, ...]
    edus: tuple[Span, ...] = ()
    tokens_per_sentence: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        _check_spans(self.raw, self.sentences, "sentence")
        _check_spans(self.raw, self.edus, "edu")
        for span in self.edus:
            parents = [s for s in self.sentences if s[0] <= span[0] and span[1] <= s[1]]
            if len(parents) != 1:
                raise DataError(f"edu span {span} not contained in exactly one sentence")
        if self.tokens_per_sentence and len(self.tokens_per_sentence) != len(self.sentences):
            raise DataError("tokens_per_sentence length must match sentence count")

    def sentence_texts(self) -> list[str]:
        return [self.raw[a:b] for a, b in self.sentences]

    def edu_texts(self) -> list[str]:
        return [self.raw[a:b] for a, b in self.edus]

    def with_edus(self, edus: Sequence[Span]) -> "SegmentedText":
        return SegmentedText(self.raw, self.sentences, tuple(edus), self.tokens_per_sentence)


def _check_spans(raw: str, spans: Sequence[Span], kind: str) -> None:
    prev_end = 0
    for a, b in spans:
        if not (0 <= a < b <= len(raw)):
            raise DataError(f"{kind} span ({a}, {b}) outside text of length {len(raw)}")
        if a < prev_end:
            raise DataError(f"{kind} spans overlap or are out of order at ({a}, {b})")
        prev_end = b


@dataclass(frozen=True)
class AnnotationRecord:
    """One crowd-worker judgement on a 0-100 slider."""

    item_id: str
    worker_id: str
    aspect: str  # focus | coverage | ic
    raw_score: float
    is_control: bool = False
    control_expected: Optional[float] = None

    def __post_init__(self):
        if self.aspect not in ("focus", "coverage", "ic"):
            raise DataError(f"unknown aspect {self.aspect!r}")
        if not 0.0 <= self.raw_score <= 100.0:
            raise DataError(
                f"raw_score {self.raw_score} outside [0, 100] for item {self.item_id!r}")
        if self.is_control != (self.control_expected is not None):
            raise DataError(
                f"item {self.item_id!r}: control_expected must be present iff is_control")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on word/punctuation boundaries.

    No stemming, no stopword removal; duplicates are preserved so counts keep
    multiset semantics.
    """
    return _TOKEN_RE.findall(text.lower())


def _is_abbreviation(text: str, period_idx: int) -> bool:
    """True when the period at ``period_idx`` ends an abbreviation or initial."""
    j = period_idx
    start = j
    while start > 0 and (text[start - 1].isalnum() or text[start - 1] == "."):
        start -= 1
    word = text[start:j].lower()
    if not word:
        return False
    if word in ABBREVIATIONS or word.rstrip(".") in ABBREVIATIONS:
        return True
    # single-letter initials such as "J." in "J. Smith" (uppercase only)
    return len(word) == 1 and text[start].isupper()


def segment_sentences(text: str) -> SegmentedText:
    """Split text into sentence spans with a deterministic rule-based splitter.

    A boundary is a run of ``. ! ?`` (plus closing quotes/brackets) followed by
    whitespace and an uppercase letter or opening quote, unless the period
    belongs to a listed abbreviation.  Trailing text without a terminator forms
    a final sentence.  Joining the spans with the whitespace between them
    reconstructs the input.
    """
    spans: list[Span] = []
    n = len(text)
    start = 0

    def flush(end: int) -> int:
        nonlocal start
        a = start
        while a < end and text[a].isspace():
            a += 1
        if a < end:
            spans.append((a, end))
        start = end
        return end

    i = 0
    while i < n:
        ch = text[i]
        if ch in _TERMINATORS:
            if ch == "." and _is_abbreviation(text, i):
                i += 1
                continue
            j = i
            while j + 1 < n and text[j + 1] in _TERMINATORS + _CLOSERS:
                j += 1
            k = j + 1
            if k >= n:
                flush(j + 1)
                i = j + 1
                continue
            if text[k].isspace():
                while k < n and text[k].isspace():
                    k += 1
                if k < n and (text[k].isupper() or text[k] in _OPEN_QUOTES):
                    flush(j + 1)
            i = j + 1
        else:
            i += 1

    # trailing material without a terminator
    a = start
    while a < n and text[a].isspace():
        a += 1
    b = n
    while b > a and text[b - 1].isspace():
        b -= 1
    if b > a:
        spans.append((a, b))

    tokens = tuple(tuple(tokenize(text[a:b])) for a, b in spans)
    return SegmentedText(raw=text, sentences=tuple(spans), tokens_per_sentence=tokens)


def capitalized_entities(sentence: str) -> list[str]:
    """Named-entity stand-in: maximal runs of capitalized alphabetic tokens.

    Used as the offline fallback when no entity provider is configured.
    """
    words = sentence.split()
    entities: list[str] = []
    run: list[str] = []
    for w in words:
        core = w.strip("\"'().,;:!?‘’“”")
        if core and core[0].isupper() and core.replace("-", "").replace("'", "").isalpha():
            run.append(core)
        else:
            if run:
                entities.append(" ".join(run))
            run = []
    if run:
        entities.append(" ".join(run))
    return entities


_INSTANCE_KEYS = {"id", "article", "reference", "system_summary", "system_name"}


def load_dataset(path, format: str = "jsonl") -> list[EvalInstance]:
    """Read a JSONL dataset file, preserving file order and rejecting duplicate ids."""
    if format != "jsonl":
        raise DataError(f"unsupported dataset format {format!r}")
    instances: list[EvalInstance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or not _INSTANCE_KEYS.issubset(obj):
                missing = _INSTANCE_KEYS - set(obj) if isinstance(obj, dict) else _INSTANCE_KEYS
                raise DataError(f"{path}: line {lineno}: missing keys {sorted(missing)}")
            try:
                inst = EvalInstance(
                    id=str(obj["id"]),
                    article=obj["article"],
                    reference=obj["reference"],
                    system_summary=obj["system_summary"],
                    system_name=str(obj["system_name"]),
                )
            except DataError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            if inst.id in seen:
                raise DataError(f"{path}: line {lineno}: duplicate id {inst.id!r}")
            seen.add(inst.id)
            instances.append(inst)
    return instances


def write_dataset(instances: Iterable[EvalInstance], path) -> None:
    """Inverse of load_dataset: one JSON object per line, UTF-8, LF endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(json.dumps({
                "id": inst.id,
                "article": inst.article,
                "reference": inst.reference,
                "system_summary": inst.system_summary,
                "system_name": inst.system_name,
            }, ensure_ascii=False) + "\n")


def load_annotations(path) -> list[AnnotationRecord]:
    """Read crowd-annotation records from JSONL."""
    records: list[AnnotationRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            try:
                records.append(AnnotationRecord(
                    item_id=str(obj["item_id"]),
                    worker_id=str(obj["worker_id"]),
                    aspect=obj["aspect"],
                    raw_score=float(obj["raw_score"]),
                    is_control=bool(obj.get("is_control", False)),
                    control_expected=(None if obj.get("control_expected") is None
                                      else float(obj["control_expected"])),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: line {lineno}: bad record: {exc}") from exc
            except DataError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return records


def write_annotations(records: Iterable[AnnotationRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps({
                "item_id": rec.item_id,
                "worker_id": rec.worker_id,
                "aspect": rec.aspect,
                "raw_score": rec.raw_score,
                "is_control": rec.is_control,
                "control_expected": rec.control_expected,
            }, ensure_ascii=False) + "\n")
