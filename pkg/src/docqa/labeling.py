"""Weak span labeling: find paragraph spans consistent with the answer set."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import DocumentQuestionPair, normalize_string
from .metrics import rouge_l

DEFAULT_MAX_SPAN_LENGTH = 8
DEFAULT_ROUGE_THRESHOLD = 0.5


@dataclass(frozen=True)
class SpanLabel:
    """An inclusive token span [begin, end] inside one paragraph."""

    paragraph: int
    begin: int
    end: int
    matched_string: str = ""

    def __post_init__(self):
        if self.paragraph < 0:
            raise ValueError("paragraph index must be non-negative")
        if not 0 <= self.begin <= self.end:
            raise ValueError("need 0 <= begin <= end")

    @property
    def length(self) -> int:
        return self.end - self.begin + 1

    def triple(self) -> tuple[int, int, int]:
        return (self.paragraph, self.begin, self.end)


@dataclass(frozen=True)
class ConsistentLabelSet:
    """All weakly labeled spans for one pair, grouped by paragraph.

    num_answers records the size of the (normalized) answer string set the
    spans were matched against.
    """

    spans_by_paragraph: tuple[tuple[SpanLabel, ...], ...]
    num_answers: int

    def __post_init__(self):
        for k, spans in enumerate(self.spans_by_paragraph):
            for span in spans:
                if span.paragraph != k:
                    raise ValueError("span filed under the wrong paragraph")

    @property
    def n_paragraphs(self) -> int:
        return len(self.spans_by_paragraph)

    @property
    def total_spans(self) -> int:
        return sum(len(s) for s in self.spans_by_paragraph)

    def is_null(self, k: int) -> bool:
        """True when paragraph k has no consistent span."""
        return not self.spans_by_paragraph[k]

    def begin_positions(self, k: int) -> tuple[int, ...]:
        """Distinct begin offsets of paragraph k's spans, ascending."""
        return tuple(sorted({s.begin for s in self.spans_by_paragraph[k]}))

    def end_positions(self, k: int) -> tuple[int, ...]:
        """Distinct end offsets of paragraph k's spans, ascending."""
        return tuple(sorted({s.end for s in self.spans_by_paragraph[k]}))

    def all_spans(self) -> list[SpanLabel]:
        return [s for spans in self.spans_by_paragraph for s in spans]

    @classmethod
    def from_spans(
        cls, n_paragraphs: int, spans: Iterable[SpanLabel], num_answers: int
    ) -> "ConsistentLabelSet":
        grouped: list[list[SpanLabel]] = [[] for _ in range(n_paragraphs)]
        for span in spans:
            if span.paragraph >= n_paragraphs:
                raise ValueError("span paragraph index out of range")
            grouped[span.paragraph].append(span)
        for bucket in grouped:
            bucket.sort(key=lambda s: (s.begin, s.end))
        return cls(
            spans_by_paragraph=tuple(tuple(b) for b in grouped),
            num_answers=num_answers,
        )


def counts(labels: ConsistentLabelSet) -> tuple[int, int]:
    """(answer string count, consistent span count) used for partitioned scoring."""
    return (labels.num_answers, labels.total_spans)


def find_consistent_spans_exact(
    pair: DocumentQuestionPair, max_span_length: int = DEFAULT_MAX_SPAN_LENGTH
) -> ConsistentLabelSet:
    """Label every span whose normalized text equals some normalized answer.

    Spans longer than max_span_length tokens are never considered.  Spans that
    normalize to the empty string never match.
    """
    if max_span_length < 1:
        raise ValueError("max_span_length must be at least 1")
    targets = {s for s in pair.answers.normalized if s}
    spans = []
    for paragraph in pair.paragraphs:
        texts = [t.text for t in paragraph.tokens]
        for i in range(len(texts)):
            for j in range(i, min(i + max_span_length, len(texts))):
                key = normalize_string(" ".join(texts[i : j + 1]))
                if key in targets:
                    spans.append(
                        SpanLabel(paragraph.index, i, j, matched_string=key)
                    )
    return ConsistentLabelSet.from_spans(
        len(pair.paragraphs), spans, num_answers=len(pair.answers)
    )


def find_consistent_spans_rouge(
    pair: DocumentQuestionPair,
    max_span_length: int = DEFAULT_MAX_SPAN_LENGTH,
    threshold: float = DEFAULT_ROUGE_THRESHOLD,
) -> ConsistentLabelSet:
    """Label spans by similarity to the raw answer strings.

    Keeps every span whose best similarity reaches the threshold, and always
    keeps each paragraph's best-scoring span when its similarity is positive,
    even below the threshold.  Ties go to the earliest (begin, end).
    """
    if max_span_length < 1:
        raise ValueError("max_span_length must be at least 1")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    answers = list(pair.answers.raw)
    spans = []
    for paragraph in pair.paragraphs:
        texts = [t.text for t in paragraph.tokens]
        kept = []
        best = None
        best_score = 0.0
        for i in range(len(texts)):
            for j in range(i, min(i + max_span_length, len(texts))):
                text = " ".join(texts[i : j + 1])
                score = 0.0
                matched = ""
                for answer in answers:
                    value = rouge_l(text, answer)
                    if value > score:
                        score = value
                        matched = normalize_string(answer)
                if score <= 0.0:
                    continue
                label = SpanLabel(paragraph.index, i, j, matched_string=matched)
                if score > best_score:
                    best_score = score
                    best = label
                if score >= threshold:
                    kept.append(label)
        if best is not None and best not in kept:
            kept.append(best)
        spans.extend(kept)
    return ConsistentLabelSet.from_spans(
        len(pair.paragraphs), spans, num_answers=len(pair.answers)
    )


def save_labels(
    pairs: Sequence[DocumentQuestionPair],
    labels: Sequence[ConsistentLabelSet],
    path: str | Path,
) -> None:
    """Write one {"id", "spans": [[paragraph, begin, end], ...]} record per pair."""
    if len(pairs) != len(labels):
        raise ValueError("pairs and labels must align")
    with open(path, "w", encoding="utf-8") as handle:
        for pair, label_set in zip(pairs, labels):
            record = {
                "id": pair.id,
                "spans": [list(s.triple()) for s in label_set.all_spans()],
            }
            handle.write(json.dumps(record) + "\n")


def load_labels(
    pairs: Sequence[DocumentQuestionPair], path: str | Path
) -> list[ConsistentLabelSet]:
    """Read a label file back, rebuilding matched strings from the paragraphs."""
    by_id = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            by_id[record["id"]] = record["spans"]
    out = []
    for pair in pairs:
        triples = by_id.get(pair.id)
        if triples is None:
            raise KeyError(f"no labels for pair {pair.id!r}")
        spans = []
        for k, i, j in triples:
            text = pair.paragraphs[k].text(i, j)
            spans.append(SpanLabel(k, i, j, matched_string=normalize_string(text)))
        out.append(
            ConsistentLabelSet.from_spans(
                len(pair.paragraphs), spans, num_answers=len(pair.answers)
            )
        )
    return out
