"""Synthetic corpora with controllable weak-label noise, plus grid experiments.

Documents are built from a fixed token universe: each topic owns an answer
token, a prefix token for a two-token answer variant, and a pool of cue tokens
that questions are made of.  Correct mentions are answer tokens planted next
to their topic's cues; alias mentions are another topic's answer token planted
in plain filler, so they match the answer set while being wrong.  Ground
truth records which labeled spans are genuine.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import DocumentQuestionPair, make_pair, normalize_string
from .inference import InferenceError, InferenceSpec, predict
from .labeling import (
    ConsistentLabelSet,
    SpanLabel,
    find_consistent_spans_exact,
)
from .metrics import exact_match, token_f1
from .model import Checkpoint
from .objectives import parse_combo
from .probability import SpaceKind, log_partition
from .training import TrainConfig, train

CUES_PER_TOPIC = 4


@dataclass(frozen=True)
class NoiseProfile:
    """Knobs of the synthetic corpus.

    alias_rate is the chance a positive paragraph carries only an alias
    mention; distractor_rate the chance a paragraph carries no mention at
    all.  mention_counts weights how many correct mentions a mention-bearing
    paragraph holds.  multi_answer_rate adds a nested two-token answer
    variant to the answer set.
    """

    vocab_size: int = 400
    documents: int = 2000
    dev_documents: int = 500
    paragraphs_per_document: int = 4
    tokens_per_paragraph: int = 40
    question_length: int = 4
    alias_rate: float = 0.0
    distractor_rate: float = 0.25
    multi_answer_rate: float = 0.0
    mention_counts: tuple[tuple[int, float], ...] = ((1, 0.5), (2, 0.3), (3, 0.2))
    seed: int = 0

    def __post_init__(self):
        for rate in (self.alias_rate, self.distractor_rate, self.multi_answer_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        if self.documents < 1 or self.dev_documents < 0:
            raise ValueError("need at least one training document")
        if not 1 <= self.paragraphs_per_document <= 8:
            raise ValueError("paragraphs per document must lie in [1, 8]")
        if not 1 <= self.question_length <= CUES_PER_TOPIC:
            raise ValueError(f"question length must lie in [1, {CUES_PER_TOPIC}]")
        if not self.mention_counts:
            raise ValueError("mention_counts must not be empty")
        for count, weight in self.mention_counts:
            if count < 1 or weight <= 0:
                raise ValueError("mention counts need count >= 1 and positive weight")
        longest = 4 * max(c for c, _ in self.mention_counts)
        if not longest + 4 <= self.tokens_per_paragraph <= 400:
            raise ValueError("tokens_per_paragraph too small for the mention load")
        if self.vocab_size < 60:
            raise ValueError("vocab_size must be at least 60")

    def to_json(self) -> str:
        record = asdict(self)
        record["mention_counts"] = [list(p) for p in self.mention_counts]
        return json.dumps(record, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NoiseProfile":
        record = json.loads(text)
        if "mention_counts" in record:
            record["mention_counts"] = tuple(
                (int(c), float(w)) for c, w in record["mention_counts"]
            )
        return cls(**record)


@dataclass(frozen=True)
class SyntheticTruth:
    """What the generator knows: the real answer and the genuine label spans."""

    gold_answer: str
    correct_spans: tuple[SpanLabel, ...]

    def gold_strings(self) -> set[str]:
        return {self.gold_answer} | {s.matched_string for s in self.correct_spans}


@dataclass(frozen=True)
class _Universe:
    answers: tuple[str, ...]
    prefixes: tuple[str, ...]
    cues: tuple[tuple[str, ...], ...]
    filler: tuple[str, ...]


def _build_universe(profile: NoiseProfile) -> _Universe:
    n_topics = max(4, profile.vocab_size // 10)
    answers = tuple(f"ans{t}" for t in range(n_topics))
    prefixes = tuple(f"pre{t}" for t in range(n_topics))
    cues = tuple(
        tuple(f"cue{t}w{c}" for c in range(CUES_PER_TOPIC)) for t in range(n_topics)
    )
    n_filler = profile.vocab_size - n_topics * (2 + CUES_PER_TOPIC)
    if n_filler < 20:
        raise ValueError("vocab_size leaves too few filler tokens")
    filler = tuple(f"fil{m}" for m in range(n_filler))
    return _Universe(answers, prefixes, cues, filler)


def _draw_roles(rng, profile: NoiseProfile) -> list[str]:
    # Redraw until the document keeps at least one genuine mention.
    for _ in range(64):
        roles = []
        for _ in range(profile.paragraphs_per_document):
            if rng.random() < profile.distractor_rate:
                roles.append("distractor")
            elif rng.random() < profile.alias_rate:
                roles.append("alias")
            else:
                roles.append("correct")
        if "correct" in roles:
            return roles
    roles[int(rng.integers(profile.paragraphs_per_document))] = "correct"
    return roles


def _assemble(rng, filler_pool, segments: list[list[str]], length: int) -> list[str]:
    used = sum(len(s) for s in segments)
    n_filler = length - used
    if n_filler < 0:
        raise ValueError("paragraph too short for its mentions")
    backbone = [str(t) for t in rng.choice(filler_pool, size=n_filler, replace=True)]
    gaps = sorted(
        (int(rng.integers(n_filler + 1)), order) for order, _ in enumerate(segments)
    )
    out = []
    cursor = 0
    for gap, order in gaps:
        out.extend(backbone[cursor:gap])
        out.extend(segments[order])
        cursor = gap
    out.extend(backbone[cursor:])
    return out


def generate(
    profile: NoiseProfile, id_prefix: str = "doc"
) -> tuple[list[DocumentQuestionPair], list[ConsistentLabelSet], list[SyntheticTruth]]:
    """Generate documents, weak labels, and ground truth.

    Labels come from the real exact matcher run on the finished text, never
    from the generator's bookkeeping, so they contain exactly the noise the
    profile injected.  Identical seeds reproduce identical corpora.
    """
    universe = _build_universe(profile)
    n_topics = len(universe.answers)
    rng = np.random.default_rng(profile.seed)
    counts = np.array([c for c, _ in profile.mention_counts])
    weights = np.array([w for _, w in profile.mention_counts], dtype=np.float64)
    weights = weights / weights.sum()

    pairs, labels, truths = [], [], []
    for doc_index in range(profile.documents):
        topic = int(rng.integers(n_topics))
        question = [
            universe.cues[topic][i]
            for i in rng.permutation(CUES_PER_TOPIC)[: profile.question_length]
        ]
        multi = rng.random() < profile.multi_answer_rate
        base = universe.answers[topic]
        extended = f"{universe.prefixes[topic]} {base}"
        gold_strings = {base} | ({extended} if multi else set())
        roles = _draw_roles(rng, profile)
        alias_token = None
        if "alias" in roles:
            other = int(rng.integers(n_topics - 1))
            alias_token = universe.answers[other if other < topic else other + 1]
        paragraphs = []
        for role in roles:
            segments: list[list[str]] = []
            if role == "correct":
                n_mentions = int(rng.choice(counts, p=weights))
                for _ in range(n_mentions):
                    mention = [base]
                    if multi and rng.random() < 0.5:
                        mention = [universe.prefixes[topic], base]
                    cue_pair = rng.choice(universe.cues[topic], size=2, replace=True)
                    segments.append([str(cue_pair[0]), *mention, str(cue_pair[1])])
            elif role == "alias":
                segments.append([alias_token])
            paragraphs.append(
                _assemble(rng, universe.filler, segments, profile.tokens_per_paragraph)
            )
        answers = [base]
        if multi:
            answers.append(extended)
        if alias_token is not None:
            answers.append(alias_token)
        pair = make_pair(
            id=f"{id_prefix}{doc_index:05d}",
            question=question,
            paragraphs=paragraphs,
            answers=answers,
        )
        label_set = find_consistent_spans_exact(pair)
        correct = tuple(
            s for s in label_set.all_spans() if s.matched_string in gold_strings
        )
        pairs.append(pair)
        labels.append(label_set)
        truths.append(SyntheticTruth(gold_answer=base, correct_spans=correct))
    return pairs, labels, truths


def dev_profile(profile: NoiseProfile) -> NoiseProfile:
    """The same corpus distribution with fresh randomness for held-out data."""
    return replace(
        profile,
        documents=max(1, profile.dev_documents),
        seed=profile.seed + 7919,
    )


def save_truth(
    pairs: Sequence[DocumentQuestionPair],
    truths: Sequence[SyntheticTruth],
    path: str | Path,
) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pair, truth in zip(pairs, truths):
            record = {
                "id": pair.id,
                "gold": truth.gold_answer,
                "correct_spans": [list(s.triple()) for s in truth.correct_spans],
            }
            handle.write(json.dumps(record) + "\n")


def load_truth(
    pairs: Sequence[DocumentQuestionPair], path: str | Path
) -> list[SyntheticTruth]:
    by_id = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            by_id[record["id"]] = record
    out = []
    for pair in pairs:
        record = by_id[pair.id]
        spans = []
        for k, i, j in record["correct_spans"]:
            text = pair.paragraphs[k].text(i, j)
            spans.append(SpanLabel(k, i, j, matched_string=normalize_string(text)))
        out.append(
            SyntheticTruth(gold_answer=record["gold"], correct_spans=tuple(spans))
        )
    return out


def inference_space(combo: str) -> SpaceKind:
    """Probability space a trained objective mix should decode with.

    Any document-space constituent makes decoding document-level; otherwise
    the paragraph space is kept.
    """
    specs = parse_combo(combo)
    if any(s.space is SpaceKind.DOCUMENT for s in specs):
        return SpaceKind.DOCUMENT
    return SpaceKind.PARAGRAPH


def evaluate_checkpoint(
    checkpoint: Checkpoint,
    pairs: Sequence[DocumentQuestionPair],
    gold_strings: Sequence[set[str]],
    inference: InferenceSpec,
    space: SpaceKind,
) -> dict[str, float]:
    """Mean EM and token F1, in points, of a checkpoint's predictions."""
    scorer = checkpoint.to_scorer()
    ems, f1s = [], []
    for pair, golds in zip(pairs, gold_strings):
        grid = scorer.score(pair)
        probs = log_partition(grid, space)
        try:
            prediction = predict(probs, pair, inference)
        except InferenceError:
            ems.append(0.0)
            f1s.append(0.0)
            continue
        ems.append(exact_match(prediction.answer, golds))
        f1s.append(token_f1(prediction.answer, golds))
    n = max(1, len(ems))
    return {"em": 100.0 * sum(ems) / n, "f1": 100.0 * sum(f1s) / n}


def _run_cell(args) -> list[dict]:
    (
        combo,
        seed,
        config,
        train_pairs,
        train_labels,
        dev_pairs,
        dev_golds,
        inference_specs,
    ) = args
    specs = parse_combo(combo)
    cell_config = replace(
        config,
        objectives=tuple(str(s) for s in specs),
        weights=tuple(1.0 for _ in specs),
        seed=seed,
    )
    checkpoint = train(cell_config, train_pairs, train_labels)
    space = inference_space(combo)
    values = checkpoint.history.get("objective_values", [])
    rows = []
    for inf_spec in inference_specs:
        scores = evaluate_checkpoint(checkpoint, dev_pairs, dev_golds, inf_spec, space)
        rows.append(
            {
                "objective": combo,
                "seed": seed,
                "inference": inf_spec.aggregation.value,
                "em": scores["em"],
                "f1": scores["f1"],
                "train_objective": values[-1] if values else None,
            }
        )
    return rows


def run_grid(
    pairs: Sequence[DocumentQuestionPair],
    labels: Sequence[ConsistentLabelSet],
    truths: Sequence[SyntheticTruth],
    objective_combos: Sequence[str],
    inference_specs: Sequence[InferenceSpec],
    seeds: Sequence[int],
    dev_pairs: Sequence[DocumentQuestionPair] | None = None,
    dev_truths: Sequence[SyntheticTruth] | None = None,
    config: TrainConfig | None = None,
    jobs: int = 1,
) -> list[dict]:
    """Train one model per (objective combo, seed) and score both decoders.

    Plus-joined combos train a weighted mix with equal unit weights.  Held-out
    pairs and truth default to the training set when absent.  Rows report EM
    and token F1 against each document's genuine answer strings: the gold
    answer plus every correct-span string.
    """
    if config is None:
        config = TrainConfig()
    if dev_pairs is None:
        dev_pairs, dev_truths = pairs, truths
    if dev_truths is None or len(dev_truths) != len(dev_pairs):
        raise ValueError("held-out pairs need aligned truth records")
    dev_golds = [t.gold_strings() for t in dev_truths]
    cells = [
        (combo, seed, config, list(pairs), list(labels), list(dev_pairs), dev_golds, list(inference_specs))
        for combo in objective_combos
        for seed in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(cell) for cell in cells]
    return [row for rows in results for row in rows]


def save_table(rows: Sequence[dict], path: str | Path) -> None:
    """Write grid rows as JSON or CSV depending on the file suffix."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        fields = ["objective", "seed", "inference", "em", "f1", "train_objective"]
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
    else:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(list(rows), handle, indent=2)
