"""Deterministic gradient-ascent training of the scorer under any objective mix."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import DocumentQuestionPair
from .labeling import ConsistentLabelSet
from .model import Checkpoint, ParamGradients, ToyScorer, Vocabulary
from .objectives import Aggregation, LabelError, ObjectiveSpec, combine
from .probability import SpaceKind

logger = logging.getLogger(__name__)

PRETRAIN_OBJECTIVE = "H1-P-span-mml"
MIN_RAMP_TEMPERATURE = 0.05


class TrainingDivergedError(RuntimeError):
    """The objective stopped being finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run besides the data itself."""

    objectives: tuple[str, ...] = ("H2-P-span-mml",)
    weights: tuple[float, ...] = (1.0,)
    learning_rate: float = 0.5
    epochs: int = 3
    batch_size: int = 8
    seed: int = 0
    embedding_dim: int = 32
    init_scale: float = 0.5
    momentum: float = 0.0
    hardem_temperature_ramp: bool = False
    pretrain_path: str | None = None
    pretrain_epochs: int = 2

    def __post_init__(self):
        if self.epochs < 1 or self.pretrain_epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if len(self.objectives) != len(self.weights):
            raise ValueError("one weight per objective required")
        if not self.objectives:
            raise ValueError("need at least one objective")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    def parsed_objectives(self) -> list[ObjectiveSpec]:
        return [ObjectiveSpec.parse(s) for s in self.objectives]

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "objectives": list(self.objectives),
                "weights": list(self.weights),
                "learning_rate": self.learning_rate,
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "seed": self.seed,
                "embedding_dim": self.embedding_dim,
                "init_scale": self.init_scale,
                "momentum": self.momentum,
                "hardem_temperature_ramp": self.hardem_temperature_ramp,
                "pretrain_path": self.pretrain_path,
                "pretrain_epochs": self.pretrain_epochs,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _usable_examples(
    specs: Sequence[ObjectiveSpec],
    pairs: Sequence[DocumentQuestionPair],
    labels: Sequence[ConsistentLabelSet],
) -> tuple[list[tuple[DocumentQuestionPair, ConsistentLabelSet]], int]:
    """Drop examples a document-space objective cannot score."""
    needs_spans = any(s.space is SpaceKind.DOCUMENT for s in specs)
    kept = []
    skipped = 0
    for pair, label_set in zip(pairs, labels):
        if needs_spans and label_set.total_spans == 0:
            skipped += 1
            continue
        if not pair.paragraphs:
            skipped += 1
            continue
        kept.append((pair, label_set))
    return kept, skipped


def _ramp_temperature(step: int, total_steps: int) -> float:
    """Linear anneal from soft toward hard over the whole run."""
    if total_steps <= 1:
        return MIN_RAMP_TEMPERATURE
    fraction = step / (total_steps - 1)
    return max(MIN_RAMP_TEMPERATURE, 1.0 - fraction)


def _run_epochs(
    scorer: ToyScorer,
    specs: Sequence[ObjectiveSpec],
    weights: Sequence[float],
    examples: list[tuple[DocumentQuestionPair, ConsistentLabelSet]],
    config: TrainConfig,
    epochs: int,
) -> list[float]:
    """Shared ascent loop; mutates the scorer, returns per-epoch mean values."""
    if not examples:
        return []
    rng = np.random.default_rng(config.seed)
    use_ramp = config.hardem_temperature_ramp and any(
        s.aggregation is Aggregation.HARD_EM for s in specs
    )
    n_batches = (len(examples) + config.batch_size - 1) // config.batch_size
    total_steps = epochs * n_batches
    velocity = ParamGradients.zeros_like(scorer) if config.momentum else None
    history = []
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(examples))
        epoch_value = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[start : start + config.batch_size]]
            batch.sort(key=lambda item: item[0].id)
            temperature = _ramp_temperature(step, total_steps) if use_ramp else None
            accumulated = ParamGradients.zeros_like(scorer)
            for pair, label_set in batch:
                grid = scorer.score(pair)
                loss = combine(list(specs), list(weights), grid, label_set, temperature)
                if not np.isfinite(loss.value):
                    raise TrainingDivergedError(
                        f"non-finite objective at epoch {epoch}, pair {pair.id!r}"
                    )
                epoch_value += loss.value
                accumulated.add_(
                    scorer.backprop(pair, loss.grad_begin, loss.grad_end)
                )
            accumulated.scale_(1.0 / len(batch))
            if velocity is not None:
                velocity.scale_(config.momentum)
                velocity.add_(accumulated)
                scorer.apply_update(velocity, config.learning_rate)
            else:
                scorer.apply_update(accumulated, config.learning_rate)
            step += 1
        history.append(epoch_value / len(examples))
    return history


def train(
    config: TrainConfig,
    pairs: Sequence[DocumentQuestionPair],
    labels: Sequence[ConsistentLabelSet],
    init: Checkpoint | None = None,
) -> Checkpoint:
    """Train a scorer from scratch or from a checkpoint's parameters.

    Batches are whole documents, shuffled once per epoch from the config seed;
    within a batch, gradients reduce in document-id order, so runs with one
    seed are bit-for-bit reproducible.  When any objective lives in the
    document space, examples without a single consistent span are skipped and
    counted in the returned history.
    """
    if len(pairs) != len(labels):
        raise ValueError("pairs and labels must align")
    specs = config.parsed_objectives()
    examples, skipped = _usable_examples(specs, pairs, labels)
    if skipped:
        logger.info("skipping %d examples with no consistent span", skipped)
    if init is not None:
        scorer = init.to_scorer()
    else:
        scorer = ToyScorer.initialize(
            Vocabulary.from_pairs(pairs),
            dim=config.embedding_dim,
            seed=config.seed,
            init_scale=config.init_scale,
        )
    values = _run_epochs(scorer, specs, config.weights, examples, config, config.epochs)
    history = {
        "objective_values": values,
        "skipped_examples": skipped,
        "trained_examples": len(examples),
        "initialized_from": init.fingerprint if init is not None else None,
    }
    return Checkpoint.from_scorer(scorer, config.fingerprint(), history)


def pretrain_clean(
    config: TrainConfig,
    pairs: Sequence[DocumentQuestionPair],
    labels: Sequence[ConsistentLabelSet],
    vocab: Vocabulary | None = None,
) -> Checkpoint:
    """Supervised warm start on cleanly labeled data.

    Labels must be singletons: at most one span per paragraph, so the
    all-mentions and one-per-paragraph objectives coincide and the run is
    plain maximum likelihood in the paragraph space.  Passing an explicit
    vocabulary lets the warm start share token ids with later fine-tuning.
    Empty data returns the untouched initialization.
    """
    if len(pairs) != len(labels):
        raise ValueError("pairs and labels must align")
    for label_set in labels:
        for spans in label_set.spans_by_paragraph:
            if len(spans) > 1:
                raise LabelError("clean pretraining expects at most one span per paragraph")
    spec = ObjectiveSpec.parse(PRETRAIN_OBJECTIVE)
    examples, _ = _usable_examples([spec], pairs, labels)
    scorer = ToyScorer.initialize(
        vocab if vocab is not None else Vocabulary.from_pairs(pairs),
        dim=config.embedding_dim,
        seed=config.seed,
        init_scale=config.init_scale,
    )
    values = _run_epochs(
        scorer, [spec], [1.0], examples, config, config.pretrain_epochs
    )
    history = {
        "objective_values": values,
        "skipped_examples": 0,
        "trained_examples": len(examples),
        "pretraining": True,
    }
    return Checkpoint.from_scorer(scorer, config.fingerprint(), history)
