"""Latent-variable training objectives over weakly labeled spans.

Every objective is a log likelihood built from the begin/end probability
grids.  They differ along four axes: which probability space normalizes the
scores, which latent structure the label set feeds (every labeled mention, one
mention per positive paragraph, or one mention per document), whether whole
spans or begin/end positions carry the likelihood, and whether the latent
choice is marginalized or maximized.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from .labeling import ConsistentLabelSet
from .probability import ScoreGrid, SpaceKind, log_partition


class Hypothesis(Enum):
    """How many labeled mentions are assumed to be true answer occurrences.

    ALL_MENTIONS treats every consistent span as correct.  PER_PARAGRAPH
    assumes exactly one correct mention inside each positive paragraph.
    PER_DOCUMENT assumes exactly one correct mention in the whole document
    and therefore requires the document probability space.
    """

    ALL_MENTIONS = "H1"
    PER_PARAGRAPH = "H2"
    PER_DOCUMENT = "H3"


class Granularity(Enum):
    """Whether likelihood attaches to whole spans or to begin/end positions."""

    SPAN = "span"
    POSITION = "pos"


class Aggregation(Enum):
    """How the latent choice is resolved: marginalized or maximized."""

    MML = "mml"
    HARD_EM = "hardem"


class ObjectiveSpecError(ValueError):
    """An objective string is malformed or names an invalid cell."""


class LabelError(ValueError):
    """A label set cannot feed the requested objective."""


@dataclass(frozen=True)
class ObjectiveSpec:
    """One point in the objective design space."""

    hypothesis: Hypothesis
    space: SpaceKind
    granularity: Granularity
    aggregation: Aggregation

    def __post_init__(self):
        if (
            self.hypothesis is Hypothesis.PER_DOCUMENT
            and self.space is SpaceKind.PARAGRAPH
        ):
            raise ObjectiveSpecError(
                "the one-per-document hypothesis requires the document space"
            )

    @classmethod
    def parse(cls, text: str) -> "ObjectiveSpec":
        """Parse strings like H2-P-span-mml or H3-D-pos-hardem."""
        parts = text.strip().split("-")
        if len(parts) != 4:
            raise ObjectiveSpecError(
                f"objective spec {text!r} must have four dash-separated fields"
            )
        hyp_key, space_key, gran_key, agg_key = parts
        try:
            hypothesis = Hypothesis(hyp_key.upper())
        except ValueError:
            raise ObjectiveSpecError(f"unknown hypothesis {hyp_key!r}") from None
        try:
            space = SpaceKind.parse(space_key)
        except ValueError:
            raise ObjectiveSpecError(f"unknown space {space_key!r}") from None
        try:
            granularity = Granularity(gran_key.lower())
        except ValueError:
            raise ObjectiveSpecError(f"unknown granularity {gran_key!r}") from None
        try:
            aggregation = Aggregation(agg_key.lower())
        except ValueError:
            raise ObjectiveSpecError(f"unknown aggregation {agg_key!r}") from None
        return cls(hypothesis, space, granularity, aggregation)

    def __str__(self) -> str:
        return "-".join(
            (
                self.hypothesis.value,
                self.space.value,
                self.granularity.value,
                self.aggregation.value,
            )
        )


def parse_combo(text: str) -> list[ObjectiveSpec]:
    """Parse a plus-joined list of objective specs."""
    parts = [p for p in text.split("+") if p.strip()]
    if not parts:
        raise ObjectiveSpecError("empty objective combination")
    return [ObjectiveSpec.parse(p) for p in parts]


@dataclass(frozen=True)
class SelectedOutcome:
    """The begin and end choice a maximizing objective committed to.

    Each side is a (paragraph, position) pair.  Under position granularity the
    two sides are chosen independently and need not form a valid span.
    """

    begin: tuple[int, int]
    end: tuple[int, int]


@dataclass
class LossResult:
    """Objective value with its gradient with respect to every grid entry."""

    value: float
    grad_begin: list[np.ndarray]
    grad_end: list[np.ndarray]
    selected: tuple[SelectedOutcome, ...] | None = None

    def grad_vector(self) -> np.ndarray:
        return np.concatenate(self.grad_begin + self.grad_end)


def _aggregate(
    logs: np.ndarray, aggregation: Aggregation, temperature: float | None
) -> tuple[float, np.ndarray, int | None]:
    """Combine log probabilities of one latent set.

    Returns the contribution to the objective, the weight each outcome
    receives in the gradient, and the committed index for a hard choice.
    Marginalizing uses log-sum-exp with softmax weights; maximizing takes the
    first-listed maximum, which realizes the lowest-index tie break.  A
    temperature in (0, 1] softens the maximum into a tempered log-sum-exp.
    """
    if aggregation is Aggregation.MML:
        value = float(logsumexp(logs))
        return value, np.exp(logs - value), None
    if temperature is None:
        idx = int(np.argmax(logs))
        weights = np.zeros_like(logs)
        weights[idx] = 1.0
        return float(logs[idx]), weights, idx
    scaled = logs / temperature
    norm = float(logsumexp(scaled))
    return temperature * norm, np.exp(scaled - norm), None


def evaluate(
    spec: ObjectiveSpec,
    grid: ScoreGrid,
    labels: ConsistentLabelSet,
    temperature: float | None = None,
) -> LossResult:
    """Compute one objective and its analytic gradient.

    Under the paragraph space, paragraphs without a consistent span contribute
    their null outcome when the hypothesis is ALL_MENTIONS or PER_PARAGRAPH.
    Under the document space an example with no consistent span at all is a
    label error and must be skipped by the caller.  temperature only affects
    maximizing objectives and exists for annealed training schedules; left at
    None the maximum is exact.
    """
    if temperature is not None and not 0.0 < temperature <= 1.0:
        raise ValueError("temperature must lie in (0, 1]")
    if labels.n_paragraphs != grid.n_paragraphs:
        raise LabelError(
            f"labels cover {labels.n_paragraphs} paragraphs, grid has {grid.n_paragraphs}"
        )
    token_counts = grid.token_counts()
    for k, spans in enumerate(labels.spans_by_paragraph):
        for span in spans:
            if span.end >= token_counts[k]:
                raise LabelError(
                    f"span {span.triple()} exceeds paragraph length {token_counts[k]}"
                )
    positive = [k for k in range(grid.n_paragraphs) if labels.spans_by_paragraph[k]]
    if spec.space is SpaceKind.DOCUMENT and not positive:
        raise LabelError("document-space objective needs at least one consistent span")

    probs = log_partition(grid, spec.space)
    lb, le = probs.log_begin, probs.log_end
    gb = [np.zeros_like(a) for a in grid.begin]
    ge = [np.zeros_like(a) for a in grid.end]
    # How many log-partition subtractions press on each normalization unit.
    pressure_b = np.zeros(grid.n_paragraphs)
    pressure_e = np.zeros(grid.n_paragraphs)
    doc_pressure_b = 0.0
    doc_pressure_e = 0.0
    value = 0.0
    hard = (
        spec.aggregation is Aggregation.HARD_EM
        and spec.hypothesis is not Hypothesis.ALL_MENTIONS
        and temperature is None
    )
    selected: list[SelectedOutcome] = []

    def press(k: int, begin_count: float, end_count: float):
        nonlocal doc_pressure_b, doc_pressure_e
        if spec.space is SpaceKind.PARAGRAPH:
            pressure_b[k] += begin_count
            pressure_e[k] += end_count
        else:
            doc_pressure_b += begin_count
            doc_pressure_e += end_count

    if spec.hypothesis is Hypothesis.ALL_MENTIONS:
        # Every labeled mention is a factor; aggregation has nothing to resolve.
        for k in positive:
            spans = labels.spans_by_paragraph[k]
            if spec.granularity is Granularity.SPAN:
                for span in spans:
                    value += float(lb[k][span.begin] + le[k][span.end])
                    gb[k][span.begin] += 1.0
                    ge[k][span.end] += 1.0
            else:
                # Positions inherit each span's multiplicity, which is what
                # makes this variant identical to the span variant.
                for pos, count in sorted(Counter(s.begin for s in spans).items()):
                    value += count * float(lb[k][pos])
                    gb[k][pos] += count
                for pos, count in sorted(Counter(s.end for s in spans).items()):
                    value += count * float(le[k][pos])
                    ge[k][pos] += count
            press(k, len(spans), len(spans))

    elif spec.hypothesis is Hypothesis.PER_PARAGRAPH:
        for k in positive:
            spans = labels.spans_by_paragraph[k]
            if spec.granularity is Granularity.SPAN:
                logs = np.array(
                    [float(lb[k][s.begin] + le[k][s.end]) for s in spans]
                )
                term, weights, idx = _aggregate(logs, spec.aggregation, temperature)
                value += term
                for span, weight in zip(spans, weights):
                    gb[k][span.begin] += weight
                    ge[k][span.end] += weight
                if hard:
                    chosen = spans[idx]
                    selected.append(
                        SelectedOutcome((k, chosen.begin), (k, chosen.end))
                    )
            else:
                bpos = labels.begin_positions(k)
                epos = labels.end_positions(k)
                term_b, wb, ib = _aggregate(
                    lb[k][list(bpos)], spec.aggregation, temperature
                )
                term_e, we, ie = _aggregate(
                    le[k][list(epos)], spec.aggregation, temperature
                )
                value += term_b + term_e
                gb[k][list(bpos)] += wb
                ge[k][list(epos)] += we
                if hard:
                    selected.append(SelectedOutcome((k, bpos[ib]), (k, epos[ie])))
            press(k, 1.0, 1.0)

    else:  # one mention per document, document space only
        if spec.granularity is Granularity.SPAN:
            entries = [(k, s) for k in positive for s in labels.spans_by_paragraph[k]]
            logs = np.array([float(lb[k][s.begin] + le[k][s.end]) for k, s in entries])
            term, weights, idx = _aggregate(logs, spec.aggregation, temperature)
            value += term
            for (k, span), weight in zip(entries, weights):
                gb[k][span.begin] += weight
                ge[k][span.end] += weight
            if hard:
                k_star, chosen = entries[idx]
                selected.append(
                    SelectedOutcome((k_star, chosen.begin), (k_star, chosen.end))
                )
        else:
            bentries = [(k, i) for k in positive for i in labels.begin_positions(k)]
            eentries = [(k, j) for k in positive for j in labels.end_positions(k)]
            logs_b = np.array([float(lb[k][i]) for k, i in bentries])
            logs_e = np.array([float(le[k][j]) for k, j in eentries])
            term_b, wb, ib = _aggregate(logs_b, spec.aggregation, temperature)
            term_e, we, ie = _aggregate(logs_e, spec.aggregation, temperature)
            value += term_b + term_e
            for (k, i), weight in zip(bentries, wb):
                gb[k][i] += weight
            for (k, j), weight in zip(eentries, we):
                ge[k][j] += weight
            if hard:
                selected.append(SelectedOutcome(bentries[ib], eentries[ie]))
        doc_pressure_b += 1.0
        doc_pressure_e += 1.0

    if spec.space is SpaceKind.PARAGRAPH:
        # Paragraphs with no consistent span assert their null outcome.
        for k in range(grid.n_paragraphs):
            if labels.spans_by_paragraph[k]:
                continue
            null = grid.null_index(k)
            value += float(lb[k][null] + le[k][null])
            gb[k][null] += 1.0
            ge[k][null] += 1.0
            pressure_b[k] += 1.0
            pressure_e[k] += 1.0
        for k in range(grid.n_paragraphs):
            if pressure_b[k]:
                gb[k] -= pressure_b[k] * np.exp(lb[k])
            if pressure_e[k]:
                ge[k] -= pressure_e[k] * np.exp(le[k])
    else:
        for k in range(grid.n_paragraphs):
            gb[k] -= doc_pressure_b * np.exp(lb[k])
            ge[k] -= doc_pressure_e * np.exp(le[k])

    return LossResult(
        value=float(value),
        grad_begin=gb,
        grad_end=ge,
        selected=tuple(selected) if hard else None,
    )


def combine(
    specs: list[ObjectiveSpec],
    weights: list[float],
    grid: ScoreGrid,
    labels: ConsistentLabelSet,
    temperature: float | None = None,
) -> LossResult:
    """Weighted sum of several objectives sharing one grid and label set."""
    if not specs:
        raise ObjectiveSpecError("need at least one objective")
    if len(specs) != len(weights):
        raise ObjectiveSpecError("one weight per objective required")
    for w in weights:
        if not np.isfinite(w) or w < 0:
            raise ObjectiveSpecError("weights must be finite and non-negative")
    value = 0.0
    gb = [np.zeros_like(a) for a in grid.begin]
    ge = [np.zeros_like(a) for a in grid.end]
    for spec, weight in zip(specs, weights):
        result = evaluate(spec, grid, labels, temperature)
        value += weight * result.value
        for k in range(grid.n_paragraphs):
            gb[k] += weight * result.grad_begin[k]
            ge[k] += weight * result.grad_end[k]
    return LossResult(value=float(value), grad_begin=gb, grad_end=ge, selected=None)


def grad_check(
    spec: ObjectiveSpec,
    grid: ScoreGrid,
    labels: ConsistentLabelSet,
    eps: float = 1e-4,
    temperature: float | None = None,
) -> float:
    """Worst relative disagreement between analytic and central-difference grads.

    Relative error for one coordinate is |fd - g| / max(1, |fd|, |g|).
    """
    analytic = evaluate(spec, grid, labels, temperature).grad_vector()
    base = grid.to_vector()
    worst = 0.0
    for idx in range(base.shape[0]):
        bumped = np.copy(base)
        bumped[idx] = base[idx] + eps
        high = evaluate(spec, grid.with_vector(bumped), labels, temperature).value
        bumped[idx] = base[idx] - eps
        low = evaluate(spec, grid.with_vector(bumped), labels, temperature).value
        fd = (high - low) / (2.0 * eps)
        err = abs(fd - analytic[idx]) / max(1.0, abs(fd), abs(analytic[idx]))
        worst = max(worst, err)
    return worst
