"""The four decision rules behind one threshold-gated prediction contract.

Every rule produces a pre-threshold (label, confidence, matched example)
triple; the threshold gate then either keeps the label or rejects to OOS.
Confidence lives in [0, 1] for all rules so one threshold semantics covers
them all. Ties are always broken by (intent name, bank index) lexicographic
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .corpus import OOS_LABEL, FewShotSet, Utterance
from .errors import CapabilityError, ValidationError
from .scorers import CAP_EMBED, CAP_SCORE_PAIRS

# The reject-everything threshold candidate: the smallest float above every
# legal confidence, so "confidence >= t" is false even at confidence 1.0.
REJECT_ALL_THRESHOLD = math.nextafter(1.0, 2.0)

PAIR_DIRECTIONS = ("input-first", "example-first", "both-max")


class Method(str, Enum):
    DNNC = "dnnc"
    EMB_KNN = "emb-knn"
    CLASSIFIER = "classifier"
    DNNC_JOINT = "dnnc-joint"


@dataclass(frozen=True)
class Prediction:
    """A threshold-gated decision: an intent name or OOS.

    ``matched_example`` is recorded for the neighbor-based rules even when
    the decision is OOS, so rejected inputs can still be inspected against
    their best match.
    """

    decision: str
    confidence: float
    method: Method
    matched_example: Utterance | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("confidence must be in [0, 1]")

    @property
    def is_oos(self) -> bool:
        return self.decision == OOS_LABEL


@dataclass(frozen=True)
class Scored:
    """Pre-threshold output of a decision rule.

    ``matched_example`` carries the predicted label; ``nearest_example`` is
    the overall closest bank example, shown when the gate rejects to OOS
    (for the pairwise rules the two coincide).
    """

    predicted_label: str
    confidence: float
    matched_example: Utterance | None
    nearest_example: Utterance | None = None


def check_threshold(value: float) -> float:
    if not 0.0 <= value <= REJECT_ALL_THRESHOLD:
        raise ValidationError("threshold must be in [0, 1] (or the reject-all sentinel)")
    return value


def gate(scored: Scored, threshold: float, method: Method) -> Prediction:
    """Apply the OOS threshold to a pre-threshold scoring result."""
    check_threshold(threshold)
    accepted = scored.confidence >= threshold
    decision = scored.predicted_label if accepted else OOS_LABEL
    if method is Method.CLASSIFIER:
        matched = None
    elif accepted:
        matched = scored.matched_example
    else:
        matched = scored.nearest_example or scored.matched_example
    return Prediction(
        decision=decision,
        confidence=scored.confidence,
        method=method,
        matched_example=matched,
    )


def _require_cap(scorer, cap: str) -> None:
    if cap not in getattr(scorer, "capabilities", frozenset()):
        raise CapabilityError(f"scorer does not support {cap!r}")


def _bank(fewshot: FewShotSet) -> list[tuple[str, int, Utterance]]:
    examples = fewshot.examples_in_order()
    if not examples:
        raise ValidationError("example bank is empty")
    return examples


def _pair_scores(
    input_text: str,
    examples: list[tuple[str, int, Utterance]],
    scorer,
    pair_direction: str,
) -> list[float]:
    """Pairwise match score of the input against each example, one batch set."""
    if pair_direction not in PAIR_DIRECTIONS:
        raise ValidationError(f"pair direction must be one of {PAIR_DIRECTIONS}")
    _require_cap(scorer, CAP_SCORE_PAIRS)
    forward = [(input_text, u.text) for _, _, u in examples]
    backward = [(u.text, input_text) for _, _, u in examples]
    if pair_direction == "input-first":
        return scorer.score_pairs(forward)
    if pair_direction == "example-first":
        return scorer.score_pairs(backward)
    both = scorer.score_pairs(forward + backward)
    n = len(examples)
    return [max(both[i], both[n + i]) for i in range(n)]


def _argmax_example(
    examples: list[tuple[str, int, Utterance]], scores: list[float]
) -> tuple[int, float]:
    """Index and score of the best example; first win = lexicographic tie-break.

    ``examples`` is in canonical (intent, index) order, so a strict ``>``
    scan resolves ties toward the lexicographically smallest key.
    """
    best_i = 0
    best = scores[0]
    for i in range(1, len(scores)):
        if scores[i] > best:
            best_i, best = i, scores[i]
    return best_i, best


def dnnc_score(
    input_text: str,
    fewshot: FewShotSet,
    scorer,
    pair_direction: str = "input-first",
) -> Scored:
    examples = _bank(fewshot)
    scores = _pair_scores(input_text, examples, scorer, pair_direction)
    best_i, best = _argmax_example(examples, scores)
    intent, _, utterance = examples[best_i]
    return Scored(
        predicted_label=intent,
        confidence=best,
        matched_example=utterance,
        nearest_example=utterance,
    )


def dnnc_predict(
    input_text: str,
    fewshot: FewShotSet,
    scorer,
    threshold: float,
    pair_direction: str = "input-first",
) -> Prediction:
    """Nearest-neighbor rule over pairwise match scores.

    Scores the input against every bank example in one batched call set;
    the best match's label wins if its score clears the threshold.
    """
    scored = dnnc_score(input_text, fewshot, scorer, pair_direction)
    return gate(scored, threshold, Method.DNNC)


def _cosine(a: list[float], b: list[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(x * x for x in b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


def _embed_bank(
    input_text: str, examples: list[tuple[str, int, Utterance]], embedder
) -> tuple[list[float], list[list[float]]]:
    _require_cap(embedder, CAP_EMBED)
    vectors = embedder.embed([input_text] + [u.text for _, _, u in examples])
    return vectors[0], vectors[1:]


def _neighbor_order(
    examples: list[tuple[str, int, Utterance]], similarities: list[float]
) -> list[int]:
    # Descending similarity; (intent, index) lexicographic for equal scores.
    return sorted(
        range(len(examples)),
        key=lambda i: (-similarities[i], examples[i][0], examples[i][1]),
    )


def emb_knn_score(
    input_text: str,
    fewshot: FewShotSet,
    embedder,
    k: int = 1,
) -> Scored:
    if k < 1:
        raise ValidationError("k must be >= 1")
    examples = _bank(fewshot)
    query, bank = _embed_bank(input_text, examples, embedder)
    sims = [_cosine(query, vec) for vec in bank]
    order = _neighbor_order(examples, sims)
    top = order[: min(k, len(order))]

    votes: dict[str, int] = {}
    for i in top:
        votes[examples[i][0]] = votes.get(examples[i][0], 0) + 1
    majority = min(votes, key=lambda label: (-votes[label], label))

    nearest = order[0]
    confidence = (sims[nearest] + 1.0) / 2.0
    matched = next(examples[i][2] for i in top if examples[i][0] == majority)
    return Scored(
        predicted_label=majority,
        confidence=confidence,
        matched_example=matched,
        nearest_example=examples[nearest][2],
    )


def emb_knn_predict(
    input_text: str,
    fewshot: FewShotSet,
    embedder,
    threshold: float,
    k: int = 1,
) -> Prediction:
    """k-nearest-neighbor rule over embedding cosine similarity.

    Confidence is the nearest neighbor's similarity mapped to [0, 1] via
    (s + 1) / 2; the decision is the majority label of the top k.
    """
    scored = emb_knn_score(input_text, fewshot, embedder, k)
    return gate(scored, threshold, Method.EMB_KNN)


def centroid_classifier_score(
    input_text: str,
    fewshot: FewShotSet,
    embedder,
) -> tuple[Scored, dict[str, float]]:
    """Softmax over per-intent centroid cosines; returns the full distribution."""
    examples = _bank(fewshot)
    query, bank = _embed_bank(input_text, examples, embedder)

    by_intent: dict[str, list[list[float]]] = {}
    for (intent, _, _), vec in zip(examples, bank):
        by_intent.setdefault(intent, []).append(vec)
    intents = sorted(by_intent)

    dim = len(query)
    logits = []
    for intent in intents:
        vecs = by_intent[intent]
        centroid = [sum(v[d] for v in vecs) / len(vecs) for d in range(dim)]
        logits.append(_cosine(query, centroid))

    peak = max(logits)
    exps = [math.exp(l - peak) for l in logits]
    total = sum(exps)
    probs = {intent: e / total for intent, e in zip(intents, exps)}

    best = intents[0]
    for intent in intents[1:]:
        if probs[intent] > probs[best]:
            best = intent
    return Scored(predicted_label=best, confidence=probs[best], matched_example=None), probs


def centroid_classifier_predict(
    input_text: str,
    fewshot: FewShotSet,
    embedder,
    threshold: float,
) -> Prediction:
    """Classifier rule: softmax over cosine(input, per-intent centroid)."""
    scored, _ = centroid_classifier_score(input_text, fewshot, embedder)
    return gate(scored, threshold, Method.CLASSIFIER)


def retrieve_top_k(
    input_text: str,
    fewshot: FewShotSet,
    embedder,
    top_k: int,
) -> list[tuple[str, int, Utterance]]:
    """Stage 1: the top_k bank examples by embedding cosine, across intents."""
    if top_k < 1:
        raise ValidationError("top_k must be >= 1")
    examples = _bank(fewshot)
    query, bank = _embed_bank(input_text, examples, embedder)
    sims = [_cosine(query, vec) for vec in bank]
    order = _neighbor_order(examples, sims)
    selected = sorted(order[: min(top_k, len(order))])
    return [examples[i] for i in selected]


def dnnc_joint_score(
    input_text: str,
    fewshot: FewShotSet,
    embedder,
    scorer,
    top_k: int = 10,
    pair_direction: str = "input-first",
) -> Scored:
    candidates = retrieve_top_k(input_text, fewshot, embedder, top_k)
    scores = _pair_scores(input_text, candidates, scorer, pair_direction)
    best_i, best = _argmax_example(candidates, scores)
    intent, _, utterance = candidates[best_i]
    return Scored(
        predicted_label=intent,
        confidence=best,
        matched_example=utterance,
        nearest_example=utterance,
    )


def dnnc_joint_predict(
    input_text: str,
    fewshot: FewShotSet,
    embedder,
    scorer,
    threshold: float,
    top_k: int = 10,
    pair_direction: str = "input-first",
) -> Prediction:
    """Two-stage rule: embedding retrieval of top_k candidates, then the
    pairwise nearest-neighbor rule restricted to those candidates.

    With top_k >= bank size this reduces exactly to ``dnnc_predict``; the
    pairwise-score call count is bounded by top_k.
    """
    scored = dnnc_joint_score(input_text, fewshot, embedder, scorer, top_k, pair_direction)
    return gate(scored, threshold, Method.DNNC_JOINT)
