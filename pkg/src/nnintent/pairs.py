"""Ordered utterance-pair generation for pairwise match training.

Positives are all ordered same-intent pairs (both directions, distinct bank
indices); negatives are all ordered cross-intent pairs, optionally capped by
a seeded uniform subsample. Pairwise scoring is directional, so both
directions of every pair are emitted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .corpus import FewShotSet
from .errors import FormatError, ValidationError
from .seeding import seeded_rng


@dataclass(frozen=True)
class Pair:
    premise: str
    hypothesis: str
    match: bool
    premise_label: str
    hypothesis_label: str

    def __post_init__(self) -> None:
        if self.match != (self.premise_label == self.hypothesis_label):
            raise ValidationError("match flag must equal label equality")


@dataclass(frozen=True)
class PairSet:
    pairs: tuple[Pair, ...]
    source_seed: int
    n_positive: int
    n_negative: int

    def __post_init__(self) -> None:
        pos = sum(1 for p in self.pairs if p.match)
        if pos != self.n_positive or len(self.pairs) - pos != self.n_negative:
            raise ValidationError("pair counts do not match the pair list")


def generate_pairs(
    fewshot: FewShotSet,
    negative_cap_per_positive: int | None = None,
    seed: int = 0,
) -> PairSet:
    """Enumerate ordered pairs from an example bank.

    With a cap, negatives become a seeded uniform subsample of size
    ``cap * n_positive`` (all of them if fewer exist); without one, every
    cross-intent ordered pair is kept.
    """
    if negative_cap_per_positive is not None and negative_cap_per_positive < 1:
        raise ValidationError("negative cap must be >= 1 when set")
    examples = fewshot.examples_in_order()
    if len(examples) < 2:
        raise ValidationError("need at least 2 examples to derive pairs")

    positives: list[Pair] = []
    negatives: list[Pair] = []
    for intent_a, idx_a, a in examples:
        for intent_b, idx_b, b in examples:
            if intent_a == intent_b:
                if idx_a != idx_b:
                    positives.append(
                        Pair(a.text, b.text, True, intent_a, intent_b)
                    )
            else:
                negatives.append(Pair(a.text, b.text, False, intent_a, intent_b))

    if negative_cap_per_positive is not None:
        quota = negative_cap_per_positive * len(positives)
        if quota < len(negatives):
            rng = seeded_rng(seed, "negatives")
            keep = set(rng.sample(range(len(negatives)), quota))
            negatives = [p for i, p in enumerate(negatives) if i in keep]

    return PairSet(
        pairs=tuple(positives + negatives),
        source_seed=seed,
        n_positive=len(positives),
        n_negative=len(negatives),
    )


def _flatten(text: str) -> str:
    # The dump is tab-separated; tabs/newlines inside an utterance would
    # corrupt the record framing.
    return " ".join(text.split())


def dump_pairs(pairset: PairSet, path: str | Path) -> None:
    """Write a pair set as TSV (premise, hypothesis, match) with a header."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["premise", "hypothesis", "match"])
        for pair in pairset.pairs:
            writer.writerow([_flatten(pair.premise), _flatten(pair.hypothesis), int(pair.match)])


def load_pair_records(path: str | Path) -> list[tuple[str, str, bool]]:
    """Read back a pair dump as (premise, hypothesis, match) records."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header != ["premise", "hypothesis", "match"]:
            raise FormatError(f"{path}: expected header premise/hypothesis/match")
        for i, row in enumerate(reader):
            if len(row) != 3 or row[2] not in {"0", "1"}:
                raise FormatError(f"{path}: malformed record at line {i + 2}")
            records.append((row[0], row[1], row[2] == "1"))
    return records
