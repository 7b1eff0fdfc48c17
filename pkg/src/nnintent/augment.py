"""Text augmentation: four in-process edit techniques plus ingestion of
externally produced back-translation files.

Each technique is applied independently to the original utterance, so every
input yields exactly four augmentations. The edit count per technique is
n = max(1, floor(p * L)) for L tokens (the count-based reading of an edit
probability p); ``per_word_bernoulli=True`` switches to drawing n as the
number of per-word Bernoulli(p) successes, which may be zero.

Back-translation generation needs trained translation models and happens
elsewhere; files ingested here are expected to come from temperature-
distorted sampling (tau = 5.0) and are capped at five augmentations per
origin utterance.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .corpus import Dataset, Utterance
from .errors import FormatError, ValidationError
from .seeding import seeded_rng

logger = logging.getLogger(__name__)

MAX_INGESTED_PER_ORIGIN = 5
DEFAULT_EDIT_PROB = 0.1


class Source(str, Enum):
    SYNONYM_REPLACEMENT = "eda-sr"
    RANDOM_INSERTION = "eda-ri"
    RANDOM_SWAP = "eda-rs"
    RANDOM_DELETION = "eda-rd"
    BACK_TRANSLATION = "backtranslation"


EDA_SOURCES = (
    Source.SYNONYM_REPLACEMENT,
    Source.RANDOM_INSERTION,
    Source.RANDOM_SWAP,
    Source.RANDOM_DELETION,
)


@dataclass(frozen=True)
class SynonymLexicon:
    """Case-insensitive token -> synonyms map."""

    entries: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        for token, synonyms in self.entries.items():
            if token != token.lower():
                raise ValidationError(f"lexicon keys must be lowercase: {token!r}")
            if not synonyms:
                raise ValidationError(f"lexicon entry {token!r} has no synonyms")
            if set(synonyms) == {token}:
                raise ValidationError(f"lexicon entry {token!r} only maps to itself")

    def synonyms_of(self, token: str) -> tuple[str, ...]:
        return self.entries.get(token.lower(), ())

    def covers(self, token: str) -> bool:
        return token.lower() in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def load_lexicon(path: str | Path) -> SynonymLexicon:
    """Read a lexicon file: one ``token<TAB>syn1,syn2,...`` entry per line."""
    path = Path(path)
    entries: dict[str, tuple[str, ...]] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read lexicon {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"{path}: line {lineno}: expected token<TAB>synonyms")
        token = parts[0].strip().lower()
        synonyms = tuple(s.strip() for s in parts[1].split(",") if s.strip())
        if not token or not synonyms:
            raise FormatError(f"{path}: line {lineno}: empty token or synonym list")
        entries[token] = synonyms
    return SynonymLexicon(entries=entries)


@dataclass(frozen=True)
class AugmentedExample:
    text: str
    label: str
    source: Source
    origin_text: str
    degenerate: bool = False


def _edit_count(p_edit: float, length: int, rng, per_word_bernoulli: bool) -> int:
    if per_word_bernoulli:
        return sum(1 for _ in range(length) if rng.random() < p_edit)
    return max(1, int(p_edit * length))


def _synonym_replacement(tokens: list[str], n: int, lexicon: SynonymLexicon, rng) -> tuple[list[str], bool]:
    covered = [i for i, tok in enumerate(tokens) if lexicon.covers(tok)]
    if not covered or n == 0:
        return list(tokens), True
    positions = rng.sample(covered, min(n, len(covered)))
    out = list(tokens)
    for pos in sorted(positions):
        choices = [s for s in lexicon.synonyms_of(tokens[pos]) if s.lower() != tokens[pos].lower()]
        if not choices:
            continue
        out[pos] = rng.choice(choices)
    return out, False


def _random_insertion(tokens: list[str], n: int, lexicon: SynonymLexicon, rng) -> tuple[list[str], bool]:
    covered = [tok for tok in tokens if lexicon.covers(tok)]
    if not covered or n == 0:
        return list(tokens), n > 0
    out = list(tokens)
    for _ in range(n):
        token = rng.choice(covered)
        synonym = rng.choice(list(lexicon.synonyms_of(token)))
        out.insert(rng.randint(0, len(out)), synonym)
    return out, False


def _random_swap(tokens: list[str], n: int, rng) -> tuple[list[str], bool]:
    if len(tokens) < 2:
        return list(tokens), n > 0
    out = list(tokens)
    for _ in range(n):
        i, j = rng.sample(range(len(out)), 2)
        out[i], out[j] = out[j], out[i]
    return out, False


def _random_deletion(tokens: list[str], n: int, rng) -> tuple[list[str], bool]:
    # Never delete every token.
    effective = min(n, len(tokens) - 1)
    if effective == 0:
        return list(tokens), n > 0
    drop = set(rng.sample(range(len(tokens)), effective))
    return [tok for i, tok in enumerate(tokens) if i not in drop], effective < n


def eda_augment(
    utterance: Utterance,
    lexicon: SynonymLexicon,
    p_edit: float = DEFAULT_EDIT_PROB,
    seed: int = 0,
    per_word_bernoulli: bool = False,
) -> list[AugmentedExample]:
    """Produce the four edit-technique augmentations of one utterance.

    Synonym replacement, random insertion, random swap, and random deletion
    are each applied to the original token sequence with their own RNG
    stream keyed by (seed, technique). Outputs that could not be edited
    (no lexicon coverage, single-token swaps) are returned unchanged and
    flagged degenerate.
    """
    if not 0.0 < p_edit < 1.0:
        raise ValidationError("edit probability must be in (0, 1)")
    tokens = utterance.text.split()
    if not tokens:
        raise ValidationError("cannot augment a zero-token utterance")

    results = []
    for source in EDA_SOURCES:
        rng = seeded_rng(seed, source.value)
        n = _edit_count(p_edit, len(tokens), rng, per_word_bernoulli)
        if source is Source.SYNONYM_REPLACEMENT:
            out, degenerate = _synonym_replacement(tokens, n, lexicon, rng)
        elif source is Source.RANDOM_INSERTION:
            out, degenerate = _random_insertion(tokens, n, lexicon, rng)
        elif source is Source.RANDOM_SWAP:
            out, degenerate = _random_swap(tokens, n, rng)
        else:
            out, degenerate = _random_deletion(tokens, n, rng)
        results.append(
            AugmentedExample(
                text=" ".join(out),
                label=utterance.label,
                source=source,
                origin_text=utterance.text,
                degenerate=degenerate,
            )
        )
    return results


def load_augmentation_file(
    path: str | Path, dataset: Dataset | None = None
) -> list[AugmentedExample]:
    """Ingest an externally produced augmentation file.

    Tab-separated (origin_text, augmented_text, label) records with a
    header row, parsed as back-translation output. Labels are validated
    against the dataset's inventory when one is given; origins contributing
    more than five augmentations are truncated with a warning.
    """
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise FormatError(f"cannot read augmentation file {path}: {exc}") from exc

    known = set(dataset.intents) if dataset is not None else None
    examples: list[AugmentedExample] = []
    per_origin: dict[str, int] = {}
    with fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != ["origin_text", "augmented_text", "label"]:
            raise FormatError(
                f"{path}: expected header origin_text/augmented_text/label, got {header}"
            )
        for index, row in enumerate(reader):
            if len(row) != 3 or not row[0].strip() or not row[1].strip() or not row[2].strip():
                raise FormatError(f"{path}: malformed record at index {index}")
            origin, augmented, label = row
            if known is not None and label not in known:
                raise ValidationError(
                    f"{path}: record {index} carries unknown label {label!r}"
                )
            seen = per_origin.get(origin, 0)
            if seen >= MAX_INGESTED_PER_ORIGIN:
                logger.warning(
                    "%s: origin %r exceeds %d augmentations; dropping record %d",
                    path, origin, MAX_INGESTED_PER_ORIGIN, index,
                )
                continue
            per_origin[origin] = seen + 1
            examples.append(
                AugmentedExample(
                    text=augmented,
                    label=label,
                    source=Source.BACK_TRANSLATION,
                    origin_text=origin,
                )
            )
    return examples


def dump_augmentations(examples: list[AugmentedExample], path: str | Path) -> None:
    """Write augmentations in the ingestion format (3 columns, header row)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["origin_text", "augmented_text", "label"])
        for ex in examples:
            writer.writerow([" ".join(ex.origin_text.split()),
                             " ".join(ex.text.split()), ex.label])
