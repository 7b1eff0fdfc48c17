"""Intent-detection corpora: loading, validation, K-shot sampling, domain filtering.

The canonical corpus file is a single JSON document::

    {
      "version": 1,
      "domains": {"banking": ["check_balance", ...], ...},
      "splits": {"train": [{"text": ..., "label": ...}, ...], "dev": [...], "test": [...]},
      "oos": {"dev": [{"text": ...}, ...], "test": [...]}
    }

Out-of-scope utterances carry the reserved label ``"oos"``; that string is
rejected as an intent name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, ValidationError
from .seeding import seeded_rng

OOS_LABEL = "oos"

IN_DOMAIN_SPLITS = ("train", "dev", "test")
OOS_SPLITS = ("dev", "test")


@dataclass(frozen=True)
class Utterance:
    """A single labeled utterance. ``label`` is an intent name or ``"oos"``."""

    text: str
    label: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValidationError("utterance text must be non-empty")


@dataclass(frozen=True)
class Dataset:
    """An immutable corpus: intent inventory by domain plus named splits.

    ``splits`` holds in-domain utterances for train/dev/test; ``oos_splits``
    holds out-of-scope utterances for dev/test only.
    """

    domains: dict[str, tuple[str, ...]]
    splits: dict[str, tuple[Utterance, ...]]
    oos_splits: dict[str, tuple[Utterance, ...]]

    def __post_init__(self) -> None:
        inventory = []
        for domain, intents in self.domains.items():
            if not domain.strip():
                raise ValidationError("domain name must be non-empty")
            inventory.extend(intents)
        if not inventory:
            raise ValidationError("intent inventory is empty")
        dupes = {name for name in inventory if inventory.count(name) > 1}
        if dupes:
            raise ValidationError(f"duplicate intent names: {sorted(dupes)}")
        if OOS_LABEL in inventory:
            raise ValidationError(f"{OOS_LABEL!r} is reserved and cannot be an intent name")
        known = set(inventory)
        for split, utterances in self.splits.items():
            for u in utterances:
                if u.label not in known:
                    raise ValidationError(
                        f"label {u.label!r} in split {split!r} is not in the intent inventory"
                    )
        for split, utterances in self.oos_splits.items():
            for u in utterances:
                if u.label != OOS_LABEL:
                    raise ValidationError(
                        f"OOS split {split!r} contains in-domain label {u.label!r}"
                    )

    @property
    def intents(self) -> tuple[str, ...]:
        """All intent names, sorted."""
        return tuple(sorted(name for intents in self.domains.values() for name in intents))

    def domain_of(self, intent: str) -> str:
        for domain, intents in self.domains.items():
            if intent in intents:
                return domain
        raise ValidationError(f"unknown intent {intent!r}")

    def split(self, name: str) -> tuple[Utterance, ...]:
        return self.splits.get(name, ())

    def oos_split(self, name: str) -> tuple[Utterance, ...]:
        return self.oos_splits.get(name, ())

    def train_by_intent(self) -> dict[str, list[Utterance]]:
        grouped: dict[str, list[Utterance]] = {name: [] for name in self.intents}
        for u in self.split("train"):
            grouped[u.label].append(u)
        return grouped

    @property
    def n_in_dev(self) -> int:
        """Size of the in-domain dev population (N_in for calibration)."""
        return len(self.split("dev"))

    @property
    def n_oos_dev(self) -> int:
        """Size of the OOS dev population (N_oos for calibration)."""
        return len(self.oos_split("dev"))


@dataclass(frozen=True)
class FewShotSet:
    """The K-shot example bank: up to K utterances per intent."""

    shots: dict[str, tuple[Utterance, ...]]
    k: int
    seed: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError("K must be >= 1")
        for intent, examples in self.shots.items():
            if len(examples) > self.k:
                raise ValidationError(f"intent {intent!r} has more than K={self.k} shots")
            for u in examples:
                if u.label != intent:
                    raise ValidationError(
                        f"shot labeled {u.label!r} filed under intent {intent!r}"
                    )

    @property
    def intents(self) -> tuple[str, ...]:
        return tuple(sorted(self.shots))

    def total_examples(self) -> int:
        return sum(len(v) for v in self.shots.values())

    def examples_in_order(self) -> list[tuple[str, int, Utterance]]:
        """All examples as (intent, index) pairs in canonical order.

        Canonical order — intents sorted, then bank index — is the shared
        tie-breaking convention for every decision rule.
        """
        out = []
        for intent in self.intents:
            for idx, u in enumerate(self.shots[intent]):
                out.append((intent, idx, u))
        return out


def _require(obj: dict, key: str, kind: type, where: str):
    if key not in obj:
        raise FormatError(f"{where}: missing key {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise FormatError(f"{where}: key {key!r} must be {kind.__name__}")
    return value


def _parse_rows(rows, split: str, *, oos: bool) -> tuple[Utterance, ...]:
    utterances = []
    for i, row in enumerate(rows):
        where = f"{'oos' if oos else 'splits'}.{split}[{i}]"
        if not isinstance(row, dict):
            raise FormatError(f"{where}: expected an object")
        text = _require(row, "text", str, where)
        if oos:
            label = OOS_LABEL
        else:
            label = _require(row, "label", str, where)
        try:
            utterances.append(Utterance(text=text, label=label))
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
    return tuple(utterances)


def load_dataset(path: str | Path) -> Dataset:
    """Load and validate a canonical corpus file.

    Duplicate (text, label) rows are preserved; they are legitimate distinct
    examples.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read corpus file {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")

    version = _require(doc, "version", int, str(path))
    if version != 1:
        raise FormatError(f"{path}: unsupported corpus version {version}")

    domains_raw = _require(doc, "domains", dict, str(path))
    domains = {}
    for domain, intents in domains_raw.items():
        if not isinstance(intents, list) or not all(isinstance(i, str) for i in intents):
            raise FormatError(f"{path}: domains.{domain} must be a list of intent names")
        domains[domain] = tuple(intents)

    splits_raw = _require(doc, "splits", dict, str(path))
    splits = {}
    for split in IN_DOMAIN_SPLITS:
        rows = splits_raw.get(split, [])
        if not isinstance(rows, list):
            raise FormatError(f"{path}: splits.{split} must be a list")
        splits[split] = _parse_rows(rows, split, oos=False)
    unknown = set(splits_raw) - set(IN_DOMAIN_SPLITS)
    if unknown:
        raise FormatError(f"{path}: unknown split names {sorted(unknown)}")

    oos_raw = doc.get("oos", {})
    if not isinstance(oos_raw, dict):
        raise FormatError(f"{path}: 'oos' must be an object")
    oos_splits = {}
    for split in OOS_SPLITS:
        rows = oos_raw.get(split, [])
        if not isinstance(rows, list):
            raise FormatError(f"{path}: oos.{split} must be a list")
        oos_splits[split] = _parse_rows(rows, split, oos=True)
    unknown = set(oos_raw) - set(OOS_SPLITS)
    if unknown:
        raise FormatError(f"{path}: unknown OOS split names {sorted(unknown)}")

    return Dataset(domains=domains, splits=splits, oos_splits=oos_splits)


def sample_k_shot(dataset: Dataset, k: int, seed: int) -> FewShotSet:
    """Draw K train utterances per intent, uniformly without replacement.

    Each intent gets its own RNG stream keyed by (seed, intent name), so
    adding an intent to the corpus never changes another intent's sample.
    Intents with fewer than K train utterances contribute all of them.
    """
    if k < 1:
        raise ValidationError("K must be >= 1")
    grouped = dataset.train_by_intent()
    shots: dict[str, tuple[Utterance, ...]] = {}
    for intent in dataset.intents:
        pool = grouped[intent]
        if not pool:
            raise ValidationError(f"intent {intent!r} has no train utterances to sample from")
        if len(pool) <= k:
            chosen = list(pool)
        else:
            chosen = seeded_rng(seed, intent).sample(pool, k)
        shots[intent] = tuple(chosen)
    return FewShotSet(shots=shots, k=k, seed=seed)


def domain_filter(dataset: Dataset, domain: str) -> Dataset:
    """Restrict a dataset to one domain's intents. OOS splits pass through."""
    if domain not in dataset.domains:
        raise ValidationError(
            f"unknown domain {domain!r}; available: {sorted(dataset.domains)}"
        )
    keep = set(dataset.domains[domain])
    return Dataset(
        domains={domain: dataset.domains[domain]},
        splits={
            name: tuple(u for u in utterances if u.label in keep)
            for name, utterances in dataset.splits.items()
        },
        oos_splits=dict(dataset.oos_splits),
    )


def convert_clinc(src: str | Path, dst: str | Path, domains_map: dict[str, list[str]] | None = None) -> Dataset:
    """Convert a CLINC150-style ``data_full.json`` into the canonical format.

    The public file holds ``train/val/test`` plus ``oos_val/oos_test`` as
    lists of ``[text, label]`` pairs. ``val`` maps to ``dev``. ``oos_train``
    has no slot in the canonical format (no decision rule here trains on OOS
    data) and is dropped. Without a ``domains_map`` every intent lands in a
    single ``"all"`` domain.
    """
    src = Path(src)
    try:
        doc = json.loads(src.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read {src}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{src}: line {exc.lineno}: {exc.msg}") from exc

    def rows(key: str) -> list:
        out = []
        for i, pair in enumerate(doc.get(key, [])):
            if not isinstance(pair, list) or len(pair) != 2:
                raise FormatError(f"{src}: {key}[{i}] must be a [text, label] pair")
            out.append(pair)
        return out

    split_map = {"train": "train", "val": "dev", "test": "test"}
    splits = {dst_name: [{"text": t, "label": l} for t, l in rows(src_name)]
              for src_name, dst_name in split_map.items()}
    oos = {dst_name: [{"text": t} for t, _ in rows(f"oos_{src_name}")]
           for src_name, dst_name in (("val", "dev"), ("test", "test"))}

    seen = sorted({row["label"] for split in splits.values() for row in split})
    if domains_map is None:
        domains = {"all": seen}
    else:
        domains = {d: list(intents) for d, intents in domains_map.items()}
        mapped = [i for intents in domains.values() for i in intents]
        missing = sorted(set(seen) - set(mapped))
        if missing:
            raise ValidationError(f"domains map does not cover intents: {missing}")

    canonical = {"version": 1, "domains": domains, "splits": splits, "oos": oos}
    dst = Path(dst)
    dst.write_text(json.dumps(canonical, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    return load_dataset(dst)


def dataset_stats(dataset: Dataset) -> dict:
    """Summary counts used by ``corpus stats``."""
    per_domain = {
        domain: {
            "intents": len(intents),
            "train": sum(1 for u in dataset.split("train") if u.label in intents),
            "dev": sum(1 for u in dataset.split("dev") if u.label in intents),
            "test": sum(1 for u in dataset.split("test") if u.label in intents),
        }
        for domain, intents in dataset.domains.items()
    }
    return {
        "intents": len(dataset.intents),
        "domains": per_domain,
        "splits": {name: len(dataset.split(name)) for name in IN_DOMAIN_SPLITS},
        "oos": {name: len(dataset.oos_split(name)) for name in OOS_SPLITS},
    }
