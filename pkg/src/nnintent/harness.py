"""Seeded multi-run experiment driver.

One run = sample a K-shot bank, optionally augment it, score the dev split,
calibrate the rejection threshold on dev only, then evaluate the test split
with that frozen threshold. Runs fan out over a (hyper-parameter grid x
seed) matrix in a worker pool; the best grid point is chosen by mean dev
joint score. Test confidences can never influence threshold choice: the
calibrator only ever sees dev instances.
"""

from __future__ import annotations

import json
import os
import shutil
import statistics
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

from . import classify
from .augment import DEFAULT_EDIT_PROB, eda_augment, load_augmentation_file, load_lexicon
from .classify import Method, Scored
from .corpus import Dataset, FewShotSet, Utterance, domain_filter, sample_k_shot
from .errors import ExperimentError, NNIntentError, ValidationError
from .evaluation import CalibrationResult, ScoredInstance, calibrate_threshold, compute_metrics
from .pairs import dump_pairs, generate_pairs
from .scorers import DEFAULT_EMBED_DIM, BuiltinScorer, open_scorer
from .seeding import seeded_rng

# Placeholders a trainable scorer command may carry; each run substitutes
# its own grid point, seed, and pair-dump path.
SCORER_PLACEHOLDERS = ("{learning_rate}", "{epochs}", "{batch_size}", "{seed}", "{pairs_file}")

DEFAULT_RUNS_SINGLE_DOMAIN = 10
DEFAULT_RUNS_ALL_DOMAINS = 5


@dataclass(frozen=True)
class AugmentationSpec:
    """How to expand the sampled bank before scoring.

    ``eda`` applies the four edit techniques to every shot; ``ingest``
    attaches externally produced augmentations matched by origin text.
    """

    kind: str
    lexicon: str | None = None
    path: str | None = None
    p_edit: float = DEFAULT_EDIT_PROB
    per_word_bernoulli: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("eda", "ingest"):
            raise ValidationError(f"unknown augmentation kind {self.kind!r}")
        if self.kind == "eda" and not self.lexicon:
            raise ValidationError("eda augmentation needs a lexicon path")
        if self.kind == "ingest" and not self.path:
            raise ValidationError("ingest augmentation needs a file path")


@dataclass(frozen=True)
class ExperimentConfig:
    method: Method
    corpus: str | None = None
    k_shot: int = 5
    top_k: int = 10
    knn_k: int = 1
    runs: int | None = None
    seeds: tuple[int, ...] | None = None
    base_seed: int = 0
    scorer: str = "builtin"
    embed_dim: int = DEFAULT_EMBED_DIM
    pair_direction: str = "input-first"
    domain: str | None = None
    augmentation: AugmentationSpec | None = None
    grid: dict[str, tuple] = field(default_factory=dict)
    negative_cap: int | None = None
    workers: int | None = None
    scorer_parallelism: int = 1

    def __post_init__(self) -> None:
        if self.k_shot < 1 or self.top_k < 1 or self.knn_k < 1:
            raise ValidationError("k_shot, top_k, and knn_k must be >= 1")
        if self.scorer_parallelism < 1:
            raise ValidationError("scorer_parallelism must be >= 1")
        if self.seeds is not None and self.runs is not None and len(self.seeds) != self.runs:
            raise ValidationError(
                f"got {len(self.seeds)} seeds for {self.runs} runs; counts must match"
            )
        if self.is_trainable_scorer and not all(self.grid.get(k) for k in
                                                ("learning_rate", "epochs", "batch_size")):
            raise ValidationError(
                "a trainable scorer command needs non-empty grid values for "
                "learning_rate, epochs, and batch_size"
            )

    @property
    def is_trainable_scorer(self) -> bool:
        return any(p in self.scorer for p in SCORER_PLACEHOLDERS)

    def resolved_runs(self) -> int:
        if self.runs is not None:
            return self.runs
        if self.seeds is not None:
            return len(self.seeds)
        return DEFAULT_RUNS_SINGLE_DOMAIN if self.domain else DEFAULT_RUNS_ALL_DOMAINS

    def resolved_seeds(self) -> tuple[int, ...]:
        if self.seeds is not None:
            return self.seeds
        return tuple(self.base_seed + i for i in range(self.resolved_runs()))

    def grid_points(self) -> list[dict]:
        axes = [(k, list(v)) for k, v in sorted(self.grid.items()) if v]
        if not axes:
            return [{}]
        names = [k for k, _ in axes]
        return [dict(zip(names, combo)) for combo in product(*(v for _, v in axes))]


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a config from a parsed JSON document (the config-file format)."""
    data = dict(doc)
    if "method" not in data:
        raise ValidationError("experiment config needs a 'method'")
    try:
        data["method"] = Method(data["method"])
    except ValueError as exc:
        raise ValidationError(f"unknown method {data['method']!r}") from exc
    if data.get("augmentation") is not None:
        data["augmentation"] = AugmentationSpec(**data["augmentation"])
    if data.get("seeds") is not None:
        data["seeds"] = tuple(int(s) for s in data["seeds"])
    if data.get("grid") is not None:
        data["grid"] = {k: tuple(v) for k, v in data["grid"].items()}
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown experiment config keys: {sorted(unknown)}")
    return ExperimentConfig(**data)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(doc)


def grid_point_id(point: dict) -> str:
    if not point:
        return "default"
    order = {"learning_rate": "lr", "epochs": "ep", "batch_size": "bs"}
    parts = []
    for key in list(order) + sorted(set(point) - set(order)):
        if key in point:
            parts.append(f"{order.get(key, key)}={point[key]!r}".replace("'", ""))
    return ",".join(parts)


@dataclass(frozen=True)
class RunRow:
    grid_point: str
    seed: int
    status: str
    dev_joint: float = float("nan")
    threshold: float = float("nan")
    test_acc_in: float = float("nan")
    test_r_oos: float = float("nan")
    test_joint: float = float("nan")
    error: str = ""


@dataclass(frozen=True)
class Aggregate:
    grid_point: str
    n_ok: int
    mean_dev_joint: float
    std_dev_joint: float
    mean_test_acc_in: float
    mean_test_r_oos: float
    mean_test_joint: float
    std_test_joint: float


@dataclass(frozen=True)
class ResultTable:
    rows: tuple[RunRow, ...]
    aggregates: tuple[Aggregate, ...]
    best_grid_point: str

    def to_results_tsv(self) -> str:
        lines = ["\t".join([
            "grid_point", "seed", "status", "dev_joint", "threshold",
            "test_acc_in", "test_r_oos", "test_joint", "error",
        ])]
        for r in self.rows:
            lines.append("\t".join([
                r.grid_point, str(r.seed), r.status, repr(r.dev_joint), repr(r.threshold),
                repr(r.test_acc_in), repr(r.test_r_oos), repr(r.test_joint), r.error,
            ]))
        return "\n".join(lines) + "\n"

    def to_aggregates_tsv(self) -> str:
        lines = ["\t".join([
            "grid_point", "best", "n_ok", "mean_dev_joint", "std_dev_joint",
            "mean_test_acc_in", "mean_test_r_oos", "mean_test_joint", "std_test_joint",
        ])]
        for a in self.aggregates:
            lines.append("\t".join([
                a.grid_point, str(int(a.grid_point == self.best_grid_point)), str(a.n_ok),
                repr(a.mean_dev_joint), repr(a.std_dev_joint), repr(a.mean_test_acc_in),
                repr(a.mean_test_r_oos), repr(a.mean_test_joint), repr(a.std_test_joint),
            ]))
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        results = out_dir / "results.tsv"
        aggregates = out_dir / "aggregates.tsv"
        results.write_text(self.to_results_tsv(), encoding="utf-8")
        aggregates.write_text(self.to_aggregates_tsv(), encoding="utf-8")
        return [results, aggregates]


class CachingEmbedder:
    """Wrap a scorer handle and memoize embeddings by text.

    A run embeds the same bank for every input; caching keeps remote
    traffic linear in the number of distinct texts.
    """

    def __init__(self, handle):
        self._handle = handle
        self._cache: dict[str, list[float]] = {}
        self.capabilities = handle.capabilities
        self.batch_limit = getattr(handle, "batch_limit", None)

    def embed(self, texts: list[str]) -> list[list[float]]:
        missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            for text, vec in zip(missing, self._handle.embed(missing)):
                self._cache[text] = vec
        return [self._cache[t] for t in texts]

    def score_pairs(self, pairs):
        return self._handle.score_pairs(pairs)

    def close(self) -> None:
        self._handle.close()


def derived_seed(seed: int, *context: str) -> int:
    """A deterministic 32-bit sub-seed for a named context."""
    return seeded_rng(seed, *context).getrandbits(32)


def expand_bank(
    bank: FewShotSet, spec: AugmentationSpec, dataset: Dataset, seed: int
) -> FewShotSet:
    """Append augmented examples to every intent's shot list."""
    extended: dict[str, list[Utterance]] = {
        intent: list(examples) for intent, examples in bank.shots.items()
    }
    if spec.kind == "eda":
        lexicon = load_lexicon(spec.lexicon)
        for intent in sorted(bank.shots):
            for idx, shot in enumerate(bank.shots[intent]):
                for aug in eda_augment(
                    shot,
                    lexicon,
                    p_edit=spec.p_edit,
                    seed=derived_seed(seed, "augment", intent, str(idx)),
                    per_word_bernoulli=spec.per_word_bernoulli,
                ):
                    extended[intent].append(Utterance(text=aug.text, label=intent))
    else:
        by_origin: dict[tuple[str, str], list[str]] = {}
        for aug in load_augmentation_file(spec.path, dataset):
            by_origin.setdefault((aug.origin_text, aug.label), []).append(aug.text)
        for intent in sorted(bank.shots):
            for shot in bank.shots[intent]:
                for text in by_origin.get((shot.text, intent), []):
                    extended[intent].append(Utterance(text=text, label=intent))
    shots = {intent: tuple(examples) for intent, examples in extended.items()}
    new_k = max(len(examples) for examples in shots.values())
    return FewShotSet(shots=shots, k=new_k, seed=bank.seed)


def score_utterance(
    method: Method,
    text: str,
    bank: FewShotSet,
    scorer,
    *,
    knn_k: int = 1,
    top_k: int = 10,
    pair_direction: str = "input-first",
) -> Scored:
    """Run one decision rule's pre-threshold scoring on one input."""
    if method is Method.DNNC:
        return classify.dnnc_score(text, bank, scorer, pair_direction)
    if method is Method.EMB_KNN:
        return classify.emb_knn_score(text, bank, scorer, knn_k)
    if method is Method.CLASSIFIER:
        scored, _ = classify.centroid_classifier_score(text, bank, scorer)
        return scored
    return classify.dnnc_joint_score(text, bank, scorer, scorer, top_k, pair_direction)


def score_split(
    method: Method,
    dataset: Dataset,
    split: str,
    bank: FewShotSet,
    scorer,
    *,
    knn_k: int = 1,
    top_k: int = 10,
    pair_direction: str = "input-first",
) -> list[tuple[Utterance, Scored]]:
    """Score every in-domain + OOS utterance of a named split."""
    inputs = list(dataset.split(split)) + list(dataset.oos_split(split))
    if not inputs:
        raise ValidationError(f"split {split!r} is empty")
    out = []
    for utterance in inputs:
        scored = score_utterance(
            method, utterance.text, bank, scorer,
            knn_k=knn_k, top_k=top_k, pair_direction=pair_direction,
        )
        out.append((utterance, scored))
    return out


def score_split_pooled(
    method: Method,
    dataset: Dataset,
    split: str,
    bank: FewShotSet,
    handles: list,
    *,
    knn_k: int = 1,
    top_k: int = 10,
    pair_direction: str = "input-first",
) -> list[tuple[Utterance, Scored]]:
    """Score a split across several scorer handles.

    Inputs are strided over the handles and each handle stays on one
    thread, so handles are never shared concurrently; the merged output
    keeps the split's original order.
    """
    if len(handles) == 1:
        return score_split(
            method, dataset, split, bank, handles[0],
            knn_k=knn_k, top_k=top_k, pair_direction=pair_direction,
        )
    inputs = list(dataset.split(split)) + list(dataset.oos_split(split))
    if not inputs:
        raise ValidationError(f"split {split!r} is empty")

    def score_stride(offset_handle):
        offset, handle = offset_handle
        results = []
        for i in range(offset, len(inputs), len(handles)):
            scored = score_utterance(
                method, inputs[i].text, bank, handle,
                knn_k=knn_k, top_k=top_k, pair_direction=pair_direction,
            )
            results.append((i, inputs[i], scored))
        return results

    merged: list = [None] * len(inputs)
    with ThreadPoolExecutor(max_workers=len(handles)) as pool:
        for batch in pool.map(score_stride, enumerate(handles)):
            for i, utterance, scored in batch:
                merged[i] = (utterance, scored)
    return merged


def to_instances(scored_split: list[tuple[Utterance, Scored]]) -> list[ScoredInstance]:
    return [
        ScoredInstance(
            confidence=scored.confidence,
            predicted_label=scored.predicted_label,
            gold=utterance.label,
        )
        for utterance, scored in scored_split
    ]


def _open_run_scorer(config: ExperimentConfig, point: dict, seed: int, bank: FewShotSet):
    spec = config.scorer
    if spec == "builtin":
        return BuiltinScorer(embed_dim=config.embed_dim), None
    tmp = None
    if "{pairs_file}" in spec:
        tmp = tempfile.mkdtemp(prefix="nnintent-pairs-")
        pairs_path = Path(tmp) / "pairs.tsv"
        dump_pairs(generate_pairs(bank, config.negative_cap, seed), pairs_path)
        spec = spec.replace("{pairs_file}", str(pairs_path))
    spec = spec.replace("{seed}", str(seed))
    for key in ("learning_rate", "epochs", "batch_size"):
        if "{" + key + "}" in spec:
            spec = spec.replace("{" + key + "}", str(point[key]))
    return open_scorer(spec, embed_dim=config.embed_dim), tmp


def _run_one(config: ExperimentConfig, dataset: Dataset, point: dict, seed: int) -> RunRow:
    gp = grid_point_id(point)
    tmps: list[str] = []
    try:
        bank = sample_k_shot(dataset, config.k_shot, seed)
        if config.augmentation is not None:
            bank = expand_bank(bank, config.augmentation, dataset, seed)
        handles = []
        try:
            for _ in range(config.scorer_parallelism):
                handle, handle_tmp = _open_run_scorer(config, point, seed, bank)
                if handle_tmp is not None:
                    tmps.append(handle_tmp)
                handles.append(CachingEmbedder(handle))
            dev = to_instances(score_split_pooled(
                config.method, dataset, "dev", bank, handles,
                knn_k=config.knn_k, top_k=config.top_k,
                pair_direction=config.pair_direction,
            ))
            calibration = calibrate_threshold(dev)
            test = to_instances(score_split_pooled(
                config.method, dataset, "test", bank, handles,
                knn_k=config.knn_k, top_k=config.top_k,
                pair_direction=config.pair_direction,
            ))
            metrics = compute_metrics(test, calibration.threshold)
        finally:
            for handle in handles:
                handle.close()
        return RunRow(
            grid_point=gp,
            seed=seed,
            status="ok",
            dev_joint=calibration.joint_at_threshold,
            threshold=calibration.threshold,
            test_acc_in=metrics.acc_in,
            test_r_oos=metrics.r_oos,
            test_joint=metrics.joint,
        )
    except NNIntentError as exc:
        return RunRow(grid_point=gp, seed=seed, status="failed", error=str(exc))
    finally:
        for tmp in tmps:
            shutil.rmtree(tmp, ignore_errors=True)


def run_experiment(config: ExperimentConfig, dataset: Dataset) -> ResultTable:
    """Execute the full (grid point x seed) matrix and aggregate results.

    Failed runs are recorded and excluded from aggregates; the experiment
    only errors when every run failed.
    """
    if not dataset.oos_split("dev") or not dataset.oos_split("test"):
        raise ValidationError("experiment needs OOS dev and test splits")
    if config.domain:
        dataset = domain_filter(dataset, config.domain)

    seeds = config.resolved_seeds()
    points = config.grid_points()
    jobs = [(point, seed) for point in points for seed in seeds]

    workers = config.workers or min(len(jobs), os.cpu_count() or 1)
    if workers <= 1 or len(jobs) == 1:
        rows = [_run_one(config, dataset, point, seed) for point, seed in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda job: _run_one(config, dataset, *job), jobs))
    rows.sort(key=lambda r: (r.grid_point, r.seed))

    ok_rows = [r for r in rows if r.status == "ok"]
    if not ok_rows:
        details = "; ".join(f"{r.grid_point}/seed={r.seed}: {r.error}" for r in rows[:3])
        raise ExperimentError(f"all {len(rows)} runs failed ({details})")

    aggregates = []
    for point in points:
        gp = grid_point_id(point)
        group = [r for r in ok_rows if r.grid_point == gp]
        if not group:
            continue
        aggregates.append(Aggregate(
            grid_point=gp,
            n_ok=len(group),
            mean_dev_joint=statistics.fmean(r.dev_joint for r in group),
            std_dev_joint=statistics.pstdev([r.dev_joint for r in group]),
            mean_test_acc_in=statistics.fmean(r.test_acc_in for r in group),
            mean_test_r_oos=statistics.fmean(r.test_r_oos for r in group),
            mean_test_joint=statistics.fmean(r.test_joint for r in group),
            std_test_joint=statistics.pstdev([r.test_joint for r in group]),
        ))
    best_joint = max(a.mean_dev_joint for a in aggregates)
    best = min(a.grid_point for a in aggregates if a.mean_dev_joint == best_joint)
    return ResultTable(rows=tuple(rows), aggregates=tuple(aggregates), best_grid_point=best)
