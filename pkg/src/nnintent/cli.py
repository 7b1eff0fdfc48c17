"""Command-line interface.

Exit codes: 0 success, 2 validation problem, 3 remote-scorer protocol
problem, 4 I/O problem.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import click

from . import classify, harness
from .augment import dump_augmentations, eda_augment, load_augmentation_file, load_lexicon
from .classify import Method
from .corpus import (
    convert_clinc,
    dataset_stats,
    domain_filter,
    load_dataset,
    sample_k_shot,
)
from .errors import EXIT_IO, NNIntentError, ValidationError
from .evaluation import (
    CaseRow,
    calibrate_threshold,
    compute_metrics,
    export_report,
    write_curve_tsv,
)
from .harness import (
    CachingEmbedder,
    config_from_dict,
    load_config,
    run_experiment,
    score_split_pooled,
    to_instances,
)
from .pairs import dump_pairs, generate_pairs
from .reports import CURVE_FIGURE, HISTOGRAM_FIGURE, render_curve_figure, render_histogram_figure
from .scorers import DEFAULT_EMBED_DIM, CAP_EMBED, open_scorer


@dataclass
class Settings:
    seed: int
    config: str | None
    scorer: str
    pair_direction: str
    threshold: float | None
    scorer_parallelism: int


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="Base random seed.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Experiment config file (JSON).")
@click.option("--scorer", default="builtin", show_default=True,
              help="Scorer spec: builtin, cmd:<command>, or tcp:<host>:<port>.")
@click.option("--pair-direction", type=click.Choice(list(classify.PAIR_DIRECTIONS)),
              default="input-first", show_default=True,
              help="Premise/hypothesis order for pairwise scoring.")
@click.option("--threshold", type=float, default=None,
              help="Rejection threshold in [0, 1] for predict/evaluate.")
@click.option("--scorer-parallelism", type=int, default=1, show_default=True,
              help="Parallel scorer handles for split scoring.")
@click.pass_context
def cli(ctx, seed, config_path, scorer, pair_direction, threshold, scorer_parallelism):
    """Few-shot intent detection with out-of-scope rejection."""
    if scorer_parallelism < 1:
        raise ValidationError("--scorer-parallelism must be >= 1")
    ctx.obj = Settings(
        seed=seed,
        config=config_path,
        scorer=scorer,
        pair_direction=pair_direction,
        threshold=threshold,
        scorer_parallelism=scorer_parallelism,
    )


@cli.group()
def corpus():
    """Corpus conversion and inspection."""


@corpus.command("convert")
@click.option("--from", "source_format", type=click.Choice(["clinc"]), required=True,
              help="Source format of the input file.")
@click.option("--domains", "domains_path", type=click.Path(exists=True), default=None,
              help="JSON file mapping domain names to intent lists.")
@click.argument("src", type=click.Path(exists=True))
@click.argument("dst", type=click.Path())
def corpus_convert(source_format, domains_path, src, dst):
    """Convert a public corpus file into the canonical format."""
    domains_map = None
    if domains_path:
        domains_map = json.loads(Path(domains_path).read_text(encoding="utf-8"))
    dataset = convert_clinc(src, dst, domains_map)
    stats = dataset_stats(dataset)
    click.echo(f"wrote {dst}: {stats['intents']} intents, "
               f"{stats['splits']['train']} train / {stats['splits']['dev']} dev / "
               f"{stats['splits']['test']} test utterances")


@corpus.command("stats")
@click.argument("corpus_file", type=click.Path(exists=True))
def corpus_stats(corpus_file):
    """Print corpus summary counts as JSON."""
    click.echo(json.dumps(dataset_stats(load_dataset(corpus_file)), indent=2))


def _load_corpus(corpus_file: str, domain: str | None):
    dataset = load_dataset(corpus_file)
    if domain:
        dataset = domain_filter(dataset, domain)
    return dataset


@cli.command("sample")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=5, show_default=True, help="Shots per intent.")
@click.option("--domain", default=None, help="Restrict to one domain.")
@click.option("-o", "--out", type=click.Path(), default=None,
              help="Write the bank as JSON instead of printing a summary.")
@click.pass_obj
def sample_cmd(settings, corpus_file, k, domain, out):
    """Sample a K-shot example bank from the train split."""
    dataset = _load_corpus(corpus_file, domain)
    bank = sample_k_shot(dataset, k, settings.seed)
    doc = {
        "k": bank.k,
        "seed": bank.seed,
        "shots": {intent: [u.text for u in bank.shots[intent]] for intent in bank.intents},
    }
    if out:
        Path(out).write_text(json.dumps(doc, ensure_ascii=False, indent=1) + "\n",
                             encoding="utf-8")
        click.echo(f"wrote {out}: {bank.total_examples()} examples over {len(bank.intents)} intents")
    else:
        click.echo(json.dumps(doc, ensure_ascii=False, indent=1))


@cli.group("pairs")
def pairs_group():
    """Pair generation for match-model training."""


@pairs_group.command("dump")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--domain", default=None)
@click.option("--cap", type=int, default=None,
              help="Negatives kept per positive (default: all negatives).")
@click.option("-o", "--out", type=click.Path(), required=True)
@click.pass_obj
def pairs_dump(settings, corpus_file, k, domain, cap, out):
    """Sample a bank and write its ordered pairs as TSV."""
    dataset = _load_corpus(corpus_file, domain)
    bank = sample_k_shot(dataset, k, settings.seed)
    pairset = generate_pairs(bank, cap, settings.seed)
    dump_pairs(pairset, out)
    click.echo(f"wrote {out}: {pairset.n_positive} positives, {pairset.n_negative} negatives")


@cli.group("augment")
def augment_group():
    """Data augmentation."""


@augment_group.command("eda")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--lexicon", "lexicon_file", type=click.Path(exists=True), required=True)
@click.option("--split", default="train", show_default=True)
@click.option("--p-edit", type=float, default=0.1, show_default=True)
@click.option("--per-word-bernoulli", is_flag=True, default=False,
              help="Draw the edit count as per-word Bernoulli successes.")
@click.option("-o", "--out", type=click.Path(), required=True)
@click.pass_obj
def augment_eda(settings, corpus_file, lexicon_file, split, p_edit, per_word_bernoulli, out):
    """Write the four edit-technique augmentations of a split."""
    dataset = load_dataset(corpus_file)
    lexicon = load_lexicon(lexicon_file)
    utterances = dataset.split(split)
    if not utterances:
        raise ValidationError(f"split {split!r} is empty")
    produced = []
    for index, utterance in enumerate(utterances):
        produced.extend(eda_augment(
            utterance, lexicon, p_edit=p_edit,
            seed=harness.derived_seed(settings.seed, "augment", utterance.label, str(index)),
            per_word_bernoulli=per_word_bernoulli,
        ))
    dump_augmentations(produced, out)
    click.echo(f"wrote {out}: {len(produced)} augmentations from {len(utterances)} utterances")


@augment_group.command("ingest")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), default=None,
              help="Validate labels against this corpus.")
@click.argument("aug_file", type=click.Path(exists=True))
def augment_ingest(corpus_file, aug_file):
    """Validate an externally produced augmentation file."""
    dataset = load_dataset(corpus_file) if corpus_file else None
    examples = load_augmentation_file(aug_file, dataset)
    origins = {ex.origin_text for ex in examples}
    click.echo(f"{aug_file}: {len(examples)} augmentations over {len(origins)} origin utterances")


def _method_option(fn):
    return click.option(
        "--method", type=click.Choice([m.value for m in Method]),
        default=Method.DNNC.value, show_default=True,
    )(fn)


def _bank_and_scorer(settings, corpus_file, domain, k, embed_dim):
    dataset = _load_corpus(corpus_file, domain)
    bank = sample_k_shot(dataset, k, settings.seed)
    handles = [
        CachingEmbedder(open_scorer(settings.scorer, embed_dim=embed_dim))
        for _ in range(settings.scorer_parallelism)
    ]
    return dataset, bank, handles


def _close_all(handles):
    for handle in handles:
        handle.close()


@cli.command("predict")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--domain", default=None)
@_method_option
@click.option("--knn-k", type=int, default=1, show_default=True)
@click.option("--top-k", type=int, default=10, show_default=True)
@click.option("--embed-dim", type=int, default=DEFAULT_EMBED_DIM, show_default=True)
@click.argument("input_file", type=click.File("r", encoding="utf-8"), default="-")
@click.pass_obj
def predict_cmd(settings, corpus_file, k, domain, method, knn_k, top_k, embed_dim, input_file):
    """Classify utterances (one per line) and emit one JSON record per line."""
    if settings.threshold is None:
        raise ValidationError("predict needs --threshold (calibrate one on the dev split first)")
    method = Method(method)
    _, bank, handles = _bank_and_scorer(settings, corpus_file, domain, k, embed_dim)
    try:
        for line in input_file:
            text = line.strip()
            if not text:
                continue
            scored = harness.score_utterance(
                method, text, bank, handles[0],
                knn_k=knn_k, top_k=top_k, pair_direction=settings.pair_direction,
            )
            prediction = classify.gate(scored, settings.threshold, method)
            matched = prediction.matched_example
            click.echo(json.dumps({
                "text": text,
                "decision": prediction.decision,
                "confidence": prediction.confidence,
                "matched_text": matched.text if matched else None,
                "matched_label": matched.label if matched else None,
            }, ensure_ascii=False))
    finally:
        _close_all(handles)


def _scored_split(settings, dataset, bank, handles, method, split, knn_k, top_k):
    return score_split_pooled(
        method, dataset, split, bank, handles,
        knn_k=knn_k, top_k=top_k, pair_direction=settings.pair_direction,
    )


@cli.command("calibrate")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--domain", default=None)
@_method_option
@click.option("--knn-k", type=int, default=1, show_default=True)
@click.option("--top-k", type=int, default=10, show_default=True)
@click.option("--embed-dim", type=int, default=DEFAULT_EMBED_DIM, show_default=True)
@click.option("-o", "--curve-out", type=click.Path(), default=None,
              help="Also write the sweep curve as TSV.")
@click.pass_obj
def calibrate_cmd(settings, corpus_file, k, domain, method, knn_k, top_k, embed_dim, curve_out):
    """Sweep thresholds on the dev split and print the best one."""
    method = Method(method)
    dataset, bank, handles = _bank_and_scorer(settings, corpus_file, domain, k, embed_dim)
    try:
        dev = to_instances(_scored_split(settings, dataset, bank, handles, method,
                                         "dev", knn_k, top_k))
    finally:
        _close_all(handles)
    calibration = calibrate_threshold(dev)
    if curve_out:
        write_curve_tsv(calibration, curve_out)
    click.echo(json.dumps({
        "threshold": calibration.threshold,
        "joint": calibration.joint_at_threshold,
        "candidates": len(calibration.curve),
    }))


@cli.command("evaluate")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--domain", default=None)
@_method_option
@click.option("--split", default="test", show_default=True, type=click.Choice(["dev", "test"]))
@click.option("--knn-k", type=int, default=1, show_default=True)
@click.option("--top-k", type=int, default=10, show_default=True)
@click.option("--embed-dim", type=int, default=DEFAULT_EMBED_DIM, show_default=True)
@click.pass_obj
def evaluate_cmd(settings, corpus_file, k, domain, method, split, knn_k, top_k, embed_dim):
    """Evaluate a split at a frozen threshold and print metrics as JSON."""
    if settings.threshold is None:
        raise ValidationError("evaluate needs --threshold (the frozen dev-calibrated value)")
    method = Method(method)
    dataset, bank, handles = _bank_and_scorer(settings, corpus_file, domain, k, embed_dim)
    try:
        instances = to_instances(_scored_split(settings, dataset, bank, handles, method,
                                               split, knn_k, top_k))
    finally:
        _close_all(handles)
    metrics = compute_metrics(instances, settings.threshold)
    click.echo(json.dumps({"split": split, "threshold": settings.threshold,
                           **metrics.as_dict()}))


@cli.command("report")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--domain", default=None)
@_method_option
@click.option("--knn-k", type=int, default=1, show_default=True)
@click.option("--top-k", type=int, default=10, show_default=True)
@click.option("--embed-dim", type=int, default=DEFAULT_EMBED_DIM, show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True,
              help="Render PNG figures next to the TSV tables.")
@click.option("-o", "--out-dir", type=click.Path(), required=True)
@click.pass_obj
def report_cmd(settings, corpus_file, k, domain, method, knn_k, top_k, embed_dim,
               figures, out_dir):
    """Calibrate on dev, evaluate test, and write the full report directory."""
    method = Method(method)
    dataset, bank, handles = _bank_and_scorer(settings, corpus_file, domain, k, embed_dim)
    try:
        dev_scored = _scored_split(settings, dataset, bank, handles, method, "dev", knn_k, top_k)
        calibration = calibrate_threshold(to_instances(dev_scored))
        test_scored = _scored_split(settings, dataset, bank, handles, method, "test", knn_k, top_k)
        test_instances = to_instances(test_scored)
        metrics = compute_metrics(test_instances, calibration.threshold)

        cases = [
            CaseRow(
                input_text=utterance.text,
                prediction=classify.gate(scored, calibration.threshold, method),
                gold=utterance.label,
            )
            for utterance, scored in test_scored
        ]
        embeddings = None
        embedder = handles[0]
        if CAP_EMBED in embedder.capabilities:
            bank_rows = [(u.text, intent, embedder.embed([u.text])[0])
                         for intent, _, u in bank.examples_in_order()]
            input_rows = [(u.text, u.label, embedder.embed([u.text])[0])
                          for u, _ in test_scored]
            embeddings = bank_rows + input_rows
    finally:
        _close_all(handles)

    out = Path(out_dir)
    written = export_report(
        out,
        calibration=calibration,
        instances=test_instances,
        cases=cases,
        embeddings=embeddings,
    )
    (out / "metrics.json").write_text(
        json.dumps({"threshold": calibration.threshold,
                    "dev_joint": calibration.joint_at_threshold,
                    **metrics.as_dict()}, indent=2) + "\n",
        encoding="utf-8",
    )
    written.append(out / "metrics.json")
    if figures:
        written.append(render_curve_figure(calibration, out / CURVE_FIGURE))
        written.append(render_histogram_figure(test_instances, out / HISTOGRAM_FIGURE))
    for path in written:
        click.echo(f"wrote {path}")


@cli.group("experiment")
def experiment_group():
    """Multi-run experiments."""


@experiment_group.command("run")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), default=None,
              help="Overrides the config's corpus path.")
@click.option("--method", type=click.Choice([m.value for m in Method]), default=None)
@click.option("--k", type=int, default=None)
@click.option("--domain", default=None)
@click.option("--runs", type=int, default=None)
@click.option("-o", "--out-dir", type=click.Path(), required=True)
@click.pass_obj
def experiment_run(settings, corpus_file, method, k, domain, runs, out_dir):
    """Run the (grid x seed) matrix and persist the result table."""
    if settings.config:
        config = load_config(settings.config)
    else:
        if method is None:
            raise ValidationError("experiment run needs --config or --method")
        config = config_from_dict({"method": method})
    overrides = {}
    if corpus_file is not None:
        overrides["corpus"] = corpus_file
    if method is not None:
        overrides["method"] = Method(method)
    if k is not None:
        overrides["k_shot"] = k
    if domain is not None:
        overrides["domain"] = domain
    if runs is not None:
        overrides["runs"] = runs
    if settings.seed != 0:
        overrides["base_seed"] = settings.seed
    if settings.scorer != "builtin":
        overrides["scorer"] = settings.scorer
    if settings.pair_direction != "input-first":
        overrides["pair_direction"] = settings.pair_direction
    if settings.scorer_parallelism != 1:
        overrides["scorer_parallelism"] = settings.scorer_parallelism
    if overrides:
        config = replace(config, **overrides)
    if not config.corpus:
        raise ValidationError("no corpus given (config 'corpus' key or --corpus)")

    dataset = load_dataset(config.corpus)
    table = run_experiment(config, dataset)
    for path in table.write(out_dir):
        click.echo(f"wrote {path}")
    best = next(a for a in table.aggregates if a.grid_point == table.best_grid_point)
    click.echo(json.dumps({
        "best_grid_point": table.best_grid_point,
        "mean_dev_joint": best.mean_dev_joint,
        "mean_test_joint": best.mean_test_joint,
        "runs_ok": sum(1 for r in table.rows if r.status == "ok"),
        "runs_failed": sum(1 for r in table.rows if r.status == "failed"),
    }))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        return 130
    except NNIntentError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
