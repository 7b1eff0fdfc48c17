import json
import statistics

import pytest

from conftest import mock_scorer_spec
from nnintent.classify import Method
from nnintent.corpus import load_dataset
from nnintent.errors import ExperimentError, ValidationError
from nnintent.harness import (
    AugmentationSpec,
    CachingEmbedder,
    ExperimentConfig,
    config_from_dict,
    expand_bank,
    grid_point_id,
    run_experiment,
    score_split,
    to_instances,
)
from nnintent.scorers import BuiltinScorer


class TestConfig:
    def test_seeds_runs_mismatch(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(method=Method.DNNC, runs=3, seeds=(1, 2))

    def test_default_runs_single_vs_all_domain(self):
        single = ExperimentConfig(method=Method.DNNC, domain="banking")
        all_domains = ExperimentConfig(method=Method.DNNC)
        assert single.resolved_runs() == 10
        assert all_domains.resolved_runs() == 5

    def test_seed_derivation(self):
        cfg = ExperimentConfig(method=Method.DNNC, runs=3, base_seed=5)
        assert cfg.resolved_seeds() == (5, 6, 7)

    def test_trainable_scorer_needs_grid(self):
        with pytest.raises(ValidationError, match="grid"):
            ExperimentConfig(
                method=Method.DNNC,
                scorer="cmd:train-and-serve --lr {learning_rate} --bs {batch_size} --ep {epochs}",
            )

    def test_grid_points_product(self):
        cfg = ExperimentConfig(
            method=Method.DNNC,
            grid={"learning_rate": (1e-5, 2e-5), "epochs": (7,), "batch_size": (900,)},
        )
        points = cfg.grid_points()
        assert len(points) == 2
        assert {grid_point_id(p) for p in points} == {
            "lr=1e-05,ep=7,bs=900",
            "lr=2e-05,ep=7,bs=900",
        }

    def test_config_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValidationError, match="unknown"):
            config_from_dict({"method": "dnnc", "typo_key": 1})

    def test_config_from_dict_full(self):
        cfg = config_from_dict({
            "method": "emb-knn",
            "k_shot": 3,
            "runs": 2,
            "seeds": [4, 5],
            "augmentation": {"kind": "eda", "lexicon": "lex.tsv"},
            "grid": {"learning_rate": [2e-5]},
        })
        assert cfg.method is Method.EMB_KNN
        assert cfg.augmentation.kind == "eda"
        assert cfg.seeds == (4, 5)


class TestRunExperiment:
    def test_singleton_aggregate_equals_row(self, dataset):
        cfg = ExperimentConfig(method=Method.DNNC, runs=1, seeds=(3,), workers=1)
        table = run_experiment(cfg, dataset)
        assert len(table.rows) == 1
        row = table.rows[0]
        agg = table.aggregates[0]
        assert agg.n_ok == 1
        assert agg.mean_dev_joint == row.dev_joint
        assert agg.std_dev_joint == 0.0
        assert agg.mean_test_joint == row.test_joint

    def test_three_seed_golden(self, dataset):
        # Frozen from one reference run of the pipeline.
        cfg = ExperimentConfig(
            method=Method.DNNC, k_shot=5, runs=3, seeds=(0, 1, 2), workers=1
        )
        table = run_experiment(cfg, dataset)
        agg = table.aggregates[0]
        assert agg.mean_dev_joint == pytest.approx(1.75, abs=1e-12)
        assert agg.std_dev_joint == pytest.approx(0.07071067811865482, abs=1e-12)
        assert agg.mean_test_joint == pytest.approx(1.6500000000000001, abs=1e-12)
        assert [r.threshold for r in table.rows] == pytest.approx(
            [0.2222222222222222, 0.2222222222222222, 0.2]
        )

    def test_deterministic_tables(self, dataset):
        cfg = ExperimentConfig(method=Method.EMB_KNN, runs=2, workers=2, embed_dim=64)
        one = run_experiment(cfg, dataset)
        two = run_experiment(cfg, dataset)
        assert one.to_results_tsv() == two.to_results_tsv()
        assert one.to_aggregates_tsv() == two.to_aggregates_tsv()

    def test_aggregates_recomputable_from_rows(self, dataset):
        cfg = ExperimentConfig(method=Method.CLASSIFIER, runs=3, workers=1, embed_dim=64)
        table = run_experiment(cfg, dataset)
        rows = [r for r in table.rows if r.status == "ok"]
        agg = table.aggregates[0]
        assert abs(agg.mean_dev_joint - statistics.fmean(r.dev_joint for r in rows)) < 1e-12
        assert abs(agg.std_dev_joint - statistics.pstdev([r.dev_joint for r in rows])) < 1e-12
        assert abs(agg.mean_test_joint - statistics.fmean(r.test_joint for r in rows)) < 1e-12

    def test_domain_filter_applied(self, dataset):
        cfg = ExperimentConfig(method=Method.DNNC, runs=1, domain="banking", workers=1)
        table = run_experiment(cfg, dataset)
        assert table.rows[0].status == "ok"

    def test_dev_only_calibration(self, dataset):
        # Perturbing the test split must not move the chosen threshold.
        cfg = ExperimentConfig(method=Method.DNNC, runs=1, workers=1)
        baseline = run_experiment(cfg, dataset)

        swapped = type(dataset)(
            domains=dataset.domains,
            splits={**dataset.splits, "test": dataset.splits["test"][:8]},
            oos_splits={**dataset.oos_splits, "test": dataset.oos_splits["test"][:3]},
        )
        perturbed = run_experiment(cfg, swapped)
        assert baseline.rows[0].threshold == perturbed.rows[0].threshold
        assert baseline.rows[0].dev_joint == perturbed.rows[0].dev_joint

    def test_failed_runs_recorded_not_fatal(self, dataset, monkeypatch):
        import nnintent.harness as harness_mod

        real = harness_mod.sample_k_shot
        calls = {"n": 0}

        def flaky(ds, k, seed):
            calls["n"] += 1
            if seed == 1:
                raise ValidationError("synthetic failure")
            return real(ds, k, seed)

        monkeypatch.setattr(harness_mod, "sample_k_shot", flaky)
        cfg = ExperimentConfig(method=Method.DNNC, runs=3, seeds=(0, 1, 2), workers=1)
        table = run_experiment(cfg, dataset)
        statuses = [r.status for r in table.rows]
        assert statuses == ["ok", "failed", "ok"]
        assert table.aggregates[0].n_ok == 2
        assert "synthetic failure" in table.rows[1].error

    def test_all_failed_raises(self, dataset):
        cfg = ExperimentConfig(
            method=Method.DNNC, runs=2, workers=1,
            scorer=mock_scorer_spec("no-caps"),
        )
        with pytest.raises(ExperimentError):
            run_experiment(cfg, dataset)

    def test_missing_oos_split_rejected(self, tiny_dataset):
        cfg = ExperimentConfig(method=Method.DNNC, runs=1)
        with pytest.raises(ValidationError, match="OOS"):
            run_experiment(cfg, tiny_dataset)

    def test_remote_scorer_end_to_end(self, dataset):
        cfg = ExperimentConfig(
            method=Method.DNNC, runs=1, seeds=(0,), workers=1,
            scorer=mock_scorer_spec("ok"),
        )
        table = run_experiment(cfg, dataset)
        assert table.rows[0].status == "ok"

    def test_write_is_byte_stable(self, dataset, tmp_path):
        cfg = ExperimentConfig(method=Method.DNNC, runs=2, workers=1)
        table = run_experiment(cfg, dataset)
        table.write(tmp_path / "a")
        table.write(tmp_path / "b")
        assert (tmp_path / "a" / "results.tsv").read_bytes() == \
            (tmp_path / "b" / "results.tsv").read_bytes()


class TestAugmentationInHarness:
    def test_eda_expands_bank(self, dataset, lexicon_path):
        from nnintent.corpus import sample_k_shot

        bank = sample_k_shot(dataset, 2, 0)
        spec = AugmentationSpec(kind="eda", lexicon=str(lexicon_path))
        expanded = expand_bank(bank, spec, dataset, seed=0)
        for intent in bank.shots:
            assert len(expanded.shots[intent]) == 5 * len(bank.shots[intent])
        assert expanded.k == max(len(v) for v in expanded.shots.values())

    def test_ingest_attaches_by_origin(self, dataset, tmp_path):
        from nnintent.corpus import sample_k_shot

        bank = sample_k_shot(dataset, 3, 1)
        intent = "check_balance"
        origin = bank.shots[intent][0].text
        path = tmp_path / "aug.tsv"
        path.write_text(
            "origin_text\taugmented_text\tlabel\n"
            f"{origin}\ta paraphrase of the first shot\t{intent}\n",
            encoding="utf-8",
        )
        spec = AugmentationSpec(kind="ingest", path=str(path))
        expanded = expand_bank(bank, spec, dataset, seed=0)
        assert len(expanded.shots[intent]) == len(bank.shots[intent]) + 1
        texts = [u.text for u in expanded.shots[intent]]
        assert "a paraphrase of the first shot" in texts

    def test_experiment_with_eda(self, dataset, lexicon_path):
        cfg = ExperimentConfig(
            method=Method.DNNC, runs=1, workers=1,
            augmentation=AugmentationSpec(kind="eda", lexicon=str(lexicon_path)),
        )
        table = run_experiment(cfg, dataset)
        assert table.rows[0].status == "ok"


class TestCachingEmbedder:
    def test_caches_by_text(self):
        class CountingEmbedder(BuiltinScorer):
            def __init__(self):
                super().__init__(embed_dim=16)
                self.embedded = 0

            def embed(self, texts):
                self.embedded += len(texts)
                return super().embed(texts)

        inner = CountingEmbedder()
        caching = CachingEmbedder(inner)
        caching.embed(["a b", "c d"])
        caching.embed(["a b", "e f", "c d"])
        assert inner.embedded == 3
        assert caching.embed(["a b"]) == inner.embed(["a b"])


class TestScoreSplit:
    def test_instances_carry_gold(self, dataset, builtin64):
        from nnintent.corpus import sample_k_shot

        bank = sample_k_shot(dataset, 3, 0)
        scored = score_split(Method.DNNC, dataset, "dev", bank, builtin64)
        instances = to_instances(scored)
        golds = {i.gold for i in instances}
        assert "oos" in golds
        assert len(instances) == len(dataset.split("dev")) + len(dataset.oos_split("dev"))

    def test_empty_split_rejected(self, tiny_dataset, builtin64):
        from nnintent.corpus import sample_k_shot

        bank = sample_k_shot(tiny_dataset, 2, 0)
        with pytest.raises(ValidationError):
            score_split(Method.DNNC, tiny_dataset, "test", bank, builtin64)


class TestScorerParallelism:
    def test_pooled_split_matches_serial(self, dataset):
        from nnintent.corpus import sample_k_shot
        from nnintent.harness import score_split, score_split_pooled

        bank = sample_k_shot(dataset, 3, 2)
        handles = [BuiltinScorer(embed_dim=32) for _ in range(3)]
        pooled = score_split_pooled(Method.DNNC, dataset, "dev", bank, handles)
        serial = score_split(Method.DNNC, dataset, "dev", bank, handles[0])
        assert pooled == serial

    def test_experiment_parallel_handles_deterministic(self, dataset):
        cfg1 = ExperimentConfig(method=Method.DNNC, runs=2, workers=1,
                                scorer_parallelism=1)
        cfg2 = ExperimentConfig(method=Method.DNNC, runs=2, workers=1,
                                scorer_parallelism=3)
        assert run_experiment(cfg1, dataset).to_results_tsv() == \
            run_experiment(cfg2, dataset).to_results_tsv()
