import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from hncl.augment import AugmentSpec, AugmentStep
from hncl.data import SynthConfig, generate_synthetic, make_split
from hncl.encoders import EncoderConfig
from hncl.errors import ConfigError
from hncl.metrics import accuracy, macro_f1, mean_ci95
from hncl.train import (
    FinetuneConfig,
    HnlSettings,
    PlateauScheduler,
    PretrainConfig,
    RunResult,
    SupervisedConfig,
    _epoch_batches,
    beta_sweep,
    finetune_probe,
    limited_label_study,
    multi_run,
    multi_run_supervised,
    pretrain,
    supervised_train,
    write_aggregate_json,
    write_metrics_csv,
)
from hncl.numcore import make_rng


def tiny_dataset():
    cfg = SynthConfig(
        num_classes=3,
        samples_per_class=10,
        time_len=16,
        channels=(3, 3),
        latent_dim=4,
        latent_sigma=0.2,
        noise_sigma=0.3,
        corruption_rate=0.2,
        offset_scale=0.5,
        seed=11,
    )
    ds = generate_synthetic(cfg)
    return ds, make_split(ds, "cross_subject_odd_even")


def tiny_encoder(channels=3):
    return EncoderConfig(
        input_channels=channels,
        conv_layers=((6, 3, 1),),
        activation="relu",
        embedding_dim=8,
        projection_dim=4,
    )


def tiny_aug():
    return AugmentSpec(pipeline=(AugmentStep("jitter", 1.0, {"sigma": 0.05}),))


def tiny_pretrain(method="cmc", epochs=4, **kw):
    base = dict(
        method=method,
        encoder_configs={"inertial": tiny_encoder(), "skeleton": tiny_encoder()},
        augment_specs={"inertial": tiny_aug(), "skeleton": tiny_aug()},
        batch_size=8,
        learning_rate=3e-3,
        epochs=epochs,
        temperature=0.2,
        hnl=HnlSettings(beta=1.0, tau_plus=1.0 / 3.0),
        seed=0,
    )
    base.update(kw)
    return PretrainConfig(**base)


class TestPlateauScheduler:
    def test_halves_exactly_after_patience_bad_epochs(self):
        sched = PlateauScheduler(initial_lr=0.4, patience=3, factor=0.5)
        assert sched.step(1.0) == 0.4  # improvement (first value)
        assert sched.step(1.0) == 0.4  # bad 1
        assert sched.step(1.1) == 0.4  # bad 2
        assert sched.step(1.0) == 0.2  # bad 3 -> halve
        assert sched.step(0.5) == 0.2  # improvement resets
        assert sched.step(0.6) == 0.2
        assert sched.step(0.6) == 0.2
        assert sched.step(0.6) == 0.1

    def test_lr_never_increases(self):
        sched = PlateauScheduler(initial_lr=1.0, patience=2, factor=0.5)
        rng = make_rng(0)
        last = 1.0
        for _ in range(50):
            lr = sched.step(float(rng.uniform(0, 1)))
            assert lr <= last
            last = lr


class TestMetrics:
    def test_perfect_predictions(self):
        y = np.array([0, 1, 2, 1])
        assert accuracy(y, y) == 1.0
        assert macro_f1(y, y, 3) == 1.0

    def test_constant_prediction_two_balanced_classes(self):
        y_true = np.array([0, 0, 1, 1])
        y_pred = np.zeros(4, dtype=int)
        assert accuracy(y_true, y_pred) == 0.5
        assert macro_f1(y_true, y_pred, 2) == pytest.approx(1.0 / 3.0)

    def test_ci_zero_for_identical_values(self):
        mean, half = mean_ci95([0.7, 0.7, 0.7])
        assert mean == pytest.approx(0.7)
        assert half == 0.0

    def test_ci_undefined_for_single_value(self):
        mean, half = mean_ci95([0.42])
        assert mean == 0.42
        assert half is None

    def test_mean_within_seed_range(self):
        values = [0.6, 0.7, 0.8]
        mean, _ = mean_ci95(values)
        assert min(values) <= mean <= max(values)


class TestConfigValidation:
    def test_batch_size_floor(self):
        with pytest.raises(ConfigError):
            tiny_pretrain(batch_size=1)

    def test_simclr_requires_modality(self):
        with pytest.raises(ConfigError):
            tiny_pretrain(method="simclr")

    def test_debiased_forces_beta_zero(self):
        cfg = tiny_pretrain(method="cmc_debiased", hnl=HnlSettings(beta=2.0, tau_plus=0.1))
        assert cfg.hnl.beta == 0.0

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            tiny_pretrain(method="moco")


class TestEpochBatches:
    def test_single_leftover_sample_is_dropped(self):
        batches = list(_epoch_batches(5, 2, make_rng(0)))
        assert [b.size for b in batches] == [2, 2]

    def test_leftover_pair_is_kept(self):
        batches = list(_epoch_batches(6, 4, make_rng(0)))
        assert [b.size for b in batches] == [4, 2]

    def test_batches_partition_indices(self):
        batches = list(_epoch_batches(10, 3, make_rng(1)))
        seen = np.concatenate(batches)
        assert len(np.unique(seen)) == seen.size


class TestPretrain:
    @pytest.mark.parametrize("method", ["cmc", "cmc_hnl", "cmc_debiased"])
    def test_cross_modal_methods_run_with_finite_losses(self, method):
        ds, split = tiny_dataset()
        res = pretrain(tiny_pretrain(method=method), ds, split)
        assert len(res.loss_history) == 4
        assert all(np.isfinite(v) for v in res.loss_history)

    @pytest.mark.parametrize("method", ["simclr", "simclr_hnl"])
    def test_unimodal_methods_run(self, method):
        ds, split = tiny_dataset()
        res = pretrain(tiny_pretrain(method=method, modality="inertial"), ds, split)
        assert set(res.encoder_params) == {"inertial"}
        assert all(np.isfinite(v) for v in res.loss_history)

    def test_loss_decreases_over_training(self):
        ds, split = tiny_dataset()
        res = pretrain(tiny_pretrain(method="cmc", epochs=15), ds, split)
        assert res.loss_history[-1] < res.loss_history[0]

    def test_multimodal_operating_point_runs_with_finite_losses(self):
        # beta 1.0, class prior 0.037, temperature 0.1, lr 1e-3
        ds, split = tiny_dataset()
        cfg = tiny_pretrain(
            method="cmc_hnl",
            hnl=HnlSettings(beta=1.0, tau_plus=0.037),
            temperature=0.1,
            learning_rate=1e-3,
        )
        res = pretrain(cfg, ds, split)
        assert all(np.isfinite(v) for v in res.loss_history)

    def test_bitwise_deterministic(self):
        ds, split = tiny_dataset()
        a = pretrain(tiny_pretrain(method="cmc_hnl"), ds, split)
        b = pretrain(tiny_pretrain(method="cmc_hnl"), ds, split)
        assert a.loss_history == b.loss_history
        for mod in a.encoder_params:
            for k in a.encoder_params[mod]:
                np.testing.assert_array_equal(a.encoder_params[mod][k], b.encoder_params[mod][k])

    def test_scheduler_reduces_lr_on_plateau(self):
        ds, split = tiny_dataset()
        # learning rate 0 cannot improve the loss, so the plateau must fire
        cfg = tiny_pretrain(method="cmc", epochs=8, learning_rate=1e-12,
                            scheduler_patience=2, scheduler_factor=0.5)
        res = pretrain(cfg, ds, split)
        assert res.lr_history[0] == 1e-12
        assert min(res.lr_history) < 1e-12
        assert all(b <= a for a, b in zip(res.lr_history, res.lr_history[1:]))

    def test_missing_modality_is_a_data_error(self):
        from hncl.data import drop_modality
        from hncl.errors import DataError

        ds, split = tiny_dataset()
        ds2 = drop_modality(ds, "skeleton")
        with pytest.raises(DataError):
            pretrain(tiny_pretrain(method="cmc"), ds2, split)


class TestFinetuneProbe:
    def test_encoders_stay_frozen(self):
        ds, split = tiny_dataset()
        res = pretrain(tiny_pretrain(), ds, split)
        before = {
            m: {k: v.copy() for k, v in p.items()} for m, p in res.encoder_params.items()
        }
        finetune_probe(FinetuneConfig(epochs=5, batch_size=8, seed=1), res, ds, split)
        for m in before:
            for k in before[m]:
                np.testing.assert_array_equal(res.encoder_params[m][k], before[m][k])

    def test_deterministic(self):
        ds, split = tiny_dataset()
        res = pretrain(tiny_pretrain(), ds, split)
        cfg = FinetuneConfig(epochs=5, batch_size=8, seed=2)
        a = finetune_probe(cfg, res, ds, split)
        b = finetune_probe(cfg, res, ds, split)
        assert a.accuracy == b.accuracy
        assert a.macro_f1 == b.macro_f1

    def test_unimodal_probe_from_multimodal_pretraining(self):
        # only one modality present at fine-tune time
        from hncl.data import drop_modality

        ds, split = tiny_dataset()
        res = pretrain(tiny_pretrain(), ds, split)
        ds_inertial = drop_modality(ds, "skeleton")
        out = finetune_probe(
            FinetuneConfig(modalities="inertial", epochs=5, batch_size=8), res, ds_inertial, split
        )
        assert 0.0 <= out.accuracy <= 1.0

    def test_label_fraction_applies_stratified_subset(self):
        ds, split = tiny_dataset()
        res = pretrain(tiny_pretrain(), ds, split)
        out = finetune_probe(
            FinetuneConfig(epochs=5, batch_size=8, label_fraction=0.34), res, ds, split
        )
        assert 0.0 <= out.accuracy <= 1.0


class TestSupervised:
    def test_runs_and_reports_metrics(self):
        ds, split = tiny_dataset()
        cfg = SupervisedConfig(
            encoder_configs={"inertial": tiny_encoder(), "skeleton": tiny_encoder()},
            epochs=5,
            batch_size=8,
            label_fraction=0.5,
            seed=0,
        )
        out = supervised_train(cfg, ds, split)
        assert 0.0 <= out.accuracy <= 1.0
        assert 0.0 <= out.macro_f1 <= 1.0


class TestExperimentDrivers:
    def test_multi_run_aggregates_seeds(self):
        ds, split = tiny_dataset()
        result = multi_run(tiny_pretrain(epochs=2), FinetuneConfig(epochs=3, batch_size=8),
                           ds, split, num_seeds=2)
        assert result.seeds == [0, 1]
        assert len(result.accuracies) == 2
        assert min(result.accuracies) <= result.mean_accuracy <= max(result.accuracies)

    def test_multi_run_single_seed_flags_ci_undefined(self):
        ds, split = tiny_dataset()
        result = multi_run(tiny_pretrain(epochs=2), FinetuneConfig(epochs=3, batch_size=8),
                           ds, split, num_seeds=1)
        assert result.ci95_accuracy is None

    def test_beta_sweep_sorted_and_complete(self):
        ds, split = tiny_dataset()
        rows = beta_sweep(
            tiny_pretrain(method="cmc_hnl", epochs=2),
            FinetuneConfig(epochs=3, batch_size=8),
            ds, split, betas=[1.0, 0.25], num_seeds=1,
        )
        assert [b for b, _ in rows] == [0.25, 1.0]

    def test_beta_sweep_rejects_plain_methods(self):
        ds, split = tiny_dataset()
        with pytest.raises(ConfigError):
            beta_sweep(tiny_pretrain(method="cmc"), FinetuneConfig(), ds, split, [0.5], 1)

    def test_beta_sweep_rejects_empty_list(self):
        ds, split = tiny_dataset()
        with pytest.raises(ConfigError):
            beta_sweep(tiny_pretrain(method="cmc_hnl"), FinetuneConfig(), ds, split, [], 1)

    def test_limited_label_study_rows(self):
        ds, split = tiny_dataset()
        sup = SupervisedConfig(
            encoder_configs={"inertial": tiny_encoder(), "skeleton": tiny_encoder()},
            epochs=3, batch_size=8,
        )
        rows = limited_label_study(
            {"cmc": tiny_pretrain(epochs=2)},
            sup,
            FinetuneConfig(epochs=3, batch_size=8),
            ds, split,
            fractions=[0.34, 1.0],
            num_seeds=1,
        )
        assert [(r.method, r.label_fraction) for r in rows] == [
            ("cmc", 0.34), ("cmc", 1.0), ("supervised", 0.34), ("supervised", 1.0),
        ]

    def test_supervised_multi_run(self):
        ds, split = tiny_dataset()
        sup = SupervisedConfig(
            encoder_configs={"inertial": tiny_encoder(), "skeleton": tiny_encoder()},
            epochs=3, batch_size=8,
        )
        result = multi_run_supervised(sup, ds, split, num_seeds=2)
        assert result.method == "supervised"
        assert len(result.accuracies) == 2


class TestMetricsFiles:
    def result(self):
        return RunResult(
            method="cmc_hnl", modality="both", beta=1.0, tau_plus=0.1,
            label_fraction=1.0, seeds=[0, 1], accuracies=[0.8, 0.9],
            macro_f1s=[0.75, 0.85],
        )

    def test_csv_columns_and_rows(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, [self.result()])
        with open(path) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["method", "modality", "beta", "tau_plus", "label_fraction",
                           "seed", "accuracy", "macro_f1"]
        assert len(rows) == 3
        assert rows[1][0] == "cmc_hnl"
        assert float(rows[1][6]) == 0.8

    def test_aggregate_json(self, tmp_path):
        path = tmp_path / "agg.json"
        write_aggregate_json(path, [self.result()])
        data = json.loads(path.read_text())
        entry = data["results"][0]
        assert entry["mean_accuracy"] == pytest.approx(0.85)
        assert entry["num_seeds"] == 2
