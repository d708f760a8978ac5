import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import BudgetExceededError
from core.logits import LogitStore, save_logits
from core.networks import MAX_MACS, count_complexity
from core.tensor import backward
from experiments.exceptions import ConfigConflictError
from experiments.dataset import generate_toy_dataset
from experiments.inference import export_logits, predict_logits
from experiments.metrics import evaluate
from experiments.tests.helpers import tiny_config, tiny_dataset
from experiments.training import (
    Trainer,
    budget_complexity,
    latest_checkpoint,
    load_trained_model,
    read_epochs,
    read_report,
    run_id_for,
    train,
    train_runs,
)


class TinyDatasetMixin:
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.manifest = tiny_dataset(cls.root)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()


class InferenceTests(TinyDatasetMixin, SimpleTestCase):
    def setUp(self):
        self.config = tiny_config(self.root)
        self.model = self.config.model.build(seed=0)
        self.frontend = self.config.data.frontend()

    def test_export_covers_every_clip(self):
        store = export_logits(self.model, self.manifest, None, self.frontend, crop_seconds=0.5, batch_size=5)
        self.assertEqual(len(store), 21)
        self.assertEqual(store.class_count, 10)
        val = export_logits(self.model, self.manifest, "val", self.frontend, crop_seconds=0.5)
        self.assertEqual(set(val.clip_ids), {r.clip_path for r in self.manifest.split("val")})

    def test_prediction_is_deterministic_and_leaves_the_model_untouched(self):
        records = self.manifest.split("val")
        running = self.model.state_dict()
        first = predict_logits(self.model, self.manifest, records, self.frontend, 0.5, batch_size=4)
        second = predict_logits(self.model, self.manifest, records, self.frontend, 0.5, batch_size=9)
        np.testing.assert_allclose(first, second, rtol=1e-5, atol=1e-6)
        self.assertTrue(self.model.training)
        for name, value in self.model.state_dict().items():
            np.testing.assert_array_equal(value, running[name], err_msg=name)


class TrainerTests(TinyDatasetMixin, SimpleTestCase):
    def test_run_writes_its_artifacts(self):
        config = tiny_config(self.root)
        run_dir = self.root / "runs" / run_id_for(config, 0)
        trainer = Trainer(config, run_dir, seed=0, manifest=self.manifest)
        result = trainer.run()

        self.assertEqual(result.run_id, "student-cpm8-dirfms-s0")
        self.assertEqual([e.epoch for e in result.epochs], [1, 2])
        self.assertEqual([p.name for p in result.checkpoints], ["epoch-001.ckpt", "epoch-002.ckpt"])
        self.assertTrue((run_dir / "config.ini").exists())
        self.assertEqual(len(read_epochs(run_dir)), 2)
        report = read_report(run_dir)
        self.assertEqual(report["run_id"], result.run_id)
        self.assertEqual(len(report["window"]), 2)
        self.assertEqual(report["params"], result.params)
        self.assertTrue(np.isfinite(result.initial_loss))
        self.assertEqual(json.loads((run_dir / "report.json").read_text())["aggregate"]["n_clips"], 9)

        model, saved = load_trained_model(latest_checkpoint(run_dir))
        self.assertEqual(saved.model, config.model)
        restored = predict_logits(model, self.manifest, self.manifest.split("val"), saved.data.frontend(), 0.5)
        trained = predict_logits(trainer.model, self.manifest, self.manifest.split("val"), trainer.frontend, 0.5)
        np.testing.assert_allclose(restored, trained, rtol=1e-5, atol=1e-5)

    def test_same_seed_same_run(self):
        config = tiny_config(self.root, train={"epochs": "1", "keep_last": "1"})
        a = train(config, self.root / "seed-a", seed=3, manifest=self.manifest)
        b = train(config, self.root / "seed-b", seed=3, manifest=self.manifest)
        self.assertEqual(a.initial_loss, b.initial_loss)
        self.assertEqual(a.final_loss, b.final_loss)
        self.assertEqual(a.report, b.report)

    def test_runs_are_aggregated_over_seeds(self):
        config = tiny_config(self.root, train={"epochs": "1", "keep_last": "1", "seed": "4"})
        results, report = train_runs(config, self.root / "multi", runs=2, manifest=self.manifest)
        self.assertEqual([r.seed for r in results], [4, 5])
        self.assertEqual(report.run_ids, tuple(r.run_id for r in results))
        expected = np.mean([r.report.overall_acc for r in results])
        self.assertAlmostEqual(report.overall_acc, expected)

    def test_oversized_student_is_refused(self):
        config = tiny_config(self.root, model={"base_channels": "64"})
        with self.assertRaises(BudgetExceededError):
            Trainer(config, self.root / "refused", manifest=self.manifest)
        self.assertFalse((self.root / "refused").exists())

    def test_budget_is_counted_for_a_one_second_clip(self):
        config = tiny_config(
            self.root,
            model={"base_channels": "33"},
            augment={"crop_seconds": "0.5"},
            data={"sample_rate": "32000", "n_fft": "1024", "hop": "320", "mel_bins": "64"},
        )
        model = config.model.build()
        half_second = count_complexity(model, config.data.frontend().input_shape(0.5))
        self.assertLess(half_second.macs, MAX_MACS)
        self.assertGreater(budget_complexity(config, model).macs, MAX_MACS)
        with self.assertRaises(BudgetExceededError):
            Trainer(config, self.root / "short-crop", manifest=self.manifest)
        self.assertFalse((self.root / "short-crop").exists())

    def test_oversized_teacher_is_allowed(self):
        config = tiny_config(self.root, model={"role": "teacher", "architecture": "cpr", "base_channels": "32"})
        trainer = Trainer(config, self.root / "teacher", manifest=self.manifest)
        self.assertGreater(trainer.complexity.params, 128_000)


class ToyLearningTests(SimpleTestCase):
    """Twenty epochs of the smallest CP-ResNet on three well separated scenes."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        root = Path(cls.tmp.name)
        cls.manifest = generate_toy_dataset(root / "data", seed=0, n_scenes=3, n_devices=3, n_unseen=1,
                                            clips_per_cell=6, val_clips_per_cell=3, sample_rate=8000,
                                            clip_seconds=0.75)
        cls.config = tiny_config(
            root,
            model={"role": "teacher", "architecture": "cpr", "base_channels": "8"},
            augment={"preset": "NOAUG"},
            train={"epochs": "20", "batch_size": "6", "lr": "0.01", "keep_last": "1"},
        )
        cls.result = train(cls.config, root / "toy", manifest=cls.manifest)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def test_loss_halves(self):
        self.assertLess(self.result.final_loss, 0.5 * self.result.initial_loss)

    def test_seen_devices_are_separable(self):
        model, _ = load_trained_model(self.result.checkpoints[-1])
        report = evaluate((model, self.config.data.frontend()), self.manifest, "val", devices=["a", "b"],
                          crop_seconds=0.5)
        self.assertGreater(report.overall_acc, 0.6)


class DistillationTrainerTests(TinyDatasetMixin, SimpleTestCase):
    def teacher_store(self, records):
        rng = np.random.default_rng(0)
        return LogitStore.from_arrays([r.clip_path for r in records], rng.normal(size=(len(records), 10)))

    def test_lambda_one_matches_plain_training(self):
        store_path = save_logits(self.teacher_store(self.manifest.split()), self.root / "teacher.logits")
        plain = Trainer(tiny_config(self.root), self.root / "plain", manifest=self.manifest)
        distilled = Trainer(
            tiny_config(self.root, distill={"lambda": "1.0", "teacher_logits": str(store_path)}),
            self.root / "kd",
            manifest=self.manifest,
        )
        waves = [self.manifest.load_clip(r, 8000) for r in plain.records[:4]]
        indices = np.arange(4)
        a = plain.batch_loss(waves, indices, np.random.default_rng(9))
        b = distilled.batch_loss(waves, indices, np.random.default_rng(9))
        self.assertEqual(a.item(), b.item())
        backward(a)
        backward(b)
        for (name, p), q in zip(plain.model.named_parameters(), distilled.model.parameters()):
            np.testing.assert_array_equal(p.grad, q.grad, err_msg=name)

    def test_distilled_run(self):
        store_path = save_logits(self.teacher_store(self.manifest.split()), self.root / "teacher-all.logits")
        config = tiny_config(self.root, distill={"teacher_logits": str(store_path)},
                             train={"epochs": "1", "keep_last": "1"})
        result = train(config, self.root / "distilled", manifest=self.manifest)
        self.assertTrue(np.isfinite(result.final_loss))

    def test_teacher_logits_must_cover_training_clips(self):
        partial = self.teacher_store(self.manifest.split("train")[:5])
        store_path = save_logits(partial, self.root / "partial.logits")
        config = tiny_config(self.root, distill={"teacher_logits": str(store_path)})
        with self.assertRaises(ConfigConflictError):
            Trainer(config, self.root / "partial", manifest=self.manifest)
