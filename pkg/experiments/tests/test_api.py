import json
import tempfile
from pathlib import Path

import numpy as np
from django.contrib.auth.models import User
from django.test import TestCase
from django.urls import reverse
from rest_framework import status
from rest_framework.test import APIClient

from core.logits import LogitStore
from experiments.config import default_config
from experiments.metrics import MetricsReport
from experiments.models import EpochMetric, LogitStoreRecord, TrainingRun
from experiments.recording import record_logit_store, record_refusal, record_run
from experiments.training import METRICS_FILE, EpochResult, RunResult, write_report


def fake_run(run_dir, accuracies=(0.3, 0.5, 0.7)):
    """A finished run directory with one epoch per accuracy."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    epochs = [
        EpochResult(k, 2.0 - 0.1 * k, 1e-3, MetricsReport(acc, {"a": acc, "c": acc / 2}, acc / 2, 9, ("c",)))
        for k, acc in enumerate(accuracies, start=1)
    ]
    (run_dir / METRICS_FILE).write_text("".join(json.dumps(e.to_dict()) + "\n" for e in epochs))
    result = RunResult("teacher-cpr8-dirfms-s0", 0, run_dir, 9_000, 120_000, 2.3, epochs, keep_last=2)
    write_report(result, default_config(model={"role": "teacher", "architecture": "cpr", "base_channels": 8}))
    return run_dir


class RecordingTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.run_dir = fake_run(Path(self.tmp.name) / "run")

    def tearDown(self):
        self.tmp.cleanup()

    def test_record_run(self):
        run = record_run(self.run_dir)
        self.assertEqual((run.role, run.architecture, run.base_channels), ("teacher", "cpr", 8))
        self.assertEqual(run.epochs.count(), 3)
        self.assertEqual(run.status, "completed")
        window = run.window_accuracy(2)
        self.assertEqual(window["epochs"], [2, 3])
        self.assertAlmostEqual(window["overall_acc"], 0.6)
        self.assertAlmostEqual(window["unseen_acc"], 0.3)

    def test_recording_twice_refreshes(self):
        record_run(self.run_dir)
        fake_run(self.run_dir, accuracies=(0.1, 0.2))
        run = record_run(self.run_dir)
        self.assertEqual(TrainingRun.objects.count(), 1)
        self.assertEqual(list(run.epochs.values_list("epoch", flat=True)), [1, 2])

    def test_record_refusal(self):
        config = default_config(model={"base_channels": 64})
        verdict = type("Verdict", (), {"params": 443_866, "macs": 90_000_000})()
        run = record_refusal("student-cpm64-dirfms-s0", config, verdict)
        self.assertEqual(run.status, "refused")
        self.assertEqual(run.params, 443_866)

    def test_record_logit_store(self):
        store = LogitStore.from_arrays(["a.wav", "b.wav"], np.zeros((2, 10)))
        record = record_logit_store(Path(self.tmp.name) / "x.logits", store, "ensemble", sources=["m0", "m1"])
        self.assertEqual((record.kind, record.entry_count, record.class_count), ("ensemble", 2, 10))
        self.assertEqual(record.sources, ["m0", "m1"])


class ApiTests(TestCase):
    @classmethod
    def setUpTestData(cls):
        cls.user = User.objects.create_user("analyst", password="not-a-secret")
        run = TrainingRun.objects.create(run_id="teacher-cpr8-dirfms-s0", role="teacher", architecture="cpr",
                                         preset="DIRFMS", base_channels=8, run_dir="/runs/t0")
        for k, acc in enumerate((0.2, 0.4, 0.6), start=1):
            EpochMetric.objects.create(run=run, epoch=k, train_loss=1.0, lr=1e-3, overall_acc=acc,
                                       unseen_acc=None, per_device_acc={"a": acc})
        LogitStoreRecord.objects.create(path="/runs/ens.logits", kind="ensemble", class_count=10, entry_count=21)

    def setUp(self):
        self.client = APIClient()

    def test_requires_authentication(self):
        response = self.client.get(reverse("trainingrun-list"))
        self.assertEqual(response.status_code, status.HTTP_401_UNAUTHORIZED)

    def test_run_list_and_window(self):
        self.client.force_authenticate(self.user)
        response = self.client.get(reverse("trainingrun-list"))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(len(response.data), 1)
        self.assertEqual(response.data[0]["window"]["epochs"], [1, 2, 3])
        self.assertIsNone(response.data[0]["window"]["unseen_acc"])
        response = self.client.get(reverse("trainingrun-list"), {"window": 2})
        self.assertAlmostEqual(response.data[0]["window"]["overall_acc"], 0.5)

    def test_filters(self):
        self.client.force_authenticate(self.user)
        self.assertEqual(len(self.client.get(reverse("trainingrun-list"), {"role": "student"}).data), 0)
        epochs = self.client.get(reverse("epochmetric-list"), {"run": "teacher-cpr8-dirfms-s0"}).data
        self.assertEqual([e["epoch"] for e in epochs], [1, 2, 3])

    def test_read_only(self):
        self.client.force_authenticate(self.user)
        response = self.client.post(reverse("trainingrun-list"), {"run_id": "x"})
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)
        stores = self.client.get(reverse("logitstorerecord-list")).data
        self.assertEqual(stores[0]["kind"], "ensemble")
