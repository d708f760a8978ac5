import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from experiments.dataset import ClipRecord, DatasetManifest, device_names, generate_toy_dataset
from experiments.exceptions import ManifestError, MissingClipError, UnknownDeviceError
from experiments.tests.helpers import tiny_dataset


class DeviceNamingTests(SimpleTestCase):
    def test_names(self):
        self.assertEqual(device_names(2), ["a", "b"])
        self.assertEqual(device_names(9), ["a", "b", "c", "s1", "s2", "s3", "s4", "s5", "s6"])


class ToyDatasetTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.manifest = tiny_dataset(cls.tmp.name)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def test_split_sizes_and_devices(self):
        self.assertEqual(len(self.manifest.split("train")), 12)
        self.assertEqual(len(self.manifest.split("val")), 9)
        self.assertEqual(self.manifest.seen_devices, ["a", "b"])
        self.assertEqual(self.manifest.unseen_devices, ["c"])
        self.assertNotIn("c", self.manifest.devices("train"))

    def test_manifest_file_round_trip(self):
        loaded = DatasetManifest.load(Path(self.tmp.name) / "data" / "manifest.csv")
        self.assertEqual(loaded.records, self.manifest.records)
        clip = loaded.load_clip(loaded.records[0], sample_rate=8000)
        self.assertEqual(len(clip), 6000)
        self.assertLessEqual(clip.peak, 1.0)

    def test_generation_is_deterministic(self):
        with tempfile.TemporaryDirectory() as other:
            again = tiny_dataset(other)
            for record in self.manifest.records[:5]:
                first = (Path(self.tmp.name) / "data" / record.clip_path).read_bytes()
                second = (Path(other) / "data" / record.clip_path).read_bytes()
                self.assertEqual(first, second, record.clip_path)
        self.assertEqual(again.records, self.manifest.records)

    def test_val_device_subset(self):
        subset = self.manifest.with_val_devices(["a"])
        self.assertEqual(subset.devices("val"), ["a"])
        self.assertEqual(len(subset.split("train")), 12)
        with self.assertRaises(UnknownDeviceError):
            self.manifest.with_val_devices(["s9"])

    def test_missing_clip(self):
        manifest = DatasetManifest([ClipRecord("gone.wav", "bus", "a", "val")], root=self.tmp.name)
        with self.assertRaises(MissingClipError):
            manifest.load_clip(manifest.records[0])


class ManifestValidationTests(SimpleTestCase):
    def test_invalid_records(self):
        cases = {
            "duplicate": [ClipRecord("x.wav", "bus", "a", "val"), ClipRecord("x.wav", "bus", "b", "val")],
            "split": [ClipRecord("x.wav", "bus", "a", "test")],
            "scene": [ClipRecord("x.wav", "beach", "a", "val")],
            "device": [ClipRecord("x.wav", "bus", "", "val")],
            "no val": [ClipRecord("x.wav", "bus", "a", "train")],
        }
        for name, records in cases.items():
            with self.subTest(name):
                with self.assertRaises(ManifestError):
                    DatasetManifest(records)

    def test_bad_header(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "manifest.csv"
            path.write_text("file,label\nx.wav,bus\n")
            with self.assertRaises(ManifestError):
                DatasetManifest.load(path)

    def test_generator_arguments(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValueError):
                generate_toy_dataset(tmp, n_devices=3, n_unseen=3)
            with self.assertRaises(ValueError):
                generate_toy_dataset(tmp, n_scenes=11)
