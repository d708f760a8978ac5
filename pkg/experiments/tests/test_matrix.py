import csv
import tempfile
from pathlib import Path

from django.test import SimpleTestCase, TestCase

from core.exceptions import BudgetExceededError
from core.logits import import_logits
from experiments.exceptions import MatrixSpecError, MissingImportError, UnknownPresetError
from experiments.matrix import (
    EXPORT_FILE,
    EnsembleSpec,
    MatrixObserver,
    MatrixSpec,
    load_matrix_spec,
    plan_matrix,
    run_matrix,
)
from experiments.models import LogitStoreRecord, TrainingRun
from experiments.recording import MatrixRecorder
from experiments.results import RESULT_COLUMNS, ResultRow, format_pct, write_results
from experiments.tests.helpers import tiny_config, tiny_dataset, write_config


class MatrixPlanTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.base = tiny_config(self.root)

    def tearDown(self):
        self.tmp.cleanup()

    def spec(self, **kwargs):
        defaults = {"architectures": ("cpr",), "dg_presets": ("DIRFMS",), "seeds": (0, 1, 2),
                    "base_config": self.root / "experiment.ini"}
        defaults.update(kwargs)
        return MatrixSpec(**defaults)

    def test_single_architecture(self):
        plan = plan_matrix(self.spec(), self.root / "out", base=self.base)
        self.assertEqual(len(plan.teacher_jobs), 3)
        self.assertEqual(len(plan.ensembles), 1)
        self.assertEqual(plan.ensembles[0].n_models, 3)
        (student,) = plan.student_jobs
        self.assertEqual(student.seeds, (0, 1, 2))
        self.assertEqual(student.config.distill.teacher_logits, plan.ensembles[0].output)
        self.assertEqual(student.config.model.role, "student")
        teacher = plan.teacher_jobs[0].config
        self.assertEqual((teacher.model.role, teacher.model.architecture), ("teacher", "cpr"))
        self.assertEqual((teacher.augment.p_fms, teacher.augment.p_dir), (0.8, 0.4))
        self.assertIsNone(teacher.distill.teacher_logits)

    def test_mixed_ensemble_with_imports(self):
        imports = {("passt", p): tuple(self.root / f"passt-{p}-{s}.logits" for s in range(3))
                   for p in ("DIRFMS", "FMS")}
        spec = self.spec(architectures=("cpr", "passt"), dg_presets=("DIRFMS", "FMS"), imports=imports,
                         ensembles=(EnsembleSpec(("cpr", "passt"), ("DIRFMS", "FMS")),
                                    EnsembleSpec(("passt",), ("FMS",))))
        plan = plan_matrix(spec, self.root / "out", base=self.base)
        self.assertEqual(len(plan.teacher_jobs), 6)
        self.assertEqual([e.n_models for e in plan.ensembles], [12, 3])
        self.assertEqual(len(plan.student_jobs), 2)
        self.assertEqual(set(plan.imports), {("passt", "DIRFMS"), ("passt", "FMS")})

    def test_sizes_pick_teacher_width(self):
        plan = plan_matrix(self.spec(sizes={"cpr": "450K"}), self.root / "out", base=self.base)
        self.assertEqual(plan.teacher_jobs[0].config.model.base_channels, 56)
        self.assertEqual(plan.student_jobs[0].config.model.base_channels, 8)

    def test_invalid_specs(self):
        with self.assertRaises(MatrixSpecError):
            self.spec(architectures=("vgg",))
        with self.assertRaises(UnknownPresetError):
            self.spec(dg_presets=("MIXUP",))
        with self.assertRaises(UnknownPresetError):
            self.spec(ensembles=(EnsembleSpec(("cpr",), ("FMS",)),))
        with self.assertRaises(MissingImportError):
            self.spec(architectures=("cpr", "passt"))
        with self.assertRaises(MatrixSpecError):
            self.spec(seeds=())
        with self.assertRaises(MatrixSpecError):
            EnsembleSpec.parse("cpr+passt")

    def test_spec_file(self):
        (self.root / "matrix.ini").write_text(
            "[matrix]\narchitectures = cpr, passt\ndg_presets = DIRFMS\nseeds = 0, 1\n"
            "base_config = experiment.ini\nensembles = cpr+passt/DIRFMS; passt/DIRFMS\n"
            "[sizes]\ncpr = 1M\n[imports]\npasst.DIRFMS = p0.logits, p1.logits\n"
        )
        spec = load_matrix_spec(self.root / "matrix.ini")
        self.assertEqual(spec.architectures, ("cpr", "passt"))
        self.assertEqual(spec.seeds, (0, 1))
        self.assertEqual([e.name for e in spec.ensembles], ["cpr+passt/DIRFMS", "passt/DIRFMS"])
        root = self.root.resolve()
        self.assertEqual(spec.imports[("passt", "DIRFMS")], (root / "p0.logits", root / "p1.logits"))
        self.assertEqual(spec.base_channels("cpr", 32), 88)

    def test_missing_spec_file(self):
        with self.assertRaises(MatrixSpecError):
            load_matrix_spec(self.root / "nope.ini")


class MatrixRunTests(SimpleTestCase):
    def test_end_to_end(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            manifest = tiny_dataset(root)
            write_config(root, train={"epochs": "1", "keep_last": "1"})
            spec = MatrixSpec(("cpr",), ("DIRFMS",), (0,), root / "experiment.ini", sizes={"cpr": "8"})
            outcome = run_matrix(spec, root / "out")

            teacher_dir = outcome.plan.teacher_jobs[0].run_dirs()[0]
            exported = import_logits(teacher_dir / EXPORT_FILE)
            self.assertEqual(len(exported), len(manifest))
            self.assertEqual(import_logits(outcome.plan.ensembles[0].output), exported)
            self.assertEqual([row.kind for row in outcome.rows], ["teacher", "ensemble", "student"])
            with outcome.csv_path.open() as handle:
                rows = list(csv.DictReader(handle))
            self.assertEqual(len(rows), 3)
            self.assertTrue(outcome.md_path.read_text().startswith("| group |"))

    def test_same_seeds_reproduce_results(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            tiny_dataset(root)
            write_config(root, train={"epochs": "1", "keep_last": "1"})
            spec = MatrixSpec(("cpr",), ("DIRFMS",), (0,), root / "experiment.ini", sizes={"cpr": "8"})
            first = run_matrix(spec, root / "out-a")
            second = run_matrix(spec, root / "out-b")
            self.assertEqual(first.csv_path.read_bytes(), second.csv_path.read_bytes())

    def test_observer_hears_jobs_in_order(self):
        events = []

        class Listener(MatrixObserver):
            def job_finished(self, job, run_dirs):
                events.append((job.kind, len(run_dirs)))

            def ensemble_built(self, ensemble):
                events.append(("ensemble", ensemble.n_models))

        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            tiny_dataset(root)
            write_config(root, train={"epochs": "1", "keep_last": "1"})
            spec = MatrixSpec(("cpr",), ("DIRFMS",), (0, 1), root / "experiment.ini", sizes={"cpr": "8"})
            run_matrix(spec, root / "out", observer=Listener())
        self.assertEqual(events, [("teacher", 1), ("teacher", 1), ("ensemble", 2), ("student", 2)])


class MatrixRecordingTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        tiny_dataset(self.root)

    def tearDown(self):
        self.tmp.cleanup()

    def test_jobs_are_recorded_as_they_finish(self):
        write_config(self.root, train={"epochs": "1", "keep_last": "1"})
        spec = MatrixSpec(("cpr",), ("DIRFMS",), (0,), self.root / "experiment.ini", sizes={"cpr": "8"})
        run_matrix(spec, self.root / "out", observer=MatrixRecorder())
        self.assertEqual(sorted(TrainingRun.objects.values_list("role", flat=True)), ["student", "teacher"])
        self.assertEqual(sorted(LogitStoreRecord.objects.values_list("kind", flat=True)), ["ensemble", "export"])

    def test_oversized_student_is_recorded_before_any_training(self):
        write_config(self.root, model={"base_channels": "64"}, train={"epochs": "1", "keep_last": "1"})
        spec = MatrixSpec(("cpr",), ("DIRFMS",), (0,), self.root / "experiment.ini", sizes={"cpr": "8"})
        with self.assertRaises(BudgetExceededError):
            run_matrix(spec, self.root / "out", observer=MatrixRecorder())
        refused = TrainingRun.objects.get()
        self.assertEqual((refused.role, refused.status), ("student", "refused"))
        self.assertFalse((self.root / "out" / "teachers").exists())


class ResultsTests(SimpleTestCase):
    def test_formatting(self):
        self.assertEqual(format_pct(None), "n/a")
        self.assertEqual(format_pct(0.61234), "61.23")

    def test_written_tables(self):
        rows = [ResultRow("cpr/DIRFMS", "teacher", "cpr", "DIRFMS", 3, "139498", "55.00", "40.00")]
        with tempfile.TemporaryDirectory() as tmp:
            csv_path, md_path = write_results(rows, tmp)
            lines = csv_path.read_text().splitlines()
            table = md_path.read_text().splitlines()
        self.assertEqual(lines[0], ",".join(RESULT_COLUMNS))
        self.assertEqual(lines[1], "cpr/DIRFMS,teacher,cpr,DIRFMS,3,139498,55.00,40.00")
        self.assertEqual(len(table), 3)
        self.assertEqual(table[2], "| cpr/DIRFMS | teacher | cpr | DIRFMS | 3 | 139498 | 55.00 | 40.00 |")
