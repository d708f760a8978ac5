from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand

from experiments.matrix import load_matrix_spec, plan_matrix, run_matrix
from experiments.recording import MatrixRecorder
from experiments.utils import library_errors, runs_root


class Command(BaseCommand):
    help = "Run the teacher -> ensemble -> student experiment matrix"

    def add_arguments(self, parser):
        parser.add_argument("spec", help="Matrix spec (.ini)")
        parser.add_argument("--out", help="Output directory (default: KDLAB_RUNS_ROOT)")
        parser.add_argument("--workers", type=int, default=settings.KDLAB_WORKERS,
                            help="Parallel training processes")
        parser.add_argument("--plan-only", action="store_true", help="Print the jobs without running them")

    def handle(self, *args, **options):
        out_root = runs_root(options["out"])
        with library_errors():
            spec = load_matrix_spec(options["spec"])
            if options["plan_only"]:
                self._print_plan(plan_matrix(spec, out_root))
                return
            outcome = run_matrix(spec, out_root, workers=max(1, options["workers"]), observer=MatrixRecorder())

        for row in outcome.rows:
            self.stdout.write(
                f"{row.kind:<9} {row.group:<32} n={row.n_models:<3} "
                f"val {row.val_acc:>6} unseen {row.unseen_acc:>6}"
            )
        self.stdout.write(self.style.SUCCESS(f"Results written to {outcome.csv_path} and {outcome.md_path}"))

    def _print_plan(self, plan):
        for job in plan.teacher_jobs:
            self.stdout.write(f"teacher  {job.group:<24} seed {job.seeds[0]} -> {job.run_dirs()[0]}")
        for (arch, preset), paths in plan.imports.items():
            self.stdout.write(f"import   {arch}/{preset:<17} {len(paths)} store(s)")
        for ens in plan.ensembles:
            self.stdout.write(f"ensemble {ens.spec.name:<24} {ens.n_models} member(s) -> {ens.output}")
        for job in plan.student_jobs:
            seeds = ", ".join(map(str, job.seeds))
            self.stdout.write(f"student  {job.group:<24} seeds {seeds} -> {Path(job.root)}")
        self.stdout.write(self.style.SUCCESS(
            f"{len(plan.teacher_jobs)} teacher job(s), {len(plan.ensembles)} ensemble(s), "
            f"{len(plan.student_jobs)} student job(s)"
        ))
