from django.core.management.base import BaseCommand, CommandError

from core.exceptions import BudgetExceededError
from experiments.config import load_config
from experiments.recording import record_refusal, record_run
from experiments.training import run_id_for, train_runs
from experiments.utils import library_errors, runs_root


class Command(BaseCommand):
    help = "Train a model from an experiment config (one run per seed)"

    def add_arguments(self, parser):
        parser.add_argument("config", help="Experiment config (.ini)")
        parser.add_argument("--out", help="Runs directory (default: KDLAB_RUNS_ROOT)")
        parser.add_argument("--runs", type=int, help="Number of seeds, overrides [train] runs")
        parser.add_argument("--seed", type=int, help="First seed, overrides [train] seed")

    def prepare_config(self, config, options):
        if options["seed"] is not None:
            config = config.replace(train={"seed": options["seed"]})
        return config

    def handle(self, *args, **options):
        with library_errors():
            config = self.prepare_config(load_config(options["config"]), options)
        runs = options["runs"] or config.train.runs
        root = runs_root(options["out"])
        m = config.model
        self.stdout.write(
            f"Training {m.role} {m.architecture} (base {m.base_channels}, preset {config.augment.preset}), "
            f"{runs} run(s) x {config.train.epochs} epochs..."
        )
        try:
            with library_errors():
                results, report = train_runs(config, root, runs=runs)
        except CommandError as exc:
            if isinstance(exc.__cause__, BudgetExceededError):
                record_refusal(run_id_for(config, config.train.seed), config, exc.__cause__.verdict)
            raise

        for result in results:
            record_run(result.run_dir)
            self.stdout.write(
                f"{result.run_id}: loss {result.initial_loss:.4f} -> {result.final_loss:.4f}, "
                f"val {result.report.overall_acc:.4f}"
            )
        unseen = "n/a" if report.unseen_acc is None else f"{100 * report.unseen_acc:.2f}%"
        self.stdout.write(self.style.SUCCESS(
            f"Mean over {len(results)} run(s) x last {config.train.keep_last} epochs: "
            f"val {100 * report.overall_acc:.2f}%, unseen {unseen}"
        ))
