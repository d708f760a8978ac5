"""Index finished artifacts in the database. Called from the main process only."""
import logging
from pathlib import Path

from django.db import transaction

from core.logits import import_logits
from experiments.matrix import EXPORT_FILE, MatrixObserver
from experiments.models import EpochMetric, LogitStoreRecord, TrainingRun
from experiments.training import read_epochs, read_report, run_id_for

logger = logging.getLogger(__name__)


@transaction.atomic
def record_run(run_dir, status="completed"):
    """Create or refresh the TrainingRun row (and its epochs) from report.json and metrics.jsonl."""
    run_dir = Path(run_dir)
    payload = read_report(run_dir)
    run, _ = TrainingRun.objects.update_or_create(
        run_id=payload["run_id"],
        defaults={
            "role": payload["role"],
            "architecture": payload["architecture"],
            "preset": payload["preset"],
            "base_channels": payload["base_channels"],
            "seed": payload["seed"],
            "params": payload["params"],
            "macs": payload["macs"],
            "run_dir": str(run_dir),
            "status": status,
            "initial_loss": payload["initial_loss"],
            "final_loss": payload["final_loss"],
        },
    )
    run.epochs.all().delete()
    for entry in read_epochs(run_dir):
        EpochMetric.objects.create(
            run=run,
            epoch=entry.epoch,
            train_loss=entry.train_loss,
            lr=entry.lr,
            overall_acc=entry.report.overall_acc,
            unseen_acc=entry.report.unseen_acc,
            per_device_acc=entry.report.per_device_acc,
        )
    logger.debug("indexed run %s", run.run_id)
    return run


def record_refusal(run_id, config, complexity):
    run, _ = TrainingRun.objects.update_or_create(
        run_id=run_id,
        defaults={
            "role": config.model.role,
            "architecture": config.model.architecture,
            "preset": config.augment.preset,
            "base_channels": config.model.base_channels,
            "seed": config.train.seed,
            "params": complexity.params,
            "macs": complexity.macs,
            "run_dir": "",
            "status": "refused",
        },
    )
    return run


def record_logit_store(path, store, kind, sources=()):
    record, _ = LogitStoreRecord.objects.update_or_create(
        path=str(Path(path).resolve()),
        defaults={
            "kind": kind,
            "class_count": store.class_count,
            "entry_count": len(store),
            "sources": [str(s) for s in sources],
        },
    )
    return record


class MatrixRecorder(MatrixObserver):
    """Indexes matrix jobs, refusals and logit stores as they happen."""

    def matrix_planned(self, plan):
        for paths in plan.imports.values():
            for path in paths:
                record_logit_store(path, import_logits(path), "import")

    def job_finished(self, job, run_dirs):
        for run_dir in run_dirs:
            record_run(run_dir)
            if job.export:
                store_path = Path(run_dir) / EXPORT_FILE
                record_logit_store(store_path, import_logits(store_path), "export", sources=[run_dir])

    def job_refused(self, job, error):
        record_refusal(run_id_for(job.config, job.seeds[0]), job.config, error.verdict)

    def ensemble_built(self, ensemble):
        record_logit_store(ensemble.output, import_logits(ensemble.output), "ensemble", sources=ensemble.members)
