import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.logits import import_logits
from experiments.config import load_config
from experiments.dataset import DatasetManifest
from experiments.metrics import evaluate
from experiments.training import latest_checkpoint, load_trained_model
from experiments.utils import data_root, library_errors


class Command(BaseCommand):
    help = "Per-device accuracy of a logit store or a trained model"

    def add_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument("--logits", help="Logit store to score")
        source.add_argument("--model", help="Checkpoint file or run directory")
        parser.add_argument("--config", help="Experiment config for --model (default: the run's config.ini)")
        parser.add_argument("--manifest", help="Dataset manifest (default: from the config or KDLAB_DATA_ROOT)")
        parser.add_argument("--split", choices=["train", "val"], default="val")
        parser.add_argument("--devices", help="Comma separated subset of devices")
        parser.add_argument("--batch-size", type=int, default=32)
        parser.add_argument("--json", action="store_true", help="Print the report as JSON")

    def handle(self, *args, **options):
        devices = [d.strip() for d in options["devices"].split(",")] if options["devices"] else None
        with library_errors():
            if options["logits"]:
                source, config = import_logits(options["logits"]), None
            else:
                path = Path(options["model"])
                if not path.exists():
                    raise CommandError(f"{path} does not exist")
                checkpoint = latest_checkpoint(path) if path.is_dir() else path
                config = load_config(options["config"]) if options["config"] else None
                model, config = load_trained_model(checkpoint, config)
                source = (model, config.data.frontend())
            manifest_path = options["manifest"] or (
                config.data.manifest if config else data_root() / "manifest.csv"
            )
            manifest = DatasetManifest.load(manifest_path)
            report = evaluate(
                source, manifest, split=options["split"], devices=devices,
                crop_seconds=config.augment.crop_seconds if config else 1.0,
                batch_size=options["batch_size"],
            )

        if options["json"]:
            self.stdout.write(json.dumps(report.to_dict(), indent=2))
            return
        for device, acc in report.per_device_acc.items():
            marker = " (unseen)" if device in report.unseen_devices else ""
            self.stdout.write(f"{device:>4}: {100 * acc:6.2f}%{marker}")
        unseen = "n/a" if report.unseen_acc is None else f"{100 * report.unseen_acc:.2f}%"
        self.stdout.write(self.style.SUCCESS(
            f"{options['split']} accuracy over {report.n_clips} clips: {100 * report.overall_acc:.2f}% "
            f"(unseen devices: {unseen})"
        ))
