from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.logits import save_logits
from experiments.config import load_config
from experiments.dataset import DatasetManifest
from experiments.inference import export_logits
from experiments.recording import record_logit_store
from experiments.training import latest_checkpoint, load_trained_model
from experiments.utils import library_errors


class Command(BaseCommand):
    help = "Export per-clip logits of a trained model to a logit store"

    def add_arguments(self, parser):
        parser.add_argument("--model", required=True, help="Checkpoint file or run directory (latest checkpoint)")
        parser.add_argument("--out", required=True, help="Output .logits file")
        parser.add_argument("--config", help="Experiment config (default: config.ini next to the checkpoint)")
        parser.add_argument("--manifest", help="Dataset manifest (default: from the config)")
        parser.add_argument("--split", choices=["train", "val", "all"], default="all")
        parser.add_argument("--batch-size", type=int, default=32)

    def handle(self, *args, **options):
        source = Path(options["model"])
        if not source.exists():
            raise CommandError(f"{source} does not exist")
        with library_errors():
            checkpoint = latest_checkpoint(source) if source.is_dir() else source
            config = load_config(options["config"]) if options["config"] else None
            model, config = load_trained_model(checkpoint, config)
            manifest = DatasetManifest.load(options["manifest"] or config.data.manifest)
            split = None if options["split"] == "all" else options["split"]
            store = export_logits(model, manifest, split, config.data.frontend(),
                                  config.augment.crop_seconds, options["batch_size"])
            path = save_logits(store, options["out"])
        record_logit_store(path, store, "export", sources=[checkpoint])
        self.stdout.write(self.style.SUCCESS(
            f"Exported {len(store)} clips (K={store.class_count}) from {checkpoint} to {path}"
        ))
