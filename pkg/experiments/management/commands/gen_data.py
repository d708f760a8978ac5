from django.core.management.base import BaseCommand

from experiments.dataset import generate_toy_dataset
from experiments.utils import data_root, library_errors


class Command(BaseCommand):
    help = "Generate the synthetic scene dataset (WAV clips + manifest.csv)"

    def add_arguments(self, parser):
        parser.add_argument("--out", help="Output directory (default: KDLAB_DATA_ROOT)")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--scenes", type=int, default=10)
        parser.add_argument("--devices", type=int, default=9)
        parser.add_argument("--unseen", type=int, default=3, help="Devices recorded only in validation")
        parser.add_argument("--clips-per-cell", type=int, default=4, help="Train clips per scene and seen device")
        parser.add_argument("--val-clips-per-cell", type=int, default=2)
        parser.add_argument("--sample-rate", type=int, default=32000)
        parser.add_argument("--clip-seconds", type=float, default=1.25)

    def handle(self, *args, **options):
        root = data_root(options["out"])
        self.stdout.write(f"Generating toy dataset in {root}...")
        with library_errors():
            manifest = generate_toy_dataset(
                root,
                seed=options["seed"],
                n_scenes=options["scenes"],
                n_devices=options["devices"],
                n_unseen=options["unseen"],
                clips_per_cell=options["clips_per_cell"],
                val_clips_per_cell=options["val_clips_per_cell"],
                sample_rate=options["sample_rate"],
                clip_seconds=options["clip_seconds"],
            )
        self.stdout.write(
            f"train clips: {len(manifest.split('train'))}, val clips: {len(manifest.split('val'))}"
        )
        self.stdout.write(f"seen devices: {', '.join(manifest.seen_devices) or '-'}")
        self.stdout.write(f"unseen devices: {', '.join(manifest.unseen_devices) or '-'}")
        self.stdout.write(self.style.SUCCESS(f"Manifest written to {root / 'manifest.csv'}"))
