from django.core.management.base import BaseCommand

from core.logits import ensemble_logits, import_logits, save_logits
from experiments.recording import record_logit_store
from experiments.utils import library_errors


class Command(BaseCommand):
    help = "Average several logit stores over the same clips into one teacher store"

    def add_arguments(self, parser):
        parser.add_argument("stores", nargs="+", help="Member .logits files")
        parser.add_argument("--out", required=True, help="Output .logits file")

    def handle(self, *args, **options):
        with library_errors():
            members = [import_logits(path) for path in options["stores"]]
            store = ensemble_logits(members)
            path = save_logits(store, options["out"])
        record_logit_store(path, store, "ensemble", sources=options["stores"])
        self.stdout.write(self.style.SUCCESS(
            f"Averaged {len(members)} stores over {len(store)} clips (K={store.class_count}) into {path}"
        ))
