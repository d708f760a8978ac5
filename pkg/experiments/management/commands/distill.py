from pathlib import Path

from django.core.management.base import CommandError

from experiments.management.commands.train import Command as TrainCommand


class Command(TrainCommand):
    help = "Train a student on pre-computed teacher (ensemble) logits"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--teacher-logits", help="Logit store, overrides [distill] teacher_logits")
        parser.add_argument("--lambda", dest="lambda_", type=float, help="Hard-label weight, overrides [distill]")
        parser.add_argument("--tau", type=float, help="Temperature, overrides [distill]")

    def prepare_config(self, config, options):
        config = super().prepare_config(config, options)
        if config.model.role != "student":
            raise CommandError("distill trains students; set [model] role = student")
        distill = {}
        if options["teacher_logits"]:
            distill["teacher_logits"] = Path(options["teacher_logits"]).resolve()
        if options["lambda_"] is not None:
            distill["lambda_"] = options["lambda_"]
        if options["tau"] is not None:
            distill["tau"] = options["tau"]
        config = config.replace(distill=distill)
        if not config.uses_teacher:
            raise CommandError("no teacher logits: pass --teacher-logits or set [distill] teacher_logits")
        return config
