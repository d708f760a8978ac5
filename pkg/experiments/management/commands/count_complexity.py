import csv

from django.core.management.base import BaseCommand

from core.audio import FrontendConfig
from core.networks import (
    BUDGET_SECONDS, MAX_MACS, MAX_PARAMS, SIZE_LADDER, assert_budget, build_model, count_complexity,
)
from experiments.config import load_config
from experiments.utils import library_errors, parse_base_channels


class Command(BaseCommand):
    help = "Per-layer parameters and MACs of a CPM or CPR model, checked against the budget"

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Take model and frontend settings from an experiment config")
        parser.add_argument("--architecture", choices=["cpm", "cpr"], default="cpm")
        parser.add_argument("--base-channels", default="32", help="Integer or ladder label such as 450K")
        parser.add_argument("--expansion-rate", type=int, default=3, help="CPM only")
        parser.add_argument("--channels-multiplier", type=float, default=2.3, help="CPM only")
        parser.add_argument("--seconds", type=float, default=BUDGET_SECONDS,
                            help="Input clip length; the budget is defined per 1 s clip")
        parser.add_argument("--max-params", type=int, default=MAX_PARAMS)
        parser.add_argument("--max-macs", type=float, default=MAX_MACS)
        parser.add_argument("--csv", help="Also write the per-layer table to this file")
        parser.add_argument("--ladder", action="store_true", help="Report every ladder size instead of one model")

    def handle(self, *args, **options):
        with library_errors():
            if options["config"]:
                config = load_config(options["config"])
                model = config.model.build()
                input_shape = config.data.frontend().input_shape(options["seconds"])
            else:
                input_shape = FrontendConfig().input_shape(options["seconds"])
                if options["ladder"]:
                    self._ladder(options, input_shape)
                    return
                model = self._build(options, parse_base_channels(options["base_channels"], options["architecture"]))
            complexity = count_complexity(model, input_shape)
            verdict = assert_budget(complexity, options["max_params"], options["max_macs"])

        self.stdout.write(f"{model.architecture} base={model.config.base_channels} input={list(input_shape)}")
        self.stdout.write(f"{'layer':<40} {'kind':<10} {'out shape':<16} {'params':>9} {'MACs':>12}")
        for info in complexity.layers:
            self.stdout.write(
                f"{info.name:<40} {info.kind:<10} {'x'.join(map(str, info.out_shape)):<16} "
                f"{info.params:>9,} {info.macs:>12,}"
            )
        self.stdout.write(f"{'total':<67} {complexity.params:>9,} {complexity.macs:>12,}")
        if options["csv"]:
            self._write_csv(options["csv"], complexity)
        style = self.style.SUCCESS if verdict.passed else self.style.ERROR
        self.stdout.write(style(verdict.summary()))

    def _build(self, options, base_channels):
        kwargs = {}
        if options["architecture"] == "cpm":
            kwargs = {
                "expansion_rate": options["expansion_rate"],
                "channels_multiplier": options["channels_multiplier"],
            }
        return build_model(options["architecture"], base_channels, **kwargs)

    def _ladder(self, options, input_shape):
        arch = options["architecture"]
        self.stdout.write(f"{'size':<6} {'base':>5} {'params':>12} {'MMACs':>9}")
        for label, base in SIZE_LADDER[arch].items():
            complexity = count_complexity(self._build(options, base), input_shape)
            self.stdout.write(f"{label:<6} {base:>5} {complexity.params:>12,} {complexity.mmacs:>9.2f}")

    def _write_csv(self, path, complexity):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["name", "kind", "in_shape", "out_shape", "params", "macs"])
            for info in complexity.layers:
                writer.writerow([info.name, info.kind, "x".join(map(str, info.in_shape)),
                                 "x".join(map(str, info.out_shape)), info.params, info.macs])
        self.stdout.write(f"wrote {path}")
