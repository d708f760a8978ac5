"""Results tables assembled from run artifacts on disk."""
import csv
import logging
from dataclasses import astuple, dataclass, fields
from pathlib import Path

from experiments.metrics import aggregate_reports, evaluate
from experiments.training import read_report, window_reports

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ("group", "kind", "architectures", "dg_presets", "n_models", "params", "val_acc", "unseen_acc")


def format_pct(value):
    return "n/a" if value is None else f"{100.0 * value:.2f}"


@dataclass(frozen=True)
class ResultRow:
    group: str
    kind: str
    architectures: str
    dg_presets: str
    n_models: int
    params: str
    val_acc: str
    unseen_acc: str


def row_from_runs(group, kind, architectures, presets, run_dirs):
    """Mean over every run's last-k-epoch window."""
    payloads = [read_report(d) for d in run_dirs]
    reports = [r for p in payloads for r in window_reports(p)]
    report = aggregate_reports(reports, run_ids=[p["run_id"] for p in payloads])
    return ResultRow(group, kind, "+".join(architectures), "+".join(presets), len(payloads),
                     str(payloads[0]["params"]), format_pct(report.overall_acc), format_pct(report.unseen_acc))


def row_from_stores(group, kind, architectures, presets, stores, manifest, n_models=None, params=""):
    """Mean accuracy of one or more logit stores on the validation split."""
    report = aggregate_reports([evaluate(store, manifest, "val") for store in stores])
    n_models = len(stores) if n_models is None else n_models
    return ResultRow(group, kind, "+".join(architectures), "+".join(presets), n_models, params,
                     format_pct(report.overall_acc), format_pct(report.unseen_acc))


def write_results(rows, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        writer.writerows(astuple(row) for row in rows)

    md_path = out_dir / "results.md"
    lines = [
        "| " + " | ".join(RESULT_COLUMNS) + " |",
        "|" + "|".join("---" for _ in RESULT_COLUMNS) + "|",
    ]
    lines += ["| " + " | ".join(str(getattr(row, f.name)) for f in fields(row)) + " |" for row in rows]
    md_path.write_text("\n".join(lines) + "\n")
    logger.info("wrote %d result rows to %s", len(rows), out_dir)
    return csv_path, md_path
