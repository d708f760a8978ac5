"""Device-aware accuracy and run aggregation."""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from core.logits import LogitStore
from experiments.exceptions import UnknownDeviceError
from experiments.inference import predict_logits

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    overall_acc: float
    per_device_acc: dict
    unseen_acc: float = None
    n_clips: int = 0
    unseen_devices: tuple = ()
    run_ids: tuple = ()
    epoch_window: tuple = ()

    def __post_init__(self):
        values = [self.overall_acc, *self.per_device_acc.values()]
        if self.unseen_acc is not None:
            values.append(self.unseen_acc)
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError(f"accuracies must lie in [0, 1], got {values}")

    def to_dict(self):
        data = asdict(self)
        data["unseen_devices"] = list(self.unseen_devices)
        data["run_ids"] = list(self.run_ids)
        data["epoch_window"] = list(self.epoch_window)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(
            overall_acc=data["overall_acc"],
            per_device_acc=dict(data["per_device_acc"]),
            unseen_acc=data.get("unseen_acc"),
            n_clips=data.get("n_clips", 0),
            unseen_devices=tuple(data.get("unseen_devices", ())),
            run_ids=tuple(data.get("run_ids", ())),
            epoch_window=tuple(data.get("epoch_window", ())),
        )


def predict_classes(logits):
    """Argmax per row; ties go to the lowest class index."""
    return np.argmax(np.asarray(logits), axis=1)


def score(records, predictions, unseen_devices):
    if len(records) != len(predictions):
        raise ValueError(f"{len(records)} records but {len(predictions)} predictions")
    if not records:
        raise ValueError("nothing to score")
    labels = np.array([r.label for r in records])
    devices = np.array([r.device for r in records])
    correct = np.asarray(predictions) == labels
    per_device = {str(d): float(correct[devices == d].mean()) for d in sorted(set(devices))}
    unseen_mask = np.isin(devices, list(unseen_devices))
    unseen_acc = float(correct[unseen_mask].mean()) if unseen_mask.any() else None
    present_unseen = tuple(d for d in sorted(unseen_devices) if d in per_device)
    return MetricsReport(float(correct.mean()), per_device, unseen_acc, len(records), present_unseen)


def evaluate(source, manifest, split="val", devices=None, frontend=None, crop_seconds=1.0, batch_size=32):
    """Accuracy of a LogitStore or a model over one manifest split.

    A model can be passed as `(graph, frontend)` or with `frontend=`;
    `devices` restricts the evaluated subset.
    """
    records = manifest.split(split)
    if devices is not None:
        unknown = set(devices) - {r.device for r in records}
        if unknown:
            raise UnknownDeviceError(f"devices not in the {split} split: {', '.join(sorted(unknown))}")
        records = [r for r in records if r.device in set(devices)]

    if isinstance(source, LogitStore):
        logits = source.matrix([r.clip_path for r in records])
    else:
        if isinstance(source, tuple):
            source, frontend = source
        if frontend is None:
            raise ValueError("evaluating a model needs a frontend config")
        logits = predict_logits(source, manifest, records, frontend, crop_seconds, batch_size)
    return score(records, predict_classes(logits), manifest.unseen_devices)


def aggregate_reports(reports, run_ids=(), epoch_window=()):
    """Arithmetic mean of every accuracy over a list of reports."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    devices = sorted({d for r in reports for d in r.per_device_acc})
    per_device = {
        d: float(np.mean([r.per_device_acc[d] for r in reports if d in r.per_device_acc])) for d in devices
    }
    unseen = [r.unseen_acc for r in reports]
    return MetricsReport(
        overall_acc=float(np.mean([r.overall_acc for r in reports])),
        per_device_acc=per_device,
        unseen_acc=float(np.mean(unseen)) if all(u is not None for u in unseen) else None,
        n_clips=reports[0].n_clips,
        unseen_devices=reports[0].unseen_devices,
        run_ids=tuple(run_ids),
        epoch_window=tuple(epoch_window),
    )
