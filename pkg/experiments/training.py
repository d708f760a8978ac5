"""
Training runs.

One run = one seed: WAV -> shifted crop -> DIR -> log-mel -> Freq-MixStyle
-> model -> loss -> Adam. Every epoch is evaluated on the validation split;
the last `keep_last` epochs are checkpointed and form the run's report
window. Artifacts written to the run directory are the source of truth:
config.ini, epoch-XXX.ckpt, metrics.jsonl and report.json.

Nothing here touches the ORM, so runs can execute in worker processes.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from core.augment import dir_augment, freq_mixstyle, load_ir_bank, shifted_crop, synthetic_ir_bank
from core.checkpoint import load_checkpoint, save_checkpoint
from core.distill import cross_entropy, kd_loss
from core.logits import import_logits
from core.networks import BUDGET_SECONDS, count_complexity, require_budget
from core.optim import Adam, WarmupCosineSchedule
from core.tensor import backward
from experiments.config import load_config
from experiments.dataset import DatasetManifest
from experiments.exceptions import ConfigConflictError
from experiments.inference import crop_samples, feature_batch
from experiments.metrics import MetricsReport, aggregate_reports, evaluate

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
METRICS_FILE = "metrics.jsonl"
CONFIG_FILE = "config.ini"


@dataclass
class EpochResult:
    epoch: int
    train_loss: float
    lr: float
    report: MetricsReport

    def to_dict(self):
        return {"epoch": self.epoch, "train_loss": self.train_loss, "lr": self.lr, "report": self.report.to_dict()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["epoch"], data["train_loss"], data["lr"], MetricsReport.from_dict(data["report"]))


@dataclass
class RunResult:
    run_id: str
    seed: int
    run_dir: Path
    params: int
    macs: int
    initial_loss: float
    epochs: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    keep_last: int = 4

    @property
    def final_loss(self):
        return self.epochs[-1].train_loss

    @property
    def window(self):
        return self.epochs[-self.keep_last:]

    @property
    def report(self):
        window = self.window
        return aggregate_reports([e.report for e in window], run_ids=(self.run_id,),
                                 epoch_window=(window[0].epoch, window[-1].epoch))


def budget_complexity(config, model=None):
    """Params and MACs of the configured model for one BUDGET_SECONDS clip."""
    model = model or config.model.build()
    return count_complexity(model, config.data.frontend().input_shape(BUDGET_SECONDS))


def run_id_for(config, seed):
    m = config.model
    return f"{m.role}-{m.architecture}{m.base_channels}-{config.augment.preset.lower()}-s{seed}"


class Trainer:
    def __init__(self, config, run_dir, seed=None, manifest=None):
        self.config = config
        self.seed = config.train.seed if seed is None else seed
        self.run_dir = Path(run_dir)
        self.model = config.model.build(seed=self.seed)
        self.complexity = budget_complexity(config, self.model)
        if config.is_student:
            require_budget(self.complexity)
        self.manifest = manifest or DatasetManifest.load(config.data.manifest)
        self.frontend = config.data.frontend()
        self.crop = crop_samples(self.frontend, config.augment.crop_seconds)
        self.records = self.manifest.split("train")
        if not self.records:
            raise ConfigConflictError(f"manifest {config.data.manifest} has no training clips")
        self.teacher = self._load_teacher()
        self.fms = config.augment.fms()
        self.dir = config.augment.dir(self._ir_bank())

    def _load_teacher(self):
        path = self.config.distill.teacher_logits
        if path is None:
            return None
        store = import_logits(path)
        missing = [r.clip_path for r in self.records if r.clip_path not in store]
        if missing:
            raise ConfigConflictError(f"teacher logits {path} lack {len(missing)} training clips, e.g. {missing[0]}")
        if store.class_count != self.config.model.n_classes:
            raise ConfigConflictError(
                f"teacher logits have {store.class_count} classes, model has {self.config.model.n_classes}"
            )
        return store

    def _ir_bank(self):
        augment = self.config.augment
        if augment.p_dir == 0:
            return []
        if augment.ir_dir is not None:
            return load_ir_bank(augment.ir_dir, self.frontend.sample_rate)
        return synthetic_ir_bank(seed=0)

    def batch_loss(self, waves, indices, rng):
        waves = [dir_augment(shifted_crop(w, self.crop, rng), self.dir, rng) for w in waves]
        x = freq_mixstyle(feature_batch(waves, self.frontend), self.fms, rng)
        logits = self.model(x)
        labels = np.array([self.records[i].label for i in indices])
        if self.teacher is None:
            return cross_entropy(logits, labels)
        teacher = self.teacher.matrix([self.records[i].clip_path for i in indices])
        return kd_loss(logits, teacher, labels, self.config.distill.config)

    def run(self):
        cfg = self.config.train
        run_id = run_id_for(self.config, self.seed)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.config.replace(train={"seed": self.seed}).save(self.run_dir / CONFIG_FILE)
        metrics_path = self.run_dir / METRICS_FILE
        metrics_path.write_text("")

        waves = [self.manifest.load_clip(r, self.frontend.sample_rate) for r in self.records]
        steps = math.ceil(len(self.records) / cfg.batch_size)
        schedule = WarmupCosineSchedule(cfg.lr, cfg.warmup_epochs * steps, cfg.epochs * steps)
        optimizer = Adam(self.model.parameters(), lr=cfg.lr, schedule=schedule)
        rng = np.random.default_rng(self.seed)
        result = RunResult(run_id, self.seed, self.run_dir, self.complexity.params, self.complexity.macs,
                           initial_loss=None, keep_last=cfg.keep_last)
        logger.info("run %s: %d train clips, %s params, %.2f MMACs", run_id, len(self.records),
                    f"{self.complexity.params:,}", self.complexity.mmacs)

        for epoch in range(1, cfg.epochs + 1):
            self.model.train()
            order = rng.permutation(len(self.records))
            losses, lr = [], cfg.lr
            for start in range(0, len(order), cfg.batch_size):
                indices = order[start:start + cfg.batch_size]
                loss = self.batch_loss([waves[i] for i in indices], indices, rng)
                if result.initial_loss is None:
                    result.initial_loss = loss.item()
                optimizer.zero_grad()
                backward(loss)
                lr = optimizer.step()
                losses.append(loss.item())

            report = evaluate((self.model, self.frontend), self.manifest, "val",
                              crop_seconds=self.config.augment.crop_seconds, batch_size=cfg.batch_size)
            entry = EpochResult(epoch, float(np.mean(losses)), lr, report)
            result.epochs.append(entry)
            with metrics_path.open("a") as handle:
                handle.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
            if epoch > cfg.epochs - cfg.keep_last:
                path = save_checkpoint(self.run_dir / f"epoch-{epoch:03d}.ckpt", self.model.state_dict())
                result.checkpoints.append(path)
            unseen = "n/a" if report.unseen_acc is None else f"{report.unseen_acc:.4f}"
            logger.info("run %s epoch %d/%d: loss %.4f, val %.4f, unseen %s, lr %.2e",
                        run_id, epoch, cfg.epochs, entry.train_loss, report.overall_acc, unseen, lr)

        write_report(result, self.config)
        return result


def write_report(result, config):
    payload = {
        "run_id": result.run_id,
        "seed": result.seed,
        "role": config.model.role,
        "architecture": config.model.architecture,
        "base_channels": config.model.base_channels,
        "preset": config.augment.preset,
        "params": result.params,
        "macs": result.macs,
        "initial_loss": result.initial_loss,
        "final_loss": result.final_loss,
        "window": [e.to_dict() for e in result.window],
        "aggregate": result.report.to_dict(),
    }
    path = Path(result.run_dir) / REPORT_FILE
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path


def read_report(run_dir):
    return json.loads((Path(run_dir) / REPORT_FILE).read_text())


def window_reports(payload):
    return [MetricsReport.from_dict(e["report"]) for e in payload["window"]]


def read_epochs(run_dir):
    lines = (Path(run_dir) / METRICS_FILE).read_text().splitlines()
    return [EpochResult.from_dict(json.loads(line)) for line in lines if line.strip()]


def train(config, run_dir, seed=None, manifest=None):
    return Trainer(config, run_dir, seed=seed, manifest=manifest).run()


def train_runs(config, runs_root, runs=None, manifest=None):
    """Seeds seed, seed+1, ...; the report averages runs x last-k epochs."""
    runs = config.train.runs if runs is None else runs
    manifest = manifest or DatasetManifest.load(config.data.manifest)
    results = []
    for k in range(runs):
        seed = config.train.seed + k
        results.append(train(config, Path(runs_root) / run_id_for(config, seed), seed=seed, manifest=manifest))
    window = [e.report for r in results for e in r.window]
    report = aggregate_reports(window, run_ids=[r.run_id for r in results],
                               epoch_window=(results[0].window[0].epoch, results[0].window[-1].epoch))
    return results, report


def load_trained_model(checkpoint, config=None):
    """Rebuild a model from a run checkpoint; the config defaults to the run's config.ini."""
    checkpoint = Path(checkpoint)
    config = config or load_config(checkpoint.parent / CONFIG_FILE)
    model = config.model.build()
    model.load_state_dict(load_checkpoint(checkpoint))
    model.eval()
    return model, config


def latest_checkpoint(run_dir):
    checkpoints = sorted(Path(run_dir).glob("epoch-*.ckpt"))
    if not checkpoints:
        raise FileNotFoundError(f"no checkpoints in {run_dir}")
    return checkpoints[-1]
