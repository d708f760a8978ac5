"""
Experiment configuration.

An experiment is described by an INI file with [model], [distill],
[augment], [train] and [data] sections. Missing keys take the defaults
below; every section is validated by its form in experiments.forms and
collected into frozen dataclasses.
"""
import configparser
import dataclasses
import io
import logging
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError

from core.audio import FrontendConfig
from core.augment import DirConfig, FmsConfig
from core.distill import DistillConfig
from core.networks import CpmConfig, CprConfig, SIZE_LADDER, build_cpm, build_cpr
from experiments.exceptions import ConfigConflictError
from experiments.forms import SECTION_FORMS
from experiments.presets import resolve_preset

logger = logging.getLogger(__name__)

DEFAULTS = {
    "model": {
        "architecture": "cpm",
        "role": "student",
        "base_channels": "32",
        "expansion_rate": "3",
        "channels_multiplier": "2.3",
        "n_classes": "10",
    },
    "distill": {"lambda": "0.02", "tau": "2.0", "teacher_logits": ""},
    "augment": {"preset": "DIRFMS", "alpha_fms": "", "p_fms": "", "p_dir": "", "ir_dir": "", "crop_seconds": "1.0"},
    "train": {
        "epochs": "30",
        "batch_size": "32",
        "lr": "0.001",
        "warmup_epochs": "4",
        "seed": "0",
        "runs": "1",
        "keep_last": "4",
    },
    "data": {
        "manifest": "",
        "sample_rate": "32000",
        "n_fft": "1024",
        "hop": "320",
        "mel_bins": "64",
        "f_min": "0",
        "f_max": "",
    },
}


@dataclass(frozen=True)
class ModelSection:
    architecture: str = "cpm"
    role: str = "student"
    base_channels: int = 32
    expansion_rate: int = 3
    channels_multiplier: float = 2.3
    n_classes: int = 10

    def build(self, seed=0):
        if self.architecture == "cpm":
            cfg = CpmConfig(self.base_channels, self.expansion_rate, self.channels_multiplier, self.n_classes)
            return build_cpm(cfg, seed=seed)
        return build_cpr(CprConfig(self.base_channels, self.n_classes), seed=seed)


@dataclass(frozen=True)
class DistillSection:
    lambda_: float = 0.02
    tau: float = 2.0
    teacher_logits: Path = None

    def __post_init__(self):
        DistillConfig(self.lambda_, self.tau)

    @property
    def config(self):
        return DistillConfig(self.lambda_, self.tau)


@dataclass(frozen=True)
class AugmentSection:
    preset: str = "DIRFMS"
    alpha_fms: float = 0.3
    p_fms: float = 0.4
    p_dir: float = 0.6
    ir_dir: Path = None
    crop_seconds: float = 1.0

    def fms(self):
        return FmsConfig(self.alpha_fms, self.p_fms)

    def dir(self, ir_bank):
        return DirConfig(self.p_dir, ir_bank if self.p_dir > 0 else [])


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    warmup_epochs: int = 4
    seed: int = 0
    runs: int = 1
    keep_last: int = 4


@dataclass(frozen=True)
class DataSection:
    manifest: Path = None
    sample_rate: int = 32000
    n_fft: int = 1024
    hop: int = 320
    mel_bins: int = 64
    f_min: float = 0.0
    f_max: float = 16000.0

    def frontend(self):
        return FrontendConfig(self.sample_rate, self.n_fft, self.hop, self.mel_bins, self.f_min, self.f_max)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSection
    distill: DistillSection
    augment: AugmentSection
    train: TrainSection
    data: DataSection

    @property
    def is_student(self):
        return self.model.role == "student"

    @property
    def uses_teacher(self):
        return self.distill.teacher_logits is not None

    def replace(self, **sections):
        """Return a copy with some section fields overridden.

        `replace(model={"role": "teacher"}, train={"seed": 3})`
        """
        changed = {
            name: dataclasses.replace(getattr(self, name), **fields) for name, fields in sections.items()
        }
        return dataclasses.replace(self, **changed)

    def to_ini(self):
        parser = configparser.ConfigParser()
        for name in DEFAULTS:
            section = getattr(self, name)
            parser[name] = {
                ("lambda" if f.name == "lambda_" else f.name): _format(getattr(section, f.name))
                for f in dataclasses.fields(section)
            }
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_ini())
        return path


def _format(value):
    if value is None:
        return ""
    return str(value)


def _resolve_path(value, base_dir):
    if not value:
        return None
    path = Path(value).expanduser()
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return path


def _base_channels(raw, architecture):
    # ladder labels ("450K") are accepted alongside plain integers
    label = str(raw).strip().upper()
    return str(SIZE_LADDER.get(architecture, {}).get(label, raw))


def parse_config(text, base_dir=None):
    """Parse and validate INI text into an ExperimentConfig.

    Relative paths are resolved against `base_dir`. Raises ValidationError
    keyed by "section.key".
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"unreadable experiment config: {exc}") from exc
    unknown = set(parser.sections()) - set(DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown config sections: {', '.join(sorted(unknown))}")

    cleaned, errors = {}, {}
    for name, form_class in SECTION_FORMS.items():
        data = dict(DEFAULTS[name])
        if parser.has_section(name):
            extra = set(parser[name]) - set(data)
            if extra:
                errors.update({f"{name}.{key}": ["unknown key"] for key in sorted(extra)})
            data.update(parser[name])
        if name == "model":
            data["base_channels"] = _base_channels(data["base_channels"], data.get("architecture"))
        form = form_class(data)
        if form.is_valid():
            cleaned[name] = form.cleaned_data
        else:
            for field, messages in form.errors.items():
                errors[f"{name}.{field}"] = list(messages)
    if errors:
        raise ValidationError(errors)
    return _assemble(cleaned, base_dir)


def _assemble(cleaned, base_dir):
    m, d, a, t, data = (cleaned[k] for k in ("model", "distill", "augment", "train", "data"))
    model = ModelSection(m["architecture"], m["role"], m["base_channels"], m["expansion_rate"],
                         m["channels_multiplier"], m["n_classes"])
    distill = DistillSection(d["lambda"], d["tau"], _resolve_path(d["teacher_logits"], base_dir))
    if model.role == "teacher" and distill.teacher_logits is not None:
        raise ValidationError({"distill.teacher_logits": ["a teacher run cannot distill from teacher logits"]})

    preset = resolve_preset(a["preset"], model.role, model.architecture)
    augment = AugmentSection(
        preset=a["preset"],
        alpha_fms=a["alpha_fms"] if a["alpha_fms"] is not None else preset.alpha_fms,
        p_fms=a["p_fms"] if a["p_fms"] is not None else preset.p_fms,
        p_dir=a["p_dir"] if a["p_dir"] is not None else preset.p_dir,
        ir_dir=_resolve_path(a["ir_dir"], base_dir),
        crop_seconds=a["crop_seconds"],
    )
    train = TrainSection(**t)
    manifest = _resolve_path(data["manifest"], base_dir) or Path(settings.KDLAB_DATA_ROOT) / "manifest.csv"
    data_section = DataSection(manifest, data["sample_rate"], data["n_fft"], data["hop"], data["mel_bins"],
                               data["f_min"], data["f_max"])
    if data_section.sample_rate * augment.crop_seconds < data_section.n_fft:
        raise ConfigConflictError(
            f"a {augment.crop_seconds:g} s crop at {data_section.sample_rate} Hz is shorter than n_fft={data_section.n_fft}"
        )
    return ExperimentConfig(model, distill, augment, train, data_section)


def load_config(path):
    path = Path(path)
    config = parse_config(path.read_text(), base_dir=path.resolve().parent)
    logger.debug("loaded experiment config %s", path)
    return config


def default_config(**sections):
    """The all-defaults config, optionally overridden per section."""
    return parse_config("").replace(**sections)
