"""A desk-sized dataset and experiment config shared by the experiment tests."""
import configparser
import copy
from pathlib import Path

from experiments.config import load_config
from experiments.dataset import generate_toy_dataset

TINY_SECTIONS = {
    "model": {"architecture": "cpm", "role": "student", "base_channels": "8"},
    "augment": {"preset": "DIRFMS", "crop_seconds": "0.5"},
    "train": {"epochs": "2", "batch_size": "4", "lr": "0.001", "warmup_epochs": "0", "keep_last": "2", "runs": "1"},
    "data": {"manifest": "data/manifest.csv", "sample_rate": "8000", "n_fft": "256", "hop": "80", "mel_bins": "16"},
}


def tiny_dataset(root):
    """3 scenes x devices a, b (seen) and c (unseen): 12 train and 9 val clips."""
    return generate_toy_dataset(
        Path(root) / "data",
        seed=0,
        n_scenes=3,
        n_devices=3,
        n_unseen=1,
        clips_per_cell=2,
        val_clips_per_cell=1,
        sample_rate=8000,
        clip_seconds=0.75,
    )


def write_config(root, name="experiment.ini", **overrides):
    """Write the tiny config (with per-section overrides) next to the dataset."""
    sections = copy.deepcopy(TINY_SECTIONS)
    for section, values in overrides.items():
        sections.setdefault(section, {}).update({k: str(v) for k, v in values.items()})
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(sections)
    path = Path(root) / name
    with path.open("w") as handle:
        parser.write(handle)
    return path


def tiny_config(root, **overrides):
    return load_config(write_config(root, **overrides))
