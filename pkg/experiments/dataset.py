"""
Dataset manifests and the synthetic desk-scale scene dataset.

A manifest is a CSV with header `clip_path,scene,device,split`; clip paths
are relative to the manifest's directory. Devices recorded only in the
validation split are "unseen".
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from core.audio import Waveform, load_wav, save_wav
from experiments.exceptions import ManifestError, MissingClipError, UnknownDeviceError

logger = logging.getLogger(__name__)

SCENES = (
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
)
SPLITS = ("train", "val")
MANIFEST_FIELDS = ("clip_path", "scene", "device", "split")


def device_names(n):
    """a, b, c, s1, s2, ... in recording-device naming order."""
    names = ["a", "b", "c"][:n]
    return names + [f"s{k}" for k in range(1, n - len(names) + 1)]


@dataclass(frozen=True)
class ClipRecord:
    clip_path: str
    scene: str
    device: str
    split: str

    @property
    def label(self):
        return SCENES.index(self.scene)


class DatasetManifest:
    def __init__(self, records, root=None):
        self.records = list(records)
        self.root = Path(root) if root is not None else Path(".")
        self._validate()

    def _validate(self):
        seen = set()
        for record in self.records:
            if record.clip_path in seen:
                raise ManifestError(f"duplicate clip path {record.clip_path}")
            seen.add(record.clip_path)
            if record.split not in SPLITS:
                raise ManifestError(f"{record.clip_path}: unknown split {record.split!r}")
            if record.scene not in SCENES:
                raise ManifestError(f"{record.clip_path}: unknown scene {record.scene!r}")
            if not record.device:
                raise ManifestError(f"{record.clip_path}: empty device id")
        if not any(r.split == "val" for r in self.records):
            raise ManifestError("manifest has no validation clips")

    def __len__(self):
        return len(self.records)

    def split(self, name=None):
        if name is None:
            return list(self.records)
        if name not in SPLITS:
            raise ManifestError(f"unknown split {name!r}")
        return [r for r in self.records if r.split == name]

    def devices(self, split=None):
        return sorted({r.device for r in self.split(split)})

    @property
    def seen_devices(self):
        train = set(self.devices("train"))
        return [d for d in self.devices("val") if d in train]

    @property
    def unseen_devices(self):
        train = set(self.devices("train"))
        return [d for d in self.devices("val") if d not in train]

    def with_val_devices(self, devices):
        """Keep train records and only the val records of `devices`."""
        devices = set(devices)
        unknown = devices - set(self.devices("val"))
        if unknown:
            raise UnknownDeviceError(f"devices not in the validation split: {', '.join(sorted(unknown))}")
        kept = [r for r in self.records if r.split == "train" or r.device in devices]
        return DatasetManifest(kept, self.root)

    def path_of(self, record):
        return self.root / record.clip_path

    def load_clip(self, record, sample_rate=None):
        path = self.path_of(record)
        if not path.exists():
            raise MissingClipError(f"clip {record.clip_path} not found under {self.root}")
        return load_wav(path, expected_rate=sample_rate)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(MANIFEST_FIELDS)
            for r in self.records:
                writer.writerow((r.clip_path, r.scene, r.device, r.split))
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise ManifestError(f"manifest {path} does not exist")
        with path.open(newline="") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
                raise ManifestError(f"{path}: expected header {','.join(MANIFEST_FIELDS)}, got {reader.fieldnames}")
            records = [ClipRecord(row["clip_path"], row["scene"], row["device"], row["split"]) for row in reader]
        return cls(records, root=path.parent)


@dataclass(frozen=True)
class SceneTexture:
    bands: np.ndarray  # (centre Hz, width Hz, gain) per noise band
    tones: np.ndarray  # (frequency Hz, amplitude) per tonal component
    modulation_hz: float

    @classmethod
    def draw(cls, rng, sample_rate):
        top = sample_rate / 2 * 0.9
        centres = np.exp(rng.uniform(np.log(80.0), np.log(top), size=3))
        bands = np.stack([centres, centres * rng.uniform(0.1, 0.5, size=3), rng.uniform(0.3, 1.0, size=3)], axis=1)
        tones = np.stack([np.exp(rng.uniform(np.log(100.0), np.log(top / 2), size=2)),
                          rng.uniform(0.05, 0.3, size=2)], axis=1)
        return cls(bands, tones, float(rng.uniform(0.5, 8.0)))

    def render(self, n_samples, sample_rate, rng):
        spectrum = np.fft.rfft(rng.standard_normal(n_samples))
        freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
        envelope = np.full_like(freqs, 0.02)
        for centre, width, gain in self.bands:
            envelope += gain * np.exp(-0.5 * ((freqs - centre) / width) ** 2)
        noise = np.fft.irfft(spectrum * envelope, n=n_samples)
        noise /= np.abs(noise).max() + 1e-12
        t = np.arange(n_samples) / sample_rate
        phase = rng.uniform(0, 2 * np.pi, size=len(self.tones))
        tonal = sum(a * np.sin(2 * np.pi * f * t + p) for (f, a), p in zip(self.tones, phase))
        am = 1.0 + 0.3 * np.sin(2 * np.pi * self.modulation_hz * t + rng.uniform(0, 2 * np.pi))
        return am * noise + tonal


@dataclass(frozen=True)
class DeviceColoration:
    fir: np.ndarray
    gain: float

    @classmethod
    def draw(cls, rng, taps=9):
        fir = rng.normal(0.0, 0.35, size=taps)
        fir[0] = 1.0
        return cls(fir, float(rng.uniform(0.4, 0.9)))

    def apply(self, signal):
        colored = np.convolve(signal, self.fir)[: len(signal)]
        return self.gain * colored / (np.abs(colored).max() + 1e-12)


def generate_toy_dataset(root, seed=0, n_scenes=10, n_devices=9, n_unseen=3, clips_per_cell=4,
                         val_clips_per_cell=2, sample_rate=32000, clip_seconds=1.25):
    """Write scene-texture clips recorded by colored devices plus a manifest.

    Seen devices contribute train and val clips, the last `n_unseen`
    devices only val clips. Output is a pure function of the arguments.
    """
    if not 1 <= n_scenes <= len(SCENES):
        raise ValueError(f"n_scenes must lie in [1, {len(SCENES)}], got {n_scenes}")
    if n_devices < 1 or not 0 <= n_unseen < n_devices:
        raise ValueError(f"need 0 <= n_unseen < n_devices, got n_unseen={n_unseen}, n_devices={n_devices}")
    if clips_per_cell < 1 or val_clips_per_cell < 1:
        raise ValueError("clips_per_cell and val_clips_per_cell must be positive")

    root = Path(root)
    master = np.random.default_rng(seed)
    scenes = SCENES[:n_scenes]
    textures = [SceneTexture.draw(master, sample_rate) for _ in scenes]
    devices = device_names(n_devices)
    colorations = [DeviceColoration.draw(master) for _ in devices]
    unseen = set(devices[n_devices - n_unseen:])
    n_samples = int(round(clip_seconds * sample_rate))

    records = []
    for s, scene in enumerate(scenes):
        for d, device in enumerate(devices):
            plan = [("val", val_clips_per_cell)] if device in unseen else [("train", clips_per_cell),
                                                                             ("val", val_clips_per_cell)]
            index = 0
            for split, count in plan:
                for _ in range(count):
                    rng = np.random.default_rng([seed, s, d, index])
                    audio = colorations[d].apply(textures[s].render(n_samples, sample_rate, rng))
                    clip_path = f"audio/{scene}-{device}-{index:03d}.wav"
                    save_wav(root / clip_path, Waveform(audio.astype(np.float32), sample_rate))
                    records.append(ClipRecord(clip_path, scene, device, split))
                    index += 1
    manifest = DatasetManifest(records, root)
    manifest.save(root / "manifest.csv")
    logger.info("generated %d clips (%d scenes, %d devices, %d unseen) in %s",
                len(records), n_scenes, n_devices, n_unseen, root)
    return manifest
