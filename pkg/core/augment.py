"""
Device-generalisation augmentations.

Freq-MixStyle works on log-mel batches, DIR convolution and crops work on
waveforms. Every random decision is drawn from an explicit numpy Generator.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from core.audio import Waveform, fft_convolve, load_wav
from core.exceptions import AugmentationError, ClipTooShortError, ShapeError
from core.tensor import Tensor, add, mul

logger = logging.getLogger(__name__)

FMS_EPS = 1e-5


@dataclass(frozen=True)
class FmsConfig:
    alpha: float = 0.3
    p: float = 0.4

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"FMS alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"FMS probability must lie in [0, 1], got {self.p}")


@dataclass
class DirConfig:
    p: float = 0.6
    ir_bank: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"DIR probability must lie in [0, 1], got {self.p}")
        bank = []
        for k, ir in enumerate(self.ir_bank):
            ir = np.asarray(ir, dtype=np.float64)
            if ir.ndim != 1 or len(ir) == 0:
                raise AugmentationError(f"impulse response {k} must be a non-empty 1-D array")
            if not np.any(ir):
                raise AugmentationError(f"impulse response {k} is all zeros")
            bank.append(peak_normalize(ir))
        self.ir_bank = bank


def frequency_statistics(values):
    """Per-sample, per-frequency mean and guarded std over the time axis."""
    mu = values.mean(axis=3, keepdims=True)
    sigma = values.std(axis=3, keepdims=True) + values.dtype.type(FMS_EPS)
    return mu, sigma


def freq_mixstyle(batch, cfg, rng, lam=None, perm=None):
    """Normalise each frequency band and re-style it with mixed statistics.

    One apply-draw, one mixing coefficient and one permutation per batch.
    Statistics are constants for the backward pass. `lam`/`perm` force the
    draws (the apply-draw is still consumed).
    """
    if batch.ndim != 4:
        raise ShapeError(f"freq_mixstyle expects [N,1,F,T], got {list(batch.shape)}")
    n, _, f, t = batch.shape
    if n < 1 or f == 0 or t == 0:
        raise ShapeError(f"freq_mixstyle needs non-empty batch, got {list(batch.shape)}")
    if rng.random() >= cfg.p:
        return batch
    lam = rng.beta(cfg.alpha, cfg.alpha) if lam is None else lam
    perm = rng.permutation(n) if perm is None else np.asarray(perm)

    mu, sigma = frequency_statistics(batch.data)
    dtype = batch.dtype.type
    mu_mix = dtype(lam) * mu + dtype(1.0 - lam) * mu[perm]
    sigma_mix = dtype(lam) * sigma + dtype(1.0 - lam) * sigma[perm]
    gain = sigma_mix / sigma
    shift = mu_mix - mu * gain
    return add(mul(batch, Tensor(gain)), Tensor(shift))


def peak_normalize(samples):
    peak = np.abs(samples).max()
    return samples / peak if peak > 0 else samples


def dir_augment(waveform, cfg, rng):
    """With probability p convolve with a random IR and restore the input peak."""
    if cfg.p == 0:
        return waveform
    if not cfg.ir_bank:
        raise AugmentationError("DIR augmentation enabled but the impulse-response bank is empty")
    if rng.random() >= cfg.p:
        return waveform
    ir = cfg.ir_bank[int(rng.integers(len(cfg.ir_bank)))]
    wet = fft_convolve(waveform.samples, ir)[: len(waveform)]
    peak_in, peak_out = waveform.peak, np.abs(wet).max()
    if peak_out > 0:
        wet = wet * (peak_in / peak_out)
    return Waveform(wet.astype(np.float32), waveform.sample_rate)


def dir_augment_batch(waveforms, cfg, seed):
    """Per-sample sub-seeds keep the result independent of processing order."""
    children = np.random.SeedSequence(seed).spawn(len(waveforms))
    return [dir_augment(w, cfg, np.random.default_rng(child)) for w, child in zip(waveforms, children)]


def shifted_crop(waveform, crop_len, rng, offset=None):
    """A contiguous window of crop_len samples at a uniformly random offset."""
    if len(waveform) < crop_len:
        raise ClipTooShortError(f"clip of {len(waveform)} samples is shorter than crop of {crop_len}")
    max_offset = len(waveform) - crop_len
    if offset is None:
        offset = int(rng.integers(max_offset + 1))
    elif not 0 <= offset <= max_offset:
        raise ValueError(f"offset {offset} outside [0, {max_offset}]")
    return Waveform(waveform.samples[offset:offset + crop_len], waveform.sample_rate)


def center_crop(waveform, crop_len):
    if len(waveform) < crop_len:
        raise ClipTooShortError(f"clip of {len(waveform)} samples is shorter than crop of {crop_len}")
    offset = (len(waveform) - crop_len) // 2
    return Waveform(waveform.samples[offset:offset + crop_len], waveform.sample_rate)


def synthetic_ir_bank(seed=0, count=8, min_taps=64, max_taps=512):
    """Exponentially decaying low-passed noise bursts, peak normalised."""
    rng = np.random.default_rng(seed)
    bank = []
    for taps in np.linspace(min_taps, max_taps, count).astype(int):
        noise = rng.standard_normal(taps)
        smooth = int(rng.integers(1, 8))
        noise = np.convolve(noise, np.ones(smooth) / smooth, mode="same")
        decay = np.exp(-np.arange(taps) / (taps * rng.uniform(0.1, 0.4)))
        ir = noise * decay
        ir[0] = abs(ir[0]) + 1.0
        bank.append(peak_normalize(ir).astype(np.float32))
    return bank


def load_ir_bank(directory, sample_rate=None):
    """Every *.wav under `directory` in sorted filename order."""
    paths = sorted(Path(directory).glob("*.wav"))
    if not paths:
        raise AugmentationError(f"no impulse responses found in {directory}")
    bank = [peak_normalize(load_wav(p, expected_rate=sample_rate).samples) for p in paths]
    logger.info("loaded %d impulse responses from %s", len(bank), directory)
    return bank
