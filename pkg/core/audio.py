"""
Waveform ingestion and the log-mel frontend.

WAV I/O goes through soundfile; the FFT is an iterative radix-2
Cooley-Tukey transform over the last axis.
"""
import functools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import soundfile as sf

from core.exceptions import (
    ClipTooShortError,
    SampleRateMismatchError,
    ShapeError,
    UnsupportedCodecError,
    WavFormatError,
)
from core.tensor import Tensor

logger = logging.getLogger(__name__)

SUPPORTED_SUBTYPES = {"PCM_16", "FLOAT"}
LOG_FLOOR = 1e-5


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ShapeError(f"waveform must be mono, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.isfinite(self.samples).all():
            raise WavFormatError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate

    @property
    def peak(self):
        return float(np.abs(self.samples).max()) if len(self) else 0.0


@dataclass
class Spectrogram:
    values: np.ndarray
    sample_rate: int
    n_fft: int
    hop: int

    @property
    def frames(self):
        return self.values.shape[1]


@dataclass
class LogMelSpec:
    values: Tensor

    @property
    def mel_bins(self):
        return self.values.shape[1]

    @property
    def frames(self):
        return self.values.shape[2]


def load_wav(path, expected_rate=None):
    path = Path(path)
    try:
        info = sf.info(str(path))
    except RuntimeError as exc:
        raise WavFormatError(f"{path}: malformed or unreadable WAV ({exc})") from exc
    if info.format != "WAV":
        raise WavFormatError(f"{path}: expected RIFF/WAVE, got {info.format}")
    if info.subtype not in SUPPORTED_SUBTYPES:
        raise UnsupportedCodecError(f"{path}: unsupported WAV subtype {info.subtype}")
    if expected_rate is not None and info.samplerate != expected_rate:
        raise SampleRateMismatchError(
            f"{path}: sample rate {info.samplerate} Hz, configured {expected_rate} Hz"
        )
    data, rate = sf.read(str(path), dtype="float32", always_2d=True)
    return Waveform(data.mean(axis=1), rate)


def save_wav(path, waveform, subtype="PCM_16"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.clip(waveform.samples, -1.0, 1.0), waveform.sample_rate,
             subtype=subtype, format="WAV")
    return path


def is_power_of_two(n):
    return n > 0 and n & (n - 1) == 0


@functools.lru_cache(maxsize=32)
def _bit_reversal(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x):
    """Radix-2 DFT over the last axis; the length must be a power of two."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ShapeError(f"fft length must be a power of two, got {n}")
    lead = x.shape[:-1]
    a = x[..., _bit_reversal(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return a


def ifft(spectrum):
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    return np.conj(fft(np.conj(spectrum))) / spectrum.shape[-1]


def next_power_of_two(n):
    return 1 << max(int(n) - 1, 0).bit_length()


def fft_convolve(signal, kernel):
    """Full linear convolution via zero-padded FFTs."""
    signal = np.asarray(signal, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    full = signal.shape[-1] + kernel.shape[-1] - 1
    n = next_power_of_two(full)
    padded_signal = np.zeros(n)
    padded_signal[:signal.shape[-1]] = signal
    padded_kernel = np.zeros(n)
    padded_kernel[:kernel.shape[-1]] = kernel
    return ifft(fft(padded_signal) * fft(padded_kernel)).real[:full]


@functools.lru_cache(maxsize=8)
def hann_window(n):
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def stft(waveform, n_fft=1024, hop=320):
    """Centered, reflect-padded, Hann-windowed STFT -> [n_fft/2+1, T]."""
    if not is_power_of_two(n_fft):
        raise ShapeError(f"n_fft must be a power of two, got {n_fft}")
    if hop <= 0:
        raise ValueError(f"hop must be positive, got {hop}")
    if len(waveform) < n_fft:
        raise ClipTooShortError(f"clip of {len(waveform)} samples is shorter than one {n_fft}-sample frame")
    padded = np.pad(waveform.samples.astype(np.float64), n_fft // 2, mode="reflect")
    n_frames = 1 + (len(padded) - n_fft) // hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop][:n_frames]
    spectrum = fft(frames * hann_window(n_fft))[:, : n_fft // 2 + 1]
    return Spectrogram(spectrum.T, waveform.sample_rate, n_fft, hop)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=16)
def mel_filterbank(sample_rate, n_fft, mel_bins, f_min, f_max):
    """Triangular filters with unit peak, evaluated at FFT bin frequencies."""
    if mel_bins < 2:
        raise ValueError(f"need at least 2 mel bins, got {mel_bins}")
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise ValueError(f"need 0 <= f_min < f_max <= {sample_rate / 2}, got {f_min}, {f_max}")
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), mel_bins + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_freqs[None, :] - lower) / (center - lower)
    falling = (upper - bin_freqs[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights.setflags(write=False)
    return weights


def mel_centers(sample_rate, mel_bins, f_min, f_max):
    return mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), mel_bins + 2))[1:-1]


def log_mel(spec, mel_bins=64, f_min=0.0, f_max=None):
    f_max = spec.sample_rate / 2 if f_max is None else f_max
    weights = mel_filterbank(spec.sample_rate, spec.n_fft, mel_bins, float(f_min), float(f_max))
    power = np.abs(spec.values) ** 2
    values = np.log(weights @ power + LOG_FLOOR).astype(np.float32)
    return LogMelSpec(Tensor(values[None, :, :]))


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 32000
    n_fft: int = 1024
    hop: int = 320
    mel_bins: int = 64
    f_min: float = 0.0
    f_max: float = None

    def frames_for(self, n_samples):
        return 1 + n_samples // self.hop

    def input_shape(self, seconds=1.0):
        """[C, F, T] of the model input for a clip of `seconds`."""
        return (1, self.mel_bins, self.frames_for(int(round(seconds * self.sample_rate))))

    def extract(self, waveform):
        if waveform.sample_rate != self.sample_rate:
            raise SampleRateMismatchError(
                f"waveform at {waveform.sample_rate} Hz, frontend configured for {self.sample_rate} Hz"
            )
        spec = stft(waveform, self.n_fft, self.hop)
        return log_mel(spec, self.mel_bins, self.f_min, self.f_max)
