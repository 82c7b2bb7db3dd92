"""Signal processing: STFT, mel filterbank, log-mel features, per-word
z-scoring, mel inversion and Griffin-Lim phase reconstruction.

Conventions, fixed once here so every consumer agrees:
  frame 800 / shift 200 / fft 1024 at 16 kHz, periodic Hann window,
  HTK mel scale 2595*log10(1 + f/700) over 0..8000 Hz, amplitude (not
  power) mel magnitudes, natural log with a 1e-5 floor.

Everything is float64 and purely functional; AudioClip and MelSpectrogram
are thin value types.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadFrequencyRange,
    BadMagnitude,
    InputTooShort,
    IoError,
    NonFiniteInput,
    ParseError,
    ShapeMismatch,
)

DEFAULT_SAMPLE_RATE = 16000
LOG_FLOOR = 1e-5

MELS_MAGIC = b"MELS"
MELS_VERSION = 1
_MELS_HEADER = struct.Struct("<4sIII")


@dataclass
class AudioClip:
    """A mono waveform; samples nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ShapeMismatch(f"audio must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.isfinite(self.samples).all():
            raise NonFiniteInput("audio contains NaN or Inf")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    frame_length: int = 800   # 50 ms at 16 kHz
    frame_shift: int = 200    # 12.5 ms
    fft_size: int = 1024
    window: str = "hann"

    def __post_init__(self):
        if not (0 < self.frame_shift <= self.frame_length <= self.fft_size):
            raise ValueError(
                f"need 0 < shift <= frame <= fft, got {self.frame_shift}/"
                f"{self.frame_length}/{self.fft_size}"
            )
        if self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size must be a power of two, got {self.fft_size}")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.frame_length:
            raise InputTooShort(
                f"need >= {self.frame_length} samples for one frame, got {n_samples}"
            )
        return 1 + (n_samples - self.frame_length) // self.frame_shift


@dataclass
class MelSpectrogram:
    """Natural-log mel magnitudes, [n_mels x n_f]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.size == 0:
            raise ShapeMismatch(
                f"mel values must be a non-empty 2-D matrix, got {self.values.shape}"
            )
        if not np.isfinite(self.values).all():
            raise NonFiniteInput("mel spectrogram contains NaN or Inf")

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]

    @property
    def n_f(self) -> int:
        return self.values.shape[1]


@dataclass
class MelFilterbank:
    weights: np.ndarray          # [n_mels x (fft_size/2 + 1)]
    f_min: float
    f_max: float
    centers_hz: np.ndarray = field(repr=False)  # [n_mels] triangle peaks


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: AudioClip, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Complex spectrogram [(fft_size/2+1) x n_f]; no centering, frames start
    at multiples of frame_shift, each windowed then zero-padded to fft_size."""
    x = clip.samples
    n_f = cfg.n_frames(x.size)
    idx = np.arange(cfg.frame_length)[None, :] + \
        cfg.frame_shift * np.arange(n_f)[:, None]
    frames = x[idx] * _hann_periodic(cfg.frame_length)[None, :]
    return np.fft.rfft(frames, n=cfg.fft_size, axis=1).T


def istft(spec: np.ndarray, cfg: StftConfig = StftConfig(),
          length: int | None = None) -> np.ndarray:
    """Least-squares inverse of `stft`: per-frame irfft truncated to the frame
    length, then window-weighted overlap-add divided by the summed squared
    window. This is the inverse that makes Griffin-Lim's distance monotone."""
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[0] != cfg.n_bins:
        raise ShapeMismatch(
            f"spectrogram must be [{cfg.n_bins} x n_f], got {spec.shape}"
        )
    n_f = spec.shape[1]
    win = _hann_periodic(cfg.frame_length)
    frames = np.fft.irfft(spec.T, n=cfg.fft_size, axis=1)[:, :cfg.frame_length]
    total = cfg.frame_length + (n_f - 1) * cfg.frame_shift
    num = np.zeros(total)
    den = np.zeros(total)
    for t in range(n_f):
        s = t * cfg.frame_shift
        num[s:s + cfg.frame_length] += win * frames[t]
        den[s:s + cfg.frame_length] += win * win
    out = np.where(den > 1e-12, num / np.maximum(den, 1e-12), 0.0)
    if length is not None:
        out = out[:length] if out.size >= length else np.pad(out, (0, length - out.size))
    return out


def mel_filterbank(n_mels: int = 128, fft_size: int = 1024,
                   sample_rate: int = DEFAULT_SAMPLE_RATE,
                   f_min: float = 0.0, f_max: float = 8000.0) -> MelFilterbank:
    """Triangular filters with peaks equally spaced on the mel scale."""
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if not (0.0 <= f_min < f_max <= sample_rate / 2.0):
        raise BadFrequencyRange(
            f"need 0 <= f_min < f_max <= nyquist, got [{f_min}, {f_max}] "
            f"at sr={sample_rate}"
        )
    mel_pts = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_hz = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)
    lo, center, hi = hz_pts[:-2], hz_pts[1:-1], hz_pts[2:]
    up = (bin_hz[None, :] - lo[:, None]) / np.maximum(center - lo, 1e-12)[:, None]
    down = (hi[:, None] - bin_hz[None, :]) / np.maximum(hi - center, 1e-12)[:, None]
    weights = np.maximum(0.0, np.minimum(up, down))
    return MelFilterbank(weights=weights, f_min=f_min, f_max=f_max,
                         centers_hz=center.copy())


def melspectrogram(clip: AudioClip, cfg: StftConfig = StftConfig(),
                   fb: MelFilterbank | None = None,
                   floor: float = LOG_FLOOR) -> MelSpectrogram:
    """ln(max(fb @ |stft|, floor)) over amplitude (not power) magnitudes."""
    if floor <= 0:
        raise ValueError(f"floor must be positive, got {floor}")
    if fb is None:
        fb = mel_filterbank(fft_size=cfg.fft_size, sample_rate=clip.sample_rate)
    mag = np.abs(stft(clip, cfg))
    return MelSpectrogram(np.log(np.maximum(fb.weights @ mag, floor)))


def zscore_normalize(mel: MelSpectrogram) -> MelSpectrogram:
    """Zero-mean unit-variance over all entries (population std); constant
    input maps to all zeros instead of dividing by zero."""
    v = mel.values
    if v.max() == v.min():  # exact constancy; std() alone picks up fp noise
        return MelSpectrogram(np.zeros_like(v))
    return MelSpectrogram((v - v.mean()) / v.std())


def mel_to_linear(mel: MelSpectrogram, fb: MelFilterbank) -> np.ndarray:
    """Approximate linear magnitudes: pinv(weights) @ exp(values), clamped
    to be non-negative."""
    if mel.n_mels != fb.weights.shape[0]:
        raise ShapeMismatch(
            f"mel has {mel.n_mels} bands but filterbank has {fb.weights.shape[0]}"
        )
    inv = np.linalg.pinv(fb.weights)
    return np.maximum(inv @ np.exp(mel.values), 0.0)


def griffin_lim(mag: np.ndarray, cfg: StftConfig = StftConfig(),
                iterations: int = 60, seed: int = 0) -> AudioClip:
    """Phase reconstruction from a magnitude spectrogram; returns the waveform
    of the final iteration. Deterministic per seed."""
    clip, _ = griffin_lim_trace(mag, cfg, iterations, seed)
    return clip


def griffin_lim_trace(mag: np.ndarray, cfg: StftConfig = StftConfig(),
                      iterations: int = 60, seed: int = 0,
                      sample_rate: int = DEFAULT_SAMPLE_RATE
                      ) -> tuple[AudioClip, np.ndarray]:
    """As griffin_lim, also returning the per-iteration spectral distance
    || |stft(x_k)| - mag ||_F, which is non-increasing because istft is the
    least-squares inverse of stft."""
    mag = np.asarray(mag, dtype=np.float64)
    if mag.ndim != 2 or mag.shape[0] != cfg.n_bins:
        raise ShapeMismatch(f"magnitudes must be [{cfg.n_bins} x n_f], got {mag.shape}")
    if not np.isfinite(mag).all():
        raise NonFiniteInput("magnitudes contain NaN or Inf")
    if (mag < 0).any():
        raise BadMagnitude("magnitudes must be non-negative")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    rng = np.random.default_rng(seed)
    phase = rng.uniform(-np.pi, np.pi, size=mag.shape)
    distances = np.empty(iterations)
    x = None
    for k in range(iterations):
        x = istft(mag * np.exp(1j * phase), cfg)
        spec = stft(AudioClip(x, sample_rate), cfg)
        distances[k] = np.linalg.norm(np.abs(spec) - mag)
        phase = np.angle(spec)
    return AudioClip(x, sample_rate), distances


# -- file formats ---------------------------------------------------------------


def read_wav(path) -> AudioClip:
    """Read RIFF WAVE, PCM 16-bit mono at 16 kHz; anything else is rejected.

    Accepts a filesystem path or a binary file-like object.
    """
    filelike = hasattr(path, "read")
    name = getattr(path, "name", "<stream>") if filelike else path
    try:
        with wave.open(path if filelike else str(path), "rb") as f:
            nch, width, rate = f.getnchannels(), f.getsampwidth(), f.getframerate()
            if nch != 1:
                raise IoError(f"{name}: expected mono audio, got {nch} channels")
            if width != 2:
                raise IoError(f"{name}: expected 16-bit PCM, got {8 * width}-bit")
            if rate != DEFAULT_SAMPLE_RATE:
                raise IoError(f"{name}: expected {DEFAULT_SAMPLE_RATE} Hz, got {rate}")
            raw = f.readframes(f.getnframes())
    except wave.Error as e:
        raise IoError(f"{name}: not a PCM WAVE file ({e})") from e
    except (OSError, EOFError) as e:
        raise IoError(f"{name}: {e}") from e
    # symmetric 32767 scaling so write -> read roundtrips within half an LSB
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return AudioClip(np.clip(samples, -1.0, 1.0), DEFAULT_SAMPLE_RATE)


def write_wav(path, clip: AudioClip):
    """Write PCM 16-bit mono; `path` may be a path or a binary file object."""
    pcm = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.round(pcm * 32767.0).astype("<i2")
    with wave.open(path if hasattr(path, "write") else str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(clip.sample_rate)
        f.writeframes(pcm.tobytes())


def mel_to_bytes(mel: MelSpectrogram) -> bytes:
    """Serialize: little-endian {magic "MELS", version=1, n_mels, n_f} header
    then row-major float32 values."""
    header = _MELS_HEADER.pack(MELS_MAGIC, MELS_VERSION, mel.n_mels, mel.n_f)
    return header + np.ascontiguousarray(mel.values, dtype="<f4").tobytes()


def mel_from_bytes(buf: bytes) -> MelSpectrogram:
    if len(buf) < _MELS_HEADER.size:
        raise ParseError(f"mel blob too short: {len(buf)} bytes")
    magic, version, n_mels, n_f = _MELS_HEADER.unpack_from(buf)
    if magic != MELS_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MELS_MAGIC!r}")
    if version != MELS_VERSION:
        raise ParseError(f"unsupported mel blob version {version}")
    expected = _MELS_HEADER.size + 4 * n_mels * n_f
    if len(buf) != expected:
        raise ParseError(f"mel blob length {len(buf)} != expected {expected}")
    if n_mels == 0 or n_f == 0:
        raise ParseError(f"empty mel blob: {n_mels} x {n_f}")
    values = np.frombuffer(buf, dtype="<f4", offset=_MELS_HEADER.size)
    values = values.reshape(n_mels, n_f).astype(np.float64)
    if not np.isfinite(values).all():
        raise ParseError("mel blob contains NaN or Inf")
    return MelSpectrogram(values)
