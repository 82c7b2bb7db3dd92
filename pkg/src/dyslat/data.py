"""Corpus handling: manifest ingestion, transcript one-hot encoding, batching
helpers, and a synthetic dysarthria-analog corpus generator.

The synthetic generator exists because the real corpus cannot be bundled; a
severity knob s in [0,1] drives the acoustic analogs of dysarthric speech:
duration stretched by (1+s), multiplicative amplitude jitter with depth
proportional to s, pitch contour flattened proportionally to s, and stuttered
character repetitions squeezed into the word's duration with probability
proportional to s. Intelligibility is recorded as 100*(1-s), which gives the
correlation analysis a known ground truth.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dsp import (
    AudioClip,
    MelSpectrogram,
    StftConfig,
    mel_filterbank,
    melspectrogram,
    write_wav,
    zscore_normalize,
)
from .errors import EmptySequence, IoError, ParseError

DEFAULT_ALPHABET = "abcdefghijklmnopqrstuvwxyz "   # 27 symbols, space last

MANIFEST_COLUMNS = ("audio_path", "transcript", "speaker_id", "dysarthric",
                    "intelligibility", "repetition")

# command-style vocabulary; every word is >= 5 characters so even an
# unstretched utterance clears the model's minimum frame count
DEFAULT_WORDS = (
    "backspace", "delete", "enter", "escape", "control", "command",
    "paragraph", "sentence", "question", "answer", "yellow", "orange",
    "purple", "window", "keyboard", "monitor", "paper", "water", "music",
    "morning",
)


@dataclass
class UtteranceRecord:
    audio_path: str
    transcript: str
    speaker_id: str
    dysarthric: int                       # label y in {0,1}
    intelligibility: float | None = None  # percentage in [0,100]
    repetition: int = 1

    def __post_init__(self):
        if not self.transcript.strip():
            raise ParseError("transcript must be non-empty")
        if self.dysarthric not in (0, 1):
            raise ParseError(f"dysarthric must be 0 or 1, got {self.dysarthric}")
        if self.intelligibility is not None and not (0.0 <= self.intelligibility <= 100.0):
            raise ParseError(
                f"intelligibility must be in [0,100], got {self.intelligibility}")
        if self.repetition < 1:
            raise ParseError(f"repetition must be >= 1, got {self.repetition}")


@dataclass
class TextOneHot:
    """One-hot transcript matrix [n_c x n_t]; every column has exactly one 1."""

    matrix: np.ndarray
    text: str  # the normalized text the matrix encodes

    @property
    def n_c(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_t(self) -> int:
        return self.matrix.shape[1]


def normalize_text(text: str, alphabet: str = DEFAULT_ALPHABET) -> str:
    """Lowercase, map out-of-alphabet characters to space, collapse runs of
    spaces, strip."""
    chars = [c if c in alphabet else " " for c in text.lower()]
    return " ".join("".join(chars).split())


def encode_transcript(text: str, alphabet: str = DEFAULT_ALPHABET) -> TextOneHot:
    norm = normalize_text(text, alphabet)
    if not norm:
        raise EmptySequence(f"transcript {text!r} is empty after normalization")
    index = {c: i for i, c in enumerate(alphabet)}
    mat = np.zeros((len(alphabet), len(norm)))
    for t, c in enumerate(norm):
        mat[index[c], t] = 1.0
    return TextOneHot(matrix=mat, text=norm)


def decode_onehot(onehot: TextOneHot, alphabet: str = DEFAULT_ALPHABET) -> str:
    return "".join(alphabet[i] for i in onehot.matrix.argmax(axis=0))


# -- manifest I/O ---------------------------------------------------------------


def load_manifest(path) -> list[UtteranceRecord]:
    path = Path(path)
    if not path.exists():
        raise IoError(f"manifest not found: {path}")
    records = []
    with path.open(encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty manifest, expected a header row")
        if tuple(header) != MANIFEST_COLUMNS:
            raise ParseError(
                f"{path}: bad header {header!r}, expected {list(MANIFEST_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields, "
                    f"got {len(row)}")
            audio_path, transcript, speaker, dys_s, intel_s, rep_s = row
            try:
                if dys_s not in ("0", "1"):
                    raise ParseError(f"dysarthric must be 0 or 1, got {dys_s!r}")
                intel = float(intel_s) if intel_s.strip() else None
                try:
                    rep = int(rep_s)
                except ValueError:
                    raise ParseError(f"repetition must be an integer, got {rep_s!r}")
                rec = UtteranceRecord(
                    audio_path=audio_path, transcript=transcript,
                    speaker_id=speaker, dysarthric=int(dys_s),
                    intelligibility=intel, repetition=rep)
            except ParseError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
            records.append(rec)
    return records


def write_manifest(path, records: Sequence[UtteranceRecord]):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            intel = "" if r.intelligibility is None else f"{r.intelligibility:g}"
            writer.writerow([r.audio_path, r.transcript, r.speaker_id,
                             r.dysarthric, intel, r.repetition])


# -- synthetic corpus -------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticCorpusConfig:
    n_speakers_per_class: int = 4
    words: tuple = DEFAULT_WORDS
    severities: tuple = (0.3, 0.5, 0.7, 0.9)  # one per dysarthric speaker
    repetitions: int = 3
    seed: int = 0
    char_duration: float = 0.11  # seconds per character at severity 0

    def __post_init__(self):
        if not self.words:
            raise ValueError("need at least one word")
        if len(self.severities) != self.n_speakers_per_class:
            raise ValueError("need one severity per dysarthric speaker")
        if any(not (0.0 <= s <= 1.0) for s in self.severities):
            raise ValueError("severities must lie in [0,1]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


# fixed per-character formant targets (F1, F2 in Hz), shared by every corpus so
# a word sounds like itself across speakers
_FORMANT_TABLE = {
    c: (300.0 + 480.0 * lo, 2350.0 - 1400.0 * hi)
    for c, lo, hi in zip(
        "abcdefghijklmnopqrstuvwxyz",
        np.random.default_rng(0xC0FFEE).uniform(0, 1, 26),
        np.random.default_rng(0xBEEF).uniform(0, 1, 26),
    )
}

_N_HARMONICS = 12


def _speaker_voice(seed: int, class_id: int, idx: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence((seed, class_id, idx)))
    return {
        "base_pitch": rng.uniform(109.0, 121.0),
        "formant_shift": rng.uniform(0.96, 1.04),
        "brightness": rng.uniform(0.85, 1.15),
    }


def _synth_utterance(word: str, severity: float, voice: dict,
                     rng: np.random.Generator, sample_rate: int,
                     char_duration: float) -> np.ndarray:
    chars = list(word)
    duration = len(chars) * char_duration * (1.0 + severity)  # exact stretch law

    # stutter: repeat characters with probability ~ severity, then squeeze the
    # expanded sequence back into the same total duration
    segments = []
    for c in chars:
        segments.append(c)
        if c != " " and rng.random() < 0.45 * severity:
            segments.append(c)
    n_samples = int(round(duration * sample_rate))
    seg_len = n_samples // len(segments)
    bounds = [i * seg_len for i in range(len(segments))] + [n_samples]

    # pitch contour: intonation + declination, flattened as severity rises
    t = np.arange(n_samples) / sample_rate
    depth = 0.16 * (1.0 - severity)
    contour = 0.6 * np.sin(2 * np.pi * 1.7 * t / duration) - 0.5 * (t / duration)
    f0 = voice["base_pitch"] * (1.0 + depth * contour)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate

    x = np.zeros(n_samples)
    ramp = max(8, int(0.012 * sample_rate))
    # imprecise articulation: formant peaks widen (smear) with severity
    bw1 = 130.0 * (1.0 + 2.2 * severity)
    bw2 = 180.0 * (1.0 + 2.2 * severity)
    for (c, s0, s1) in zip(segments, bounds[:-1], bounds[1:]):
        if s1 <= s0 or c == " ":
            continue
        f1c, f2c = _FORMANT_TABLE[c]
        f1c *= voice["formant_shift"]
        f2c *= voice["formant_shift"]
        seg = np.zeros(s1 - s0)
        for h in range(1, _N_HARMONICS + 1):
            fh = h * f0[s0:s1]
            gain = (np.exp(-0.5 * ((fh - f1c) / bw1) ** 2)
                    + 0.8 * voice["brightness"] * np.exp(-0.5 * ((fh - f2c) / bw2) ** 2)
                    + 0.04)
            gain = np.where(fh < 7600.0, gain, 0.0)
            seg += gain * np.sin(h * phase[s0:s1])
        # amplitude jitter: piecewise knots with depth ~ severity
        n_knots = max(2, int((s1 - s0) / (0.035 * sample_rate)) + 1)
        knots = 1.0 + rng.uniform(-0.5 * severity, 0.5 * severity, n_knots)
        envelope = np.interp(np.linspace(0, n_knots - 1, s1 - s0),
                             np.arange(n_knots), knots)
        r = min(ramp, (s1 - s0) // 2)
        if r > 0:
            edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(r) / r)
            envelope[:r] *= edge
            envelope[-r:] *= edge[::-1]
        x[s0:s1] += seg * envelope

    if severity > 0:
        # vocal tremor: slow amplitude modulation of the voiced signal
        trem_phase = rng.uniform(0.0, 2.0 * np.pi)
        x *= 1.0 + 0.4 * severity * np.sin(2 * np.pi * 4.5 * t + trem_phase)
        # breathiness: speech-band noise floor, SNR falling with severity
        breath = rng.normal(0.0, 1.0, n_samples)
        breath = np.convolve(breath, np.ones(4) / 4.0, mode="same")
        rms = np.sqrt(np.mean(x ** 2))
        if rms > 0:
            breath_rms = max(np.sqrt(np.mean(breath ** 2)), 1e-12)
            x += 0.55 * severity * rms * breath / breath_rms

    peak = np.abs(x).max()
    if peak > 0:
        x *= rng.uniform(0.38, 0.45) / peak
    return x


def generate_synthetic_corpus(cfg: SyntheticCorpusConfig
                              ) -> list[tuple[AudioClip, UtteranceRecord]]:
    """Deterministic synthetic corpus: for each class (control, dysarthric),
    n speakers x words x repetitions. Control severity is 0; dysarthric
    speaker i uses cfg.severities[i]. Labels mark class membership, so an
    all-zero severity config yields two distributionally identical classes."""
    out = []
    sr = 16000
    for class_id, prefix in ((0, "ctl"), (1, "dys")):
        for i in range(cfg.n_speakers_per_class):
            severity = 0.0 if class_id == 0 else float(cfg.severities[i])
            speaker = f"{prefix}{i + 1:02d}"
            voice = _speaker_voice(cfg.seed, class_id, i)
            for w_idx, word in enumerate(cfg.words):
                for rep in range(1, cfg.repetitions + 1):
                    rng = np.random.default_rng(
                        np.random.SeedSequence((cfg.seed, class_id, i, w_idx, rep)))
                    samples = _synth_utterance(
                        word, severity, voice, rng, sr, cfg.char_duration)
                    rec = UtteranceRecord(
                        audio_path=f"{speaker}/{word}_{rep}.wav",
                        transcript=word,
                        speaker_id=speaker,
                        dysarthric=class_id,
                        intelligibility=100.0 * (1.0 - severity),
                        repetition=rep,
                    )
                    out.append((AudioClip(samples, sr), rec))
    return out


def save_synthetic_corpus(cfg: SyntheticCorpusConfig, out_dir) -> Path:
    """Emit the corpus as 16 kHz PCM16 WAVs plus a manifest; returns the
    manifest path."""
    out_dir = Path(out_dir)
    records = []
    for clip, rec in generate_synthetic_corpus(cfg):
        wav_path = out_dir / rec.audio_path
        wav_path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(wav_path, clip)
        records.append(rec)
    manifest = out_dir / "manifest.tsv"
    write_manifest(manifest, records)
    return manifest


# -- feature preparation and batching ---------------------------------------------


@dataclass
class PreparedUtterance:
    """Model-ready features for one utterance."""

    mel: np.ndarray        # [n_mels x n_f], z-scored log-mel
    onehot: np.ndarray     # [n_c x n_t]
    label: int
    record: UtteranceRecord


@dataclass
class Batch:
    """Zero-padded batch with masks so padding never leaks into the loss."""

    mel: np.ndarray         # [B x n_mels x max_nf]
    frame_mask: np.ndarray  # [B x max_nf], 1 on real frames
    text: np.ndarray        # [B x n_c x max_nt]
    text_mask: np.ndarray   # [B x max_nt]
    labels: np.ndarray      # [B]
    items: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.mel.shape[0]


def prepare_utterance(clip: AudioClip, record: UtteranceRecord,
                      cfg: StftConfig = StftConfig(), fb=None,
                      n_mels: int = 128,
                      alphabet: str = DEFAULT_ALPHABET) -> PreparedUtterance:
    if fb is None:
        fb = mel_filterbank(n_mels=n_mels, fft_size=cfg.fft_size,
                            sample_rate=clip.sample_rate)
    mel = zscore_normalize(melspectrogram(clip, cfg, fb))
    onehot = encode_transcript(record.transcript, alphabet)
    return PreparedUtterance(mel=mel.values, onehot=onehot.matrix,
                             label=record.dysarthric, record=record)


def prepare_dataset(pairs, cfg: StftConfig = StftConfig(), n_mels: int = 128,
                    alphabet: str = DEFAULT_ALPHABET) -> list[PreparedUtterance]:
    fb = mel_filterbank(n_mels=n_mels, fft_size=cfg.fft_size)
    return [prepare_utterance(clip, rec, cfg, fb, n_mels, alphabet)
            for clip, rec in pairs]


def load_dataset(manifest_path, audio_root=None,
                 cfg: StftConfig = StftConfig(), n_mels: int = 128,
                 alphabet: str = DEFAULT_ALPHABET) -> list[PreparedUtterance]:
    """Read a manifest and its WAVs into model-ready features."""
    from .dsp import read_wav

    manifest_path = Path(manifest_path)
    root = Path(audio_root) if audio_root is not None else manifest_path.parent
    records = load_manifest(manifest_path)
    pairs = [(read_wav(root / r.audio_path), r) for r in records]
    return prepare_dataset(pairs, cfg, n_mels, alphabet)


def make_batches(items: Sequence, batch_size: int, seed: int = 0,
                 epoch: int = 0) -> list[list]:
    """Seeded per-epoch shuffle, then partition; the final short batch is kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng(
        np.random.SeedSequence((seed, epoch))).permutation(len(items))
    shuffled = [items[i] for i in order]
    return [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]


def collate(items: Sequence[PreparedUtterance]) -> Batch:
    """Zero-pad mels and one-hots to the batch maxima and carry masks."""
    if not items:
        raise EmptySequence("cannot collate an empty batch")
    b = len(items)
    n_mels = items[0].mel.shape[0]
    n_c = items[0].onehot.shape[0]
    max_nf = max(it.mel.shape[1] for it in items)
    max_nt = max(it.onehot.shape[1] for it in items)
    mel = np.zeros((b, n_mels, max_nf))
    frame_mask = np.zeros((b, max_nf))
    text = np.zeros((b, n_c, max_nt))
    text_mask = np.zeros((b, max_nt))
    labels = np.zeros(b)
    for i, it in enumerate(items):
        nf, nt = it.mel.shape[1], it.onehot.shape[1]
        mel[i, :, :nf] = it.mel
        frame_mask[i, :nf] = 1.0
        text[i, :, :nt] = it.onehot
        text_mask[i, :nt] = 1.0
        labels[i] = it.label
    return Batch(mel=mel, frame_mask=frame_mask, text=text,
                 text_mask=text_mask, labels=labels, items=list(items))
