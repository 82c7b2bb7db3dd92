"""Evaluation protocol: LOSO cross-validation, word/speaker metrics with
Wilson intervals, per-dimension latent-vs-intelligibility correlation, and
MUSHRA listening-test aggregation."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import PreparedUtterance, collate
from .errors import (
    DegenerateInput,
    EmptySequence,
    IncompleteMushraSet,
    InsufficientSpeakers,
    IoError,
    ParseError,
)
from .model import ModelConfig, MultiTaskModel
from .stats import pearson, wilson_ci
from .train import TrainConfig, train

MUSHRA_CONDITIONS = ("orig", "d1=-0.5", "d1=0.0", "d1=0.5", "d1=1.0", "d1=1.5")


# -- prediction records -------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    word: str
    speaker: str
    p: float           # predicted probability of dysarthric speech
    y: int             # ground-truth label

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParseError(f"p must lie in [0, 1], got {self.p}")
        if self.y not in (0, 1):
            raise ParseError(f"y must be 0 or 1, got {self.y}")


PREDICTION_COLUMNS = ("word", "speaker", "p", "y")


def write_predictions(path, predictions) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("\t".join(PREDICTION_COLUMNS) + "\n")
        for pr in predictions:
            fh.write(f"{pr.word}\t{pr.speaker}\t{pr.p!r}\t{pr.y}\n")
    return path


def read_predictions(path) -> list[Prediction]:
    path = Path(path)
    if not path.exists():
        raise IoError(f"predictions file not found: {path}")
    out = []
    with path.open() as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != PREDICTION_COLUMNS:
            raise ParseError(f"{path}: bad header {header}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 columns")
            try:
                out.append(Prediction(parts[0], parts[1],
                                      float(parts[2]), int(parts[3])))
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
    return out


# -- LOSO ---------------------------------------------------------------------


@dataclass(frozen=True)
class LosoFold:
    held_out_speaker: str
    train_records: tuple
    test_records: tuple


def loso_folds(records) -> list[LosoFold]:
    """One fold per speaker; the held-out speaker appears only in test."""
    records = list(records)
    speakers = sorted({_speaker_of(r) for r in records})
    if len(speakers) < 2:
        raise InsufficientSpeakers(
            f"LOSO needs >= 2 speakers, got {len(speakers)}")
    folds = []
    for spk in speakers:
        test = tuple(r for r in records if _speaker_of(r) == spk)
        rest = tuple(r for r in records if _speaker_of(r) != spk)
        folds.append(LosoFold(spk, rest, test))
    return folds


def _speaker_of(item) -> str:
    if hasattr(item, "speaker_id"):
        return item.speaker_id
    return item.record.speaker_id


# -- thresholded metrics ------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    level: str
    accuracy: float
    precision: float | None    # None when no positive predictions exist
    recall: float | None       # None when no positive labels exist
    ci95: tuple
    n: int
    correct: int

    def to_dict(self) -> dict:
        return {"level": self.level, "accuracy": self.accuracy,
                "precision": self.precision, "recall": self.recall,
                "ci95": list(self.ci95), "n": self.n, "correct": self.correct}


def _metrics(pairs, level: str, threshold: float) -> MetricsReport:
    preds = np.array([p >= threshold for p, _ in pairs])
    ys = np.array([y == 1 for _, y in pairs])
    correct = int((preds == ys).sum())
    n = len(pairs)
    tp = int((preds & ys).sum())
    fp = int((preds & ~ys).sum())
    fn = int((~preds & ys).sum())
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    return MetricsReport(level=level, accuracy=correct / n,
                         precision=precision, recall=recall,
                         ci95=wilson_ci(correct, n), n=n, correct=correct)


def word_level_metrics(predictions, threshold: float = 0.5) -> MetricsReport:
    """Every utterance counted independently; ties at the threshold go
    positive."""
    predictions = list(predictions)
    if not predictions:
        raise EmptySequence("no predictions to score")
    return _metrics([(pr.p, pr.y) for pr in predictions], "word", threshold)


def speaker_level_metrics(predictions, threshold: float = 0.5) -> MetricsReport:
    """Average p over each speaker's words, then threshold per speaker."""
    predictions = list(predictions)
    if not predictions:
        raise EmptySequence("no predictions to score")
    by_speaker: dict[str, list] = OrderedDict()
    labels: dict[str, int] = {}
    for pr in predictions:
        by_speaker.setdefault(pr.speaker, []).append(pr.p)
        if labels.setdefault(pr.speaker, pr.y) != pr.y:
            raise ParseError(
                f"speaker {pr.speaker} carries inconsistent labels")
    pairs = [(float(np.mean(ps)), labels[spk])
             for spk, ps in by_speaker.items()]
    return _metrics(pairs, "speaker", threshold)


# -- batched inference --------------------------------------------------------


def predict_probabilities(model: MultiTaskModel, items,
                          batch_size: int = 50) -> np.ndarray:
    """Eval-mode p(dysarthric) per item, in the given order."""
    items = list(items)
    out = np.empty(len(items))
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        batch = collate(chunk)
        with ad.no_grad():
            latent = model.encode_audio_graph(
                Tensor(batch.mel.astype(model.dtype)), batch.frame_mask)
            probs = model.detect_graph(latent)
        out[start:start + len(chunk)] = probs.data[:, 1]
    return out


def encode_latents(model: MultiTaskModel, items,
                   batch_size: int = 50) -> np.ndarray:
    """Eval-mode latent [n x 2] per item, in the given order."""
    items = list(items)
    out = np.empty((len(items), 2))
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        batch = collate(chunk)
        with ad.no_grad():
            latent = model.encode_audio_graph(
                Tensor(batch.mel.astype(model.dtype)), batch.frame_mask)
        out[start:start + len(chunk)] = latent.data
    return out


# -- LOSO driver --------------------------------------------------------------


@dataclass(frozen=True)
class LatentSample:
    speaker: str
    word: str
    l1: float
    l2: float
    intelligibility: float | None
    y: int


@dataclass
class LosoResult:
    predictions: list
    latent_samples: list
    fold_reports: list = field(default_factory=list)

    def word_metrics(self, threshold: float = 0.5) -> MetricsReport:
        return word_level_metrics(self.predictions, threshold)

    def speaker_metrics(self, threshold: float = 0.5) -> MetricsReport:
        return speaker_level_metrics(self.predictions, threshold)


def run_loso(items, model_cfg: ModelConfig, train_cfg: TrainConfig,
             progress=None) -> LosoResult:
    """Train one model per held-out speaker and score that speaker's words.

    Latents are likewise taken from the fold model that never saw the
    speaker, matching the cross-validated protocol.
    """
    items = list(items)
    result = LosoResult(predictions=[], latent_samples=[])
    for k, fold in enumerate(loso_folds(items)):
        params, report = train(fold.train_records, model_cfg, train_cfg)
        model = MultiTaskModel(model_cfg, params, seed=train_cfg.seed)
        test = list(fold.test_records)
        ps = predict_probabilities(model, test)
        latents = encode_latents(model, test)
        for it, p, (l1, l2) in zip(test, ps, latents):
            rec = it.record
            result.predictions.append(Prediction(
                word=rec.transcript, speaker=rec.speaker_id,
                p=float(np.clip(p, 0.0, 1.0)), y=it.label))
            result.latent_samples.append(LatentSample(
                speaker=rec.speaker_id, word=rec.transcript,
                l1=float(l1), l2=float(l2),
                intelligibility=rec.intelligibility, y=it.label))
        result.fold_reports.append(report)
        if progress is not None:
            progress(k, fold.held_out_speaker, report)
    return result


# -- latent correlation -------------------------------------------------------


@dataclass(frozen=True)
class DimensionCorrelation:
    dimension: int              # 1-based, matching the latent sweep controls
    r: float | None
    p: float | None
    degenerate: bool = False


@dataclass
class CorrelationReport:
    rows: list
    scatter: list               # per-word LatentSample records

    def max_abs_r(self) -> float:
        vals = [abs(row.r) for row in self.rows if row.r is not None]
        if not vals:
            raise DegenerateInput("no dimension produced a correlation")
        return max(vals)

    def to_dict(self) -> dict:
        return {
            "rows": [vars(r) for r in self.rows],
            "scatter": [vars(s) for s in self.scatter],
        }


def correlate_latents(samples) -> CorrelationReport:
    """Per-speaker mean latent vs intelligibility, Pearson per dimension."""
    samples = list(samples)
    if not samples:
        raise EmptySequence("no latent samples")
    if any(s.intelligibility is None for s in samples):
        raise DegenerateInput("every sample needs an intelligibility score")
    by_speaker: dict[str, list] = OrderedDict()
    for s in samples:
        by_speaker.setdefault(s.speaker, []).append(s)
    means = np.array([[np.mean([s.l1 for s in group]),
                       np.mean([s.l2 for s in group]),
                       np.mean([s.intelligibility for s in group])]
                      for group in by_speaker.values()])
    rows = []
    for dim in (1, 2):
        try:
            r, p = pearson(means[:, dim - 1], means[:, 2])
            rows.append(DimensionCorrelation(dim, r, p))
        except DegenerateInput:
            rows.append(DimensionCorrelation(dim, None, None, degenerate=True))
    return CorrelationReport(rows=rows, scatter=samples)


def latent_correlation_report(model: MultiTaskModel, items) -> CorrelationReport:
    """Correlation table for one trained model over prepared utterances."""
    items = list(items)
    if not items:
        raise EmptySequence("no utterances")
    latents = encode_latents(model, items)
    samples = [LatentSample(speaker=it.record.speaker_id,
                            word=it.record.transcript,
                            l1=float(l1), l2=float(l2),
                            intelligibility=it.record.intelligibility,
                            y=it.label)
               for it, (l1, l2) in zip(items, latents)]
    return correlate_latents(samples)


# -- MUSHRA -------------------------------------------------------------------


@dataclass(frozen=True)
class MushraItem:
    word: str
    condition: str
    listener_id: str
    score: float

    def __post_init__(self):
        if self.condition not in MUSHRA_CONDITIONS:
            raise ParseError(f"unknown condition {self.condition!r}")
        if not 0.0 <= self.score <= 100.0:
            raise ParseError(f"score must lie in [0, 100], got {self.score}")


@dataclass(frozen=True)
class MushraSummary:
    condition: str
    median: float
    mean_rank: float     # rank 1 = highest score; ties share average rank
    n: int


def mushra_aggregate(items) -> list[MushraSummary]:
    """Medians and average rank order per condition.

    Every (word, listener) group must contain each condition exactly once;
    within a group ranks run 1 (best score) to 6 with ties averaged, so each
    group's ranks sum to 21.
    """
    items = list(items)
    if not items:
        raise EmptySequence("no MUSHRA items")
    groups: dict[tuple, dict] = OrderedDict()
    for it in items:
        key = (it.word, it.listener_id)
        group = groups.setdefault(key, {})
        if it.condition in group:
            raise IncompleteMushraSet(
                f"duplicate condition {it.condition!r} for word={it.word!r} "
                f"listener={it.listener_id!r}")
        group[it.condition] = it.score
    for key, group in groups.items():
        missing = [c for c in MUSHRA_CONDITIONS if c not in group]
        if missing:
            raise IncompleteMushraSet(
                f"word={key[0]!r} listener={key[1]!r} missing {missing}")
    scores: dict[str, list] = {c: [] for c in MUSHRA_CONDITIONS}
    ranks: dict[str, list] = {c: [] for c in MUSHRA_CONDITIONS}
    for group in groups.values():
        vals = np.array([group[c] for c in MUSHRA_CONDITIONS])
        order = (-vals).argsort(kind="stable")
        rank = np.empty(len(vals))
        sorted_vals = vals[order]
        i = 0
        while i < len(vals):
            j = i
            while j + 1 < len(vals) and sorted_vals[j + 1] == sorted_vals[i]:
                j += 1
            rank[order[i:j + 1]] = (i + j) / 2.0 + 1.0
            i = j + 1
        for c, v, rk in zip(MUSHRA_CONDITIONS, vals, rank):
            scores[c].append(float(v))
            ranks[c].append(float(rk))
    return [MushraSummary(condition=c,
                          median=float(np.median(scores[c])),
                          mean_rank=float(np.mean(ranks[c])),
                          n=len(scores[c]))
            for c in MUSHRA_CONDITIONS]


MUSHRA_COLUMNS = ("word", "condition", "listener", "score")


def write_mushra(path, items) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("\t".join(MUSHRA_COLUMNS) + "\n")
        for it in items:
            fh.write(f"{it.word}\t{it.condition}\t{it.listener_id}\t"
                     f"{it.score!r}\n")
    return path


def read_mushra(path) -> list[MushraItem]:
    path = Path(path)
    if not path.exists():
        raise IoError(f"MUSHRA file not found: {path}")
    out = []
    with path.open() as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != MUSHRA_COLUMNS:
            raise ParseError(f"{path}: bad header {header}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 columns")
            try:
                out.append(MushraItem(parts[0], parts[1], parts[2],
                                      float(parts[3])))
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
    return out


# -- plain-text table ---------------------------------------------------------


def format_metrics_table(reports) -> str:
    """Accuracy table with one row per metrics report."""
    lines = [f"{'level':<10}{'accuracy':>10}{'ci95':>18}{'precision':>11}"
             f"{'recall':>8}"]
    for rep in reports:
        ci = f"({rep.ci95[0]:.3f}-{rep.ci95[1]:.3f})"
        prec = "n/a" if rep.precision is None else f"{rep.precision:.3f}"
        rec = "n/a" if rep.recall is None else f"{rep.recall:.3f}"
        lines.append(f"{rep.level:<10}{rep.accuracy:>10.3f}{ci:>18}"
                     f"{prec:>11}{rec:>8}")
    return "\n".join(lines)
