"""CLI and HTTP facade.

Commands: train, eval-loso, detect, reconstruct, sweep, serve. The HTTP API
(/analyze, /reconstruct, /latent-map) backs the interactive latent explorer;
all responses are JSON with snake_case fields and errors shaped as
{code, message}. Exit codes: 0 success, 1 user error, 2 internal error.
"""

import argparse
import base64
import io
import json
import math
import os
import sys
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    SyntheticCorpusConfig,
    encode_transcript,
    generate_synthetic_corpus,
    load_dataset,
    normalize_text,
    prepare_dataset,
)
from .dsp import (
    StftConfig,
    griffin_lim,
    mel_filterbank,
    mel_to_bytes,
    mel_to_linear,
    melspectrogram,
    read_wav,
    write_wav,
    zscore_normalize,
)
from .errors import DegenerateInput, DyslatError, InputTooShort, IoError
from .evaluation import (
    correlate_latents,
    encode_latents,
    format_metrics_table,
    run_loso,
    write_predictions,
)
from .model import (
    ModelConfig,
    MultiTaskModel,
    config_hash,
    load_checkpoint,
    save_checkpoint,
)
from .train import TrainConfig, train

SWEEP_DIM1 = (-0.5, 0.0, 0.5, 1.0, 1.5)
SWEEP_DIM2 = -0.1
MAX_TARGET_FRAMES = 2000
CHECKPOINT_ENV = "DYSLAT_CHECKPOINT"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    checkpoint: str | None = None
    max_concurrent_reconstructions: int = 2
    griffin_lim_iterations: int = 60

    def __post_init__(self):
        if self.max_concurrent_reconstructions < 1:
            raise ValueError("max_concurrent_reconstructions must be >= 1")
        if self.griffin_lim_iterations < 1:
            raise ValueError("griffin_lim_iterations must be >= 1")


# -- latent map cache ---------------------------------------------------------


def build_latent_cache(model: MultiTaskModel, items) -> dict:
    """Scatter points plus per-speaker means for GET /latent-map."""
    items = list(items)
    latents = encode_latents(model, items)
    points = []
    for it, (l1, l2) in zip(items, latents):
        rec = it.record
        points.append({"speaker": rec.speaker_id, "word": rec.transcript,
                       "l1": float(l1), "l2": float(l2),
                       "label": int(it.label),
                       "intelligibility": rec.intelligibility})
    means = []
    for spk in sorted({p["speaker"] for p in points}):
        own = [p for p in points if p["speaker"] == spk]
        intels = [p["intelligibility"] for p in own
                  if p["intelligibility"] is not None]
        means.append({"speaker": spk,
                      "l1": float(np.mean([p["l1"] for p in own])),
                      "l2": float(np.mean([p["l2"] for p in own])),
                      "label": own[0]["label"],
                      "intelligibility": float(np.mean(intels)) if intels
                      else None})
    return {"points": points, "speaker_means": means}


# -- HTTP app -----------------------------------------------------------------


def create_app(model: MultiTaskModel, latent_cache: dict | None = None,
               max_concurrent: int = 2, gl_iters: int = 60):
    from fastapi import FastAPI, File, Form, HTTPException, Request, UploadFile
    from fastapi.exceptions import RequestValidationError
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    app = FastAPI(title="dyslat", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    stft_cfg = StftConfig()
    fb = mel_filterbank(n_mels=model.config.n_mels, fft_size=stft_cfg.fft_size)
    semaphore = threading.BoundedSemaphore(max_concurrent)
    app.state.semaphore = semaphore
    app.state.model = model

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        return JSONResponse(status_code=exc.status_code,
                            content={"code": exc.status_code,
                                     "message": str(exc.detail)})

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"code": 400, "message": str(exc.errors())})

    @app.get("/health")
    def health():
        return {"status": "ok", "config_hash": config_hash(model.config)}

    @app.post("/analyze")
    async def analyze(file: UploadFile = File(...),
                      transcript: str = Form(...)):
        if not normalize_text(transcript).strip():
            raise HTTPException(400, "transcript is empty")
        data = await file.read()
        try:
            clip = read_wav(io.BytesIO(data))
        except IoError as e:
            raise HTTPException(400, str(e)) from e
        if not semaphore.acquire(blocking=False):
            raise HTTPException(503, "server is at its concurrency cap")
        try:
            try:
                mel = zscore_normalize(melspectrogram(clip, stft_cfg, fb))
                latent = model.encode_audio(mel)
            except InputTooShort as e:
                raise HTTPException(422, str(e)) from e
            det = model.detect(latent)
            return {"p_dysarthric": det.p_dysarthric,
                    "latent": [latent.l1, latent.l2],
                    "n_frames": mel.n_f}
        finally:
            semaphore.release()

    class ReconstructRequest(BaseModel):
        transcript: str
        latent: list[float]
        target_frames: int
        want_audio: bool = False

    @app.post("/reconstruct")
    def reconstruct(req: ReconstructRequest):
        if len(req.latent) != 2 or not all(math.isfinite(v)
                                           for v in req.latent):
            raise HTTPException(400, "latent must be two finite numbers")
        if not 1 <= req.target_frames <= MAX_TARGET_FRAMES:
            raise HTTPException(
                400, f"target_frames must lie in [1, {MAX_TARGET_FRAMES}], "
                     f"got {req.target_frames}")
        if not normalize_text(req.transcript).strip():
            raise HTTPException(422, "transcript is empty")
        if not semaphore.acquire(blocking=False):
            raise HTTPException(503, "server is at its concurrency cap")
        try:
            onehot = encode_transcript(req.transcript)
            mel = model.reconstruct_with_latent(onehot, tuple(req.latent),
                                                req.target_frames)
            det = model.detect(np.array(req.latent))
            out = {"mel": base64.b64encode(mel_to_bytes(mel)).decode(),
                   "n_mels": mel.n_mels, "n_frames": mel.n_f,
                   "p_dysarthric": det.p_dysarthric}
            if req.want_audio:
                mag = mel_to_linear(mel, fb)
                clip = griffin_lim(mag, stft_cfg, iterations=gl_iters, seed=0)
                buf = io.BytesIO()
                write_wav(buf, clip)
                out["wav"] = base64.b64encode(buf.getvalue()).decode()
            return out
        finally:
            semaphore.release()

    @app.get("/latent-map")
    def latent_map():
        if latent_cache is None:
            raise HTTPException(404, "no latent map configured; start the "
                                     "server with a manifest or --synthetic")
        return latent_cache

    return app


# -- config files -------------------------------------------------------------


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise IoError(f"config file not found: {path}")
    raw = path.read_bytes()
    try:
        if path.suffix.lower() == ".toml":
            import tomli
            doc = tomli.loads(raw.decode())
        else:
            doc = json.loads(raw)
    except ValueError as e:
        raise IoError(f"{path}: cannot parse config ({e})") from e
    if not isinstance(doc, dict):
        raise IoError(f"{path}: config root must be a table/object")
    return doc


def _dataclass_from(section: dict, cls, label: str):
    try:
        return cls(**section)
    except TypeError as e:
        raise IoError(f"bad [{label}] config: {e}") from e


def parse_configs(doc: dict, seed: int | None = None
                  ) -> tuple[ModelConfig, TrainConfig, SyntheticCorpusConfig]:
    corpus_kw = dict(doc.get("corpus", {}))
    train_kw = dict(doc.get("train", {}))
    if seed is not None:
        train_kw["seed"] = seed
        corpus_kw["seed"] = seed
    model_cfg = _dataclass_from(doc.get("model", {}), ModelConfig, "model")
    train_cfg = _dataclass_from(train_kw, TrainConfig, "train")
    if "words" in corpus_kw:
        corpus_kw["words"] = tuple(corpus_kw["words"])
    if "severities" in corpus_kw:
        corpus_kw["severities"] = tuple(corpus_kw["severities"])
    corpus_cfg = _dataclass_from(corpus_kw, SyntheticCorpusConfig, "corpus")
    return model_cfg, train_cfg, corpus_cfg


def resolve_checkpoint(arg_value: str | None) -> Path:
    path = os.environ.get(CHECKPOINT_ENV) or arg_value
    if not path:
        raise IoError(f"no checkpoint given (use --checkpoint or "
                      f"${CHECKPOINT_ENV})")
    return Path(path)


def _load_items(args, corpus_cfg: SyntheticCorpusConfig, n_mels: int):
    if getattr(args, "synthetic", False):
        pairs = generate_synthetic_corpus(corpus_cfg)
        return prepare_dataset(pairs, n_mels=n_mels)
    manifest = getattr(args, "manifest", None)
    if not manifest:
        raise IoError("need --manifest or --synthetic")
    return load_dataset(manifest, getattr(args, "audio_root", None),
                        n_mels=n_mels)


# -- commands -----------------------------------------------------------------


def cmd_train(args) -> int:
    doc = load_config_file(args.config) if args.config else {}
    model_cfg, train_cfg, corpus_cfg = parse_configs(doc, args.seed)
    items = _load_items(args, corpus_cfg, model_cfg.n_mels)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best = math.inf
    every = args.checkpoint_every

    def snapshot(epoch, model, stats):
        nonlocal best
        if every and (epoch + 1) % every == 0:
            save_checkpoint(out_dir / f"epoch_{epoch + 1:04d}.ckpt", model)
        if stats.joint_loss < best:
            best = stats.joint_loss
            save_checkpoint(out_dir / "best.ckpt", model)
        acc = "n/a" if stats.accuracy is None else f"{stats.accuracy:.3f}"
        print(f"epoch {epoch:3d}  loss {stats.joint_loss:.4f}  acc {acc}  "
              f"({stats.seconds:.1f}s)", flush=True)

    params, report = train(items, model_cfg, train_cfg, callback=snapshot)
    final = MultiTaskModel(model_cfg, params, seed=train_cfg.seed)
    ckpt = out_dir / "model.ckpt"
    save_checkpoint(ckpt, final)
    (out_dir / "train_report.json").write_text(
        json.dumps(report.to_dict(), indent=2))
    print(f"wrote {ckpt}")
    return 0


def cmd_eval_loso(args) -> int:
    doc = load_config_file(args.config) if args.config else {}
    model_cfg, train_cfg, corpus_cfg = parse_configs(doc, args.seed)
    items = _load_items(args, corpus_cfg, model_cfg.n_mels)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(k, speaker, report):
        print(f"fold {k}: held out {speaker}, "
              f"final loss {report.final.joint_loss:.4f}", flush=True)

    result = run_loso(items, model_cfg, train_cfg, progress=progress)
    word = result.word_metrics()
    speaker = result.speaker_metrics()
    doc_out = {"n_folds": len(result.fold_reports),
               "word": word.to_dict(), "speaker": speaker.to_dict()}
    if all(s.intelligibility is not None for s in result.latent_samples):
        try:
            corr = correlate_latents(result.latent_samples)
            doc_out["correlation"] = [vars(r) for r in corr.rows]
        except (DegenerateInput, InputTooShort) as e:
            # too few speakers for a correlation; keep the rest of the report
            doc_out["correlation"] = None
            print(f"latent correlation skipped: {e}", flush=True)
    write_predictions(out_dir / "predictions.tsv", result.predictions)
    (out_dir / "loso_report.json").write_text(json.dumps(doc_out, indent=2))
    print(format_metrics_table([word, speaker]))
    return 0


def _analyze_file(model: MultiTaskModel, wav_path) -> dict:
    stft_cfg = StftConfig()
    fb = mel_filterbank(n_mels=model.config.n_mels, fft_size=stft_cfg.fft_size)
    clip = read_wav(wav_path)
    mel = zscore_normalize(melspectrogram(clip, stft_cfg, fb))
    latent = model.encode_audio(mel)
    det = model.detect(latent)
    return {"p_dysarthric": det.p_dysarthric,
            "latent": [latent.l1, latent.l2], "n_frames": mel.n_f}


def cmd_detect(args) -> int:
    model = load_checkpoint(resolve_checkpoint(args.checkpoint))
    print(json.dumps(_analyze_file(model, args.wav), indent=2))
    return 0


def _write_reconstruction(model: MultiTaskModel, transcript: str, latent,
                          frames: int, mel_path, wav_path=None,
                          gl_iters: int = 60) -> dict:
    onehot = encode_transcript(transcript)
    mel = model.reconstruct_with_latent(onehot, latent, frames)
    Path(mel_path).write_bytes(mel_to_bytes(mel))
    out = {"mel": str(mel_path), "n_mels": mel.n_mels, "n_frames": mel.n_f,
           "p_dysarthric": model.detect(np.asarray(latent)).p_dysarthric}
    if wav_path:
        stft_cfg = StftConfig()
        fb = mel_filterbank(n_mels=model.config.n_mels,
                            fft_size=stft_cfg.fft_size)
        clip = griffin_lim(mel_to_linear(mel, fb), stft_cfg,
                           iterations=gl_iters, seed=0)
        write_wav(wav_path, clip)
        out["wav"] = str(wav_path)
    return out


def _parse_latent(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 2:
        raise IoError(f"latent must be 'l1,l2', got {text!r}")
    try:
        vec = tuple(float(p) for p in parts)
    except ValueError as e:
        raise IoError(f"latent must be numeric: {e}") from e
    if not all(math.isfinite(v) for v in vec):
        raise IoError("latent must be finite")
    return vec


def cmd_reconstruct(args) -> int:
    if not 1 <= args.frames <= MAX_TARGET_FRAMES:
        raise IoError(f"--frames must lie in [1, {MAX_TARGET_FRAMES}]")
    model = load_checkpoint(resolve_checkpoint(args.checkpoint))
    out = _write_reconstruction(model, args.transcript,
                                _parse_latent(args.latent), args.frames,
                                args.out, args.wav, args.gl_iters)
    print(json.dumps(out, indent=2))
    return 0


def cmd_sweep(args) -> int:
    if not 1 <= args.frames <= MAX_TARGET_FRAMES:
        raise IoError(f"--frames must lie in [1, {MAX_TARGET_FRAMES}]")
    model = load_checkpoint(resolve_checkpoint(args.checkpoint))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for d1 in SWEEP_DIM1:
        mel_path = out_dir / f"sweep_d1_{d1:+.1f}.mels"
        wav_path = (out_dir / f"sweep_d1_{d1:+.1f}.wav") if args.wav else None
        entry = _write_reconstruction(model, args.transcript, (d1, args.dim2),
                                      args.frames, mel_path, wav_path,
                                      args.gl_iters)
        entry["dim1"] = d1
        entry["dim2"] = args.dim2
        entries.append(entry)
    manifest = out_dir / "sweep.json"
    manifest.write_text(json.dumps(
        {"transcript": args.transcript, "frames": args.frames,
         "points": entries}, indent=2))
    print(f"wrote {len(entries)} reconstructions to {out_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    model = load_checkpoint(resolve_checkpoint(args.checkpoint))
    cache = None
    if args.synthetic or args.manifest:
        doc = load_config_file(args.config) if args.config else {}
        _, _, corpus_cfg = parse_configs(doc, args.seed)
        items = _load_items(args, corpus_cfg, model.config.n_mels)
        cache = build_latent_cache(model, items)
        print(f"latent map cache: {len(cache['points'])} points")
    app = create_app(model, cache, args.max_concurrent, args.gl_iters)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyslat",
        description="dysarthria detection and speech reconstruction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_args(p):
        p.add_argument("--manifest", help="utterance manifest TSV")
        p.add_argument("--audio-root", help="base directory for WAV paths")
        p.add_argument("--synthetic", action="store_true",
                       help="use the built-in synthetic corpus")
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override corpus and training seeds")

    p = sub.add_parser("train", help="fit a model and write checkpoints")
    add_data_args(p)
    p.add_argument("--out-dir", default="runs/train")
    p.add_argument("--checkpoint-every", type=int, default=10)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval-loso", help="leave-one-speaker-out evaluation")
    add_data_args(p)
    p.add_argument("--out-dir", default="runs/loso")
    p.set_defaults(fn=cmd_eval_loso)

    p = sub.add_parser("detect", help="dysarthria probability for one WAV")
    p.add_argument("wav")
    p.add_argument("--checkpoint")
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("reconstruct", help="decode a spectrogram from a latent")
    p.add_argument("--checkpoint")
    p.add_argument("--transcript", required=True)
    p.add_argument("--latent", required=True, help="l1,l2")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--out", required=True, help="output .mels path")
    p.add_argument("--wav", help="optional output WAV path")
    p.add_argument("--gl-iters", type=int, default=60)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("sweep", help="reconstruct the 5-point dim1 sweep")
    p.add_argument("--checkpoint")
    p.add_argument("--transcript", required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--dim2", type=float, default=SWEEP_DIM2)
    p.add_argument("--out-dir", default="runs/sweep")
    p.add_argument("--wav", action="store_true",
                   help="also write Griffin-Lim audio per point")
    p.add_argument("--gl-iters", type=int, default=60)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("serve", help="run the HTTP API")
    add_data_args(p)
    p.add_argument("--checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-concurrent", type=int, default=2)
    p.add_argument("--gl-iters", type=int, default=60)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors, but that's a user error here
        return 0 if e.code in (0, None) else 1
    try:
        return args.fn(args)
    except (DyslatError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - defensive
        import traceback
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
