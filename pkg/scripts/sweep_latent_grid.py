#!/usr/bin/env python3
"""Render a grid of reconstructions across latent coordinates.

Loads a trained checkpoint, fixes a transcript, and decodes every point on a
dim1 x dim2 grid so the two latent axes can be inspected side by side. Writes
one .mels blob per grid point plus a manifest; pass --wav to also run phase
reconstruction and get listenable audio.

    python scripts/sweep_latent_grid.py runs/model.ckpt --transcript left \
        --dim1 -0.5 0 0.5 1 1.5 --dim2 -0.1 --wav
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dyslat.data import encode_transcript
from dyslat.dsp import StftConfig, griffin_lim, mel_filterbank, mel_to_bytes, \
    mel_to_linear, write_wav
from dyslat.model import load_checkpoint


def build_parser():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--transcript", default="left")
    p.add_argument("--dim1", type=float, nargs="+",
                   default=[-0.5, 0.0, 0.5, 1.0, 1.5])
    p.add_argument("--dim2", type=float, nargs="+", default=[-0.1])
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--out", type=Path, default=Path("runs/latent_grid"))
    p.add_argument("--wav", action="store_true",
                   help="also write griffin-lim audio per point")
    p.add_argument("--gl-iters", type=int, default=60)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    model = load_checkpoint(args.checkpoint)
    onehot = encode_transcript(args.transcript)
    args.out.mkdir(parents=True, exist_ok=True)

    cfg = StftConfig()
    fb = mel_filterbank(n_mels=model.config.n_mels, fft_size=cfg.fft_size)
    manifest = []
    for d1 in args.dim1:
        for d2 in args.dim2:
            mel = model.reconstruct_with_latent(
                onehot, np.array([d1, d2]), args.frames)
            stem = f"grid_{d1:+.2f}_{d2:+.2f}"
            (args.out / f"{stem}.mels").write_bytes(mel_to_bytes(mel))
            entry = {"dim1": d1, "dim2": d2, "mels": f"{stem}.mels"}
            if args.wav:
                clip = griffin_lim(mel_to_linear(mel, fb), cfg,
                                   iterations=args.gl_iters, seed=0)
                write_wav(args.out / f"{stem}.wav", clip)
                entry["wav"] = f"{stem}.wav"
            manifest.append(entry)
            print(f"{stem}: mel {mel.values.shape}, "
                  f"mean {mel.values.mean():+.3f}")

    (args.out / "grid.json").write_text(json.dumps({
        "transcript": args.transcript, "target_frames": args.frames,
        "points": manifest}, indent=2))
    print(f"wrote {len(manifest)} points to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
