"""The multi-task network: audio encoder -> 2-d latent, text encoder,
broadcast concatenation, attention decoder emitting r frames per step, and a
dysarthria detector on the latent.

Block wiring (widths are the defaults; all configurable):

  audio:  X[128 x n_f] -> conv 20ch 5x5 VALID -> pool 2x2 -> conv -> pool
          -> per-frame flatten (20*29=580) -> GRU(20) last state
          -> dense(20, tanh) -> dense(2, linear) = latent
  text:   T[27 x n_t] -> 3x (conv 40ch 5x5 SAME, relu) -> GRU(27), full
          sequence -> E_text[27 x n_t]
  concat: E[29 x n_t] = rows of E_text plus the two latent values broadcast
          across columns
  decode: per step, previous r frames (zeros at step 0) -> dense(96, relu)
          -> query GRU(29) -> dot-product attention over E's columns
          -> decoder GRU(128) on concat(context, bottleneck) -> linear
          projection to r frames; teacher forcing in train mode
  detect: dense(2, tanh) on latent -> softmax -> p(dysarthric)

Dropout (train mode only) follows both audio conv/pool blocks, the audio GRU
state and the 20-unit dense output; the 2-unit latent itself is left alone.

Every public method runs the same batched graph at batch size 1, so repeated
eval calls and the two reconstruction routes (forward vs
reconstruct_with_latent with the same latent) are bit-identical.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import TextOneHot
from .dsp import MelSpectrogram
from .errors import (
    CheckpointMismatch,
    EmptySequence,
    InputTooShort,
    ShapeMismatch,
)
from .layers import (
    GruParams,
    ParamStore,
    dense,
    dot_product_attention,
    dropout,
    gru_forward,
    gru_step,
    xavier_init,
)

MIN_FRAMES = 28          # two VALID 5x5 convs + two 2x2 pools need this margin
CHECKPOINT_VERSION = 1
XAVIER_MAGNITUDE = 2.24


@dataclass(frozen=True)
class ModelConfig:
    n_mels: int = 128
    latent_dim: int = 2
    text_channels: int = 40
    text_gru: int = 27
    audio_channels: int = 20
    audio_gru: int = 20
    audio_dense: int = 20
    bottleneck: int = 96
    query_gru: int = 29
    decoder_gru: int = 128
    reduction: int = 2            # r: frames per decoder step
    alphabet_size: int = 27
    dropout: float = 0.5

    def __post_init__(self):
        if self.latent_dim != 2:
            raise ValueError("latent_dim is fixed at 2 by the architecture")
        if self.query_gru != self.text_gru + self.latent_dim:
            raise ValueError(
                f"query_gru must equal text_gru + latent_dim "
                f"({self.text_gru} + {self.latent_dim}), got {self.query_gru}")
        if self.n_mels < 16:
            raise ValueError("n_mels must be >= 16 to survive the conv stack")
        if self.reduction < 1:
            raise ValueError("reduction must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class LatentPoint:
    l1: float
    l2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.l1, self.l2])


@dataclass(frozen=True)
class DetectionResult:
    p_dysarthric: float
    latent: LatentPoint


def conv_trace(n_mels: int, n_f: int) -> list[tuple[int, int]]:
    """Spatial shapes after conv1, pool1, conv2, pool2 for VALID 5x5 + 2x2."""
    h, w = n_mels - 4, n_f - 4
    trace = [(h, w)]
    h, w = h // 2, w // 2
    trace.append((h, w))
    h, w = h - 4, w - 4
    trace.append((h, w))
    h, w = h // 2, w // 2
    trace.append((h, w))
    return trace


def config_hash(config: ModelConfig) -> str:
    blob = json.dumps(asdict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def param_shapes(config: ModelConfig) -> dict[str, tuple]:
    c = config
    audio_h = conv_trace(c.n_mels, MIN_FRAMES)[-1][0]
    audio_in = c.audio_channels * audio_h
    text_in = c.text_channels * c.alphabet_size
    block = c.reduction * c.n_mels
    shapes: dict[str, tuple] = {
        "audio_enc/conv1/kernel": (c.audio_channels, 1, 5, 5),
        "audio_enc/conv1/bias": (c.audio_channels,),
        "audio_enc/conv2/kernel": (c.audio_channels, c.audio_channels, 5, 5),
        "audio_enc/conv2/bias": (c.audio_channels,),
        "audio_enc/dense1/weight": (c.audio_gru, c.audio_dense),
        "audio_enc/dense1/bias": (c.audio_dense,),
        "audio_enc/latent/weight": (c.audio_dense, c.latent_dim),
        "audio_enc/latent/bias": (c.latent_dim,),
        "text_enc/conv1/kernel": (c.text_channels, 1, 5, 5),
        "text_enc/conv1/bias": (c.text_channels,),
        "text_enc/conv2/kernel": (c.text_channels, c.text_channels, 5, 5),
        "text_enc/conv2/bias": (c.text_channels,),
        "text_enc/conv3/kernel": (c.text_channels, c.text_channels, 5, 5),
        "text_enc/conv3/bias": (c.text_channels,),
        "decoder/bottleneck/weight": (block, c.bottleneck),
        "decoder/bottleneck/bias": (c.bottleneck,),
        "decoder/proj/weight": (c.decoder_gru, block),
        "decoder/proj/bias": (block,),
        "detector/weight": (c.latent_dim, 2),
        "detector/bias": (2,),
    }
    for prefix, din, hidden in (
        ("audio_enc/gru", audio_in, c.audio_gru),
        ("text_enc/gru", text_in, c.text_gru),
        ("decoder/query_gru", c.bottleneck, c.query_gru),
        ("decoder/gru", c.query_gru + c.bottleneck, c.decoder_gru),
    ):
        for gate in ("z", "r", "h"):
            shapes[f"{prefix}/W{gate}"] = (din, hidden)
            shapes[f"{prefix}/U{gate}"] = (hidden, hidden)
            shapes[f"{prefix}/b{gate}"] = (hidden,)
    return shapes


# the 2-wide detector head saturates its tanh when drawn at full magnitude
# (|w| up to 1.58 against latents of order 1-2), which stalls early training;
# start it in the linear regime instead
DETECTOR_MAGNITUDE = 0.7


def init_params(config: ModelConfig, seed: int = 0,
                dtype=np.float32) -> ParamStore:
    """Xavier-initialized weights (magnitude 2.24, detector head 0.7), zero
    biases, in a fixed registration order so a seed fully determines the
    parameters."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x1A17)))
    store = ParamStore()
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit("/", 1)[-1]
        if leaf.startswith("b"):  # bias, bz, br, bh
            store.add(name, np.zeros(shape, dtype=dtype))
        else:
            mag = DETECTOR_MAGNITUDE if name.startswith("detector") \
                else XAVIER_MAGNITUDE
            store.add(name, xavier_init(shape, mag, rng, dtype).data)
    return store


def broadcast_concat(e_text: np.ndarray, latent) -> np.ndarray:
    """Stack the two latent values under E_text, repeated across columns."""
    e_text = np.asarray(e_text)
    vec = latent.as_array() if isinstance(latent, LatentPoint) else np.asarray(latent)
    if vec.shape != (2,):
        raise ShapeMismatch(f"latent must be a 2-vector, got shape {vec.shape}")
    n_t = e_text.shape[1]
    return np.concatenate([e_text, np.repeat(vec[:, None], n_t, axis=1)], axis=0)


class MultiTaskModel:
    """Wraps a ModelConfig plus its ParamStore with the forward graphs."""

    def __init__(self, config: ModelConfig, params: ParamStore, seed: int = 0):
        self.config = config
        self.params = params
        self.seed = seed
        self._gru = {name: GruParams.from_store(params, name) for name in (
            "audio_enc/gru", "text_enc/gru", "decoder/query_gru", "decoder/gru")}

    @classmethod
    def init(cls, config: ModelConfig = ModelConfig(), seed: int = 0,
             dtype=np.float32) -> "MultiTaskModel":
        return cls(config, init_params(config, seed, dtype), seed)

    @property
    def dtype(self):
        return self.params["detector/weight"].data.dtype

    # -- batched graphs (trainer entry points) ---------------------------------

    def encode_audio_graph(self, mel: Tensor, frame_mask: np.ndarray | None = None,
                           mode: str = "eval", rng=None) -> Tensor:
        """mel: [B x n_mels x n_f] -> latent [B x 2]."""
        c, p = self.config, self.params
        b, n_mels, n_f = mel.data.shape
        if n_mels != c.n_mels:
            raise ShapeMismatch(f"expected {c.n_mels} mel bands, got {n_mels}")
        if n_f < MIN_FRAMES:
            raise InputTooShort(
                f"need >= {MIN_FRAMES} spectrogram frames, got {n_f}")
        if mode == "train" and rng is None:
            rng = np.random.default_rng(0)
        x = ad.reshape(mel, (b, 1, n_mels, n_f))
        x = ad.relu(ad.conv2d(x, p["audio_enc/conv1/kernel"], "VALID")
                    + ad.reshape(p["audio_enc/conv1/bias"], (1, c.audio_channels, 1, 1)))
        x = ad.maxpool2d(x)
        x = dropout(x, c.dropout, mode, rng)
        x = ad.relu(ad.conv2d(x, p["audio_enc/conv2/kernel"], "VALID")
                    + ad.reshape(p["audio_enc/conv2/bias"], (1, c.audio_channels, 1, 1)))
        x = ad.maxpool2d(x)
        x = dropout(x, c.dropout, mode, rng)
        _, ch, h, w = x.data.shape
        # one flattened channel-x-frequency vector per surviving time step
        seq = ad.reshape(ad.swapaxes(x, 1, 3), (b, w, ch * h))  # [B,w,ch*h]
        steps = [seq[:, t, :] for t in range(w)]
        mask = None
        if frame_mask is not None:
            valid = frame_mask.sum(axis=1).astype(int)          # true n_f per row
            width = np.array([conv_trace(n_mels, int(v))[-1][1] for v in valid])
            mask = (np.arange(w)[:, None] < width[None, :]).astype(float)
        _, last = gru_forward(steps, c.audio_gru, self._gru["audio_enc/gru"],
                              mask=mask)
        last = dropout(last, c.dropout, mode, rng)
        hid = dense(last, p["audio_enc/dense1/weight"],
                    p["audio_enc/dense1/bias"], "tanh")
        hid = dropout(hid, c.dropout, mode, rng)
        return dense(hid, p["audio_enc/latent/weight"],
                     p["audio_enc/latent/bias"], "linear")

    def encode_text_graph(self, text: Tensor,
                          text_mask: np.ndarray | None = None) -> Tensor:
        """text: [B x n_c x n_t] one-hots -> E_text [B x text_gru x n_t]."""
        c, p = self.config, self.params
        b, n_c, n_t = text.data.shape
        if n_c != c.alphabet_size:
            raise ShapeMismatch(f"expected {c.alphabet_size} rows, got {n_c}")
        if n_t < 1:
            raise EmptySequence("text encoder needs at least one character")
        x = ad.reshape(text, (b, 1, n_c, n_t))
        for i in (1, 2, 3):
            x = ad.relu(ad.conv2d(x, p[f"text_enc/conv{i}/kernel"], "SAME")
                        + ad.reshape(p[f"text_enc/conv{i}/bias"],
                                     (1, c.text_channels, 1, 1)))
        seq = ad.reshape(ad.swapaxes(x, 1, 3), (b, n_t, c.text_channels * n_c))
        steps = [seq[:, t, :] for t in range(n_t)]
        mask = text_mask.T if text_mask is not None else None
        outputs, _ = gru_forward(steps, c.text_gru, self._gru["text_enc/gru"],
                                 mask=mask)
        stacked = ad.stack(outputs, axis=0)                    # [n_t,B,H]
        return ad.swapaxes(ad.swapaxes(stacked, 0, 1), 1, 2)   # [B,H,n_t]

    def concat_graph(self, e_text: Tensor, latent: Tensor) -> Tensor:
        """[B x text_gru x n_t] + [B x 2] -> [B x query_gru x n_t]."""
        b, _, n_t = e_text.data.shape
        ones = Tensor(np.ones((1, 1, n_t), dtype=latent.data.dtype))
        tiled = ad.mul(ad.reshape(latent, (b, self.config.latent_dim, 1)), ones)
        return ad.concat([e_text, tiled], axis=1)

    def detect_graph(self, latent: Tensor) -> Tensor:
        """latent [B x 2] -> class probabilities [B x 2]."""
        p = self.params
        logits = dense(latent, p["detector/weight"], p["detector/bias"], "tanh")
        return ad.softmax(logits, axis=-1)

    def decode_graph(self, e: Tensor, target_frames: int, mode: str = "eval",
                     teacher: np.ndarray | None = None,
                     key_mask: np.ndarray | None = None,
                     attention_out: list | None = None) -> Tensor:
        """e: [B x query_gru x n_t] -> mel prediction [B x n_mels x target_frames].

        Runs ceil(target_frames/r) steps; step 0 consumes a zero go-block.
        Train mode feeds ground-truth previous frames (teacher forcing), eval
        mode feeds the model's own previous block.
        """
        c, p = self.config, self.params
        b, rows, n_t = e.data.shape
        if rows != c.query_gru:
            raise ShapeMismatch(f"expected {c.query_gru} rows in E, got {rows}")
        if target_frames < 1:
            raise ValueError(f"target_frames must be >= 1, got {target_frames}")
        r = c.reduction
        n_steps = math.ceil(target_frames / r)
        dtype = e.data.dtype
        if mode == "train":
            if teacher is None:
                raise ShapeMismatch("train-mode decoding requires teacher frames")
            teacher = np.asarray(teacher, dtype=dtype)
            if teacher.shape != (b, c.n_mels, target_frames):
                raise ShapeMismatch(
                    f"teacher shape {teacher.shape} != "
                    f"{(b, c.n_mels, target_frames)}")
            padded = np.zeros((b, c.n_mels, n_steps * r), dtype=dtype)
            padded[:, :, :target_frames] = teacher
            # block k as a frame-major flat vector [B x r*n_mels]
            teacher_blocks = [
                padded[:, :, k * r:(k + 1) * r].swapaxes(1, 2).reshape(b, r * c.n_mels)
                for k in range(n_steps)]
        gq = self._gru["decoder/query_gru"]
        gd = self._gru["decoder/gru"]
        q_state = Tensor(np.zeros((b, c.query_gru), dtype=dtype))
        d_state = Tensor(np.zeros((b, c.decoder_gru), dtype=dtype))
        prev = Tensor(np.zeros((b, r * c.n_mels), dtype=dtype))   # go block
        blocks = []
        for k in range(n_steps):
            bn = dense(prev, p["decoder/bottleneck/weight"],
                       p["decoder/bottleneck/bias"], "relu")
            q_state = gru_step(bn, q_state, gq)
            context, weights = dot_product_attention(q_state, e, e,
                                                     key_mask=key_mask)
            if attention_out is not None:
                attention_out.append(weights.numpy())
            d_in = ad.concat([context, bn], axis=1)
            d_state = gru_step(d_in, d_state, gd)
            out = dense(d_state, p["decoder/proj/weight"],
                        p["decoder/proj/bias"], "linear")
            blocks.append(ad.reshape(out, (b, r, c.n_mels)))
            prev = teacher_blocks[k] if mode == "train" else out
            if isinstance(prev, np.ndarray):
                prev = Tensor(prev)
        y = ad.swapaxes(ad.concat(blocks, axis=1), 1, 2)  # [B, n_mels, steps*r]
        return y[:, :, :target_frames]

    def forward_graph(self, mel: Tensor, text: Tensor, mode: str = "eval",
                      rng=None, frame_mask=None, text_mask=None,
                      teacher: np.ndarray | None = None,
                      with_reconstruction: bool = True,
                      latent_override: Tensor | None = None):
        """Full pass; returns (probs [B x 2], latent [B x 2], Y or None)."""
        latent = (latent_override if latent_override is not None
                  else self.encode_audio_graph(mel, frame_mask, mode, rng))
        probs = self.detect_graph(latent)
        y = None
        if with_reconstruction:
            e_text = self.encode_text_graph(text, text_mask)
            e = self.concat_graph(e_text, latent)
            y = self.decode_graph(e, mel.data.shape[2], mode, teacher,
                                  key_mask=text_mask)
        return probs, latent, y

    # -- public single-sample API ----------------------------------------------

    def _as_mel_array(self, x) -> np.ndarray:
        v = x.values if isinstance(x, MelSpectrogram) else np.asarray(x)
        if v.ndim != 2:
            raise ShapeMismatch(f"expected a 2-D mel matrix, got {v.shape}")
        return v.astype(self.dtype)

    def _as_text_array(self, t) -> np.ndarray:
        v = t.matrix if isinstance(t, TextOneHot) else np.asarray(t)
        if v.ndim != 2:
            raise ShapeMismatch(f"expected a 2-D one-hot matrix, got {v.shape}")
        if v.shape[1] < 1:
            raise EmptySequence("transcript encoding has no columns")
        return v.astype(self.dtype)

    def encode_audio(self, x, mode: str = "eval", rng=None) -> LatentPoint:
        v = self._as_mel_array(x)
        with ad.no_grad():
            latent = self.encode_audio_graph(Tensor(v[None]), None, mode, rng)
        l1, l2 = latent.data[0]
        return LatentPoint(float(l1), float(l2))

    def encode_text(self, t) -> np.ndarray:
        v = self._as_text_array(t)
        with ad.no_grad():
            e = self.encode_text_graph(Tensor(v[None]))
        return e.data[0]

    def detect(self, latent) -> DetectionResult:
        vec = latent.as_array() if isinstance(latent, LatentPoint) \
            else np.asarray(latent, dtype=float)
        if vec.shape != (2,):
            raise ShapeMismatch(f"latent must be a 2-vector, got {vec.shape}")
        point = LatentPoint(float(vec[0]), float(vec[1]))
        with ad.no_grad():
            probs = self.detect_graph(Tensor(vec.astype(self.dtype)[None]))
        return DetectionResult(float(probs.data[0, 1]), point)

    def decode(self, e: np.ndarray, target_frames: int, mode: str = "eval",
               teacher=None, return_attention: bool = False):
        e = np.asarray(e, dtype=self.dtype)
        teach = None
        if teacher is not None:
            teach = self._as_mel_array(teacher)[None]
        collect: list | None = [] if return_attention else None
        with ad.no_grad():
            y = self.decode_graph(Tensor(e[None]), target_frames, mode,
                                  teach, attention_out=collect)
        mel = MelSpectrogram(y.data[0].astype(np.float64))
        if return_attention:
            return mel, [w[0] for w in collect]
        return mel

    def forward(self, x, t, mode: str = "eval", rng=None
                ) -> tuple[DetectionResult, MelSpectrogram]:
        xv = self._as_mel_array(x)
        tv = self._as_text_array(t)
        teacher = xv[None] if mode == "train" else None
        with ad.no_grad():
            probs, latent, y = self.forward_graph(
                Tensor(xv[None]), Tensor(tv[None]), mode, rng, teacher=teacher)
        point = LatentPoint(float(latent.data[0, 0]), float(latent.data[0, 1]))
        result = DetectionResult(float(probs.data[0, 1]), point)
        return result, MelSpectrogram(y.data[0].astype(np.float64))

    def reconstruct_with_latent(self, t, latent, target_frames: int
                                ) -> MelSpectrogram:
        """Decode from an explicit latent, bypassing the audio encoder."""
        tv = self._as_text_array(t)
        vec = latent.as_array() if isinstance(latent, LatentPoint) \
            else np.asarray(latent, dtype=float)
        if vec.shape != (2,):
            raise ShapeMismatch(f"latent must be a 2-vector, got {vec.shape}")
        with ad.no_grad():
            e_text = self.encode_text_graph(Tensor(tv[None]))
            e = self.concat_graph(e_text, Tensor(vec.astype(self.dtype)[None]))
            y = self.decode_graph(e, target_frames, "eval")
        return MelSpectrogram(y.data[0].astype(np.float64))


# -- checkpoints ------------------------------------------------------------------


def _write_entry(z: zipfile.ZipFile, name: str, payload):
    # fixed timestamp: checkpoint bytes must be a function of the contents
    # alone, or same-seed runs would hash differently across wall-clock time
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    z.writestr(info, payload)


def save_checkpoint(path, model: MultiTaskModel):
    """Zip archive: params/<name>.npy (float32), config.json, metadata.json
    {version, seed, config_hash}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"version": CHECKPOINT_VERSION, "seed": model.seed,
            "config_hash": config_hash(model.config)}
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as z:
        _write_entry(z, "config.json",
                     json.dumps(asdict(model.config), sort_keys=True))
        _write_entry(z, "metadata.json", json.dumps(meta, sort_keys=True))
        for name, tensor in model.params.items():
            buf = io.BytesIO()
            np.save(buf, tensor.data.astype(np.float32))
            _write_entry(z, f"params/{name}.npy", buf.getvalue())


def load_checkpoint(path) -> MultiTaskModel:
    path = Path(path)
    if not path.exists():
        raise CheckpointMismatch(f"checkpoint not found: {path}")
    with zipfile.ZipFile(path, "r") as z:
        names = set(z.namelist())
        for required in ("config.json", "metadata.json"):
            if required not in names:
                raise CheckpointMismatch(f"{path}: missing {required}")
        try:
            config = ModelConfig(**json.loads(z.read("config.json")))
        except (TypeError, ValueError) as e:
            raise CheckpointMismatch(f"{path}: bad config ({e})") from e
        meta = json.loads(z.read("metadata.json"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointMismatch(
                f"{path}: unsupported checkpoint version {meta.get('version')}")
        if meta.get("config_hash") != config_hash(config):
            raise CheckpointMismatch(f"{path}: config hash does not match config")
        expected = param_shapes(config)
        store = ParamStore()
        for name, shape in expected.items():
            entry = f"params/{name}.npy"
            if entry not in names:
                raise CheckpointMismatch(f"{path}: missing parameter {name}")
            arr = np.load(io.BytesIO(z.read(entry)))
            if arr.shape != shape:
                raise CheckpointMismatch(
                    f"{path}: parameter {name} has shape {arr.shape}, "
                    f"expected {shape}")
            store.add(name, arr.astype(np.float32))
    return MultiTaskModel(config, store, seed=int(meta.get("seed", 0)))
