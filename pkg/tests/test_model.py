"""Model assembly tests: shape contracts, wiring, determinism, checkpoints."""

import numpy as np
import pytest

from dyslat import model as M
from dyslat.autodiff import Tensor
from dyslat.data import encode_transcript
from dyslat.dsp import MelSpectrogram
from dyslat.errors import (
    CheckpointMismatch,
    EmptySequence,
    InputTooShort,
    ShapeMismatch,
)

# small-width stand-in; latent stays 2 and query = text_gru + 2 by contract
TINY = M.ModelConfig(n_mels=16, text_channels=10, text_gru=7, audio_channels=5,
                     audio_gru=5, audio_dense=5, bottleneck=24, query_gru=9,
                     decoder_gru=32)


def tiny_model(seed=0, dtype=np.float64):
    return M.MultiTaskModel.init(TINY, seed=seed, dtype=dtype)


def rand_mel(n_mels=16, n_f=30, seed=0):
    return np.random.default_rng(seed).standard_normal((n_mels, n_f))


class TestConfig:
    def test_latent_dim_fixed(self):
        with pytest.raises(ValueError):
            M.ModelConfig(latent_dim=3, query_gru=30)

    def test_query_width_tied(self):
        with pytest.raises(ValueError):
            M.ModelConfig(query_gru=30)

    def test_narrow_mels_rejected(self):
        with pytest.raises(ValueError):
            M.ModelConfig(n_mels=12)

    def test_hash_stable_and_sensitive(self):
        a = M.config_hash(M.ModelConfig())
        b = M.config_hash(M.ModelConfig())
        c = M.config_hash(M.ModelConfig(reduction=4))
        assert a == b and a != c


class TestShapeContract:
    def test_conv_trace_128x40(self):
        assert M.conv_trace(128, 40) == [(124, 36), (62, 18), (58, 14), (29, 7)]

    def test_audio_gru_input_dim(self):
        shapes = M.param_shapes(M.ModelConfig())
        assert shapes["audio_enc/gru/Wz"] == (20 * 29, 20)

    def test_full_width_encode(self):
        m = M.MultiTaskModel.init(M.ModelConfig(), seed=1)
        latent = m.encode_audio(rand_mel(128, 40))
        assert isinstance(latent, M.LatentPoint)
        assert np.isfinite(latent.as_array()).all()

    def test_min_frames_boundary(self):
        m = tiny_model()
        m.encode_audio(rand_mel(16, 28))  # smallest legal input
        with pytest.raises(InputTooShort):
            m.encode_audio(rand_mel(16, 27))

    def test_wrong_band_count(self):
        with pytest.raises(ShapeMismatch):
            tiny_model().encode_audio(rand_mel(32, 30))


class TestEncodeAudio:
    def test_zero_params_zero_latent(self):
        m = tiny_model()
        for t in m.params.values():
            t.data[...] = 0.0
        latent = m.encode_audio(rand_mel())
        assert latent.as_array().tolist() == [0.0, 0.0]

    def test_eval_deterministic(self):
        m = tiny_model(seed=3)
        x = rand_mel(seed=5)
        a = m.encode_audio(x).as_array()
        b = m.encode_audio(x).as_array()
        assert np.array_equal(a, b)

    def test_batched_matches_single(self):
        m = tiny_model(seed=4)
        rng = np.random.default_rng(0)
        nfs = [30, 41, 36]
        mels = [rng.standard_normal((16, nf)) for nf in nfs]
        padded = np.zeros((3, 16, max(nfs)))
        mask = np.zeros((3, max(nfs)))
        for i, v in enumerate(mels):
            padded[i, :, :v.shape[1]] = v
            mask[i, :v.shape[1]] = 1.0
        import dyslat.autodiff as ad
        with ad.no_grad():
            batched = m.encode_audio_graph(Tensor(padded), mask).data
        for i, v in enumerate(mels):
            single = m.encode_audio(v).as_array()
            assert np.allclose(batched[i], single, atol=1e-10)


class TestEncodeText:
    def test_single_char(self):
        e = tiny_model().encode_text(encode_transcript("a"))
        assert e.shape == (7, 1)

    def test_command_full_width(self):
        m = M.MultiTaskModel.init(M.ModelConfig(), seed=2)
        e = m.encode_text(encode_transcript("command"))
        assert e.shape == (27, 7)

    def test_empty_rejected(self):
        with pytest.raises(EmptySequence):
            tiny_model().encode_text(np.zeros((27, 0)))


class TestBroadcastConcat:
    def test_zero_latent_rows(self):
        e = np.ones((27, 4))
        out = M.broadcast_concat(e, M.LatentPoint(0.0, 0.0))
        assert out.shape == (29, 4)
        assert np.all(out[27:] == 0)

    def test_values_repeat(self):
        out = M.broadcast_concat(np.zeros((27, 3)), np.array([1.0, -1.0]))
        assert np.array_equal(out[27], [1, 1, 1])
        assert np.array_equal(out[28], [-1, -1, -1])

    def test_graph_matches_function(self):
        m = tiny_model()
        e = np.random.default_rng(1).standard_normal((7, 5))
        latent = np.array([0.3, -0.7])
        import dyslat.autodiff as ad
        with ad.no_grad():
            g = m.concat_graph(Tensor(e[None]), Tensor(latent[None])).data[0]
        assert np.allclose(g, M.broadcast_concat(e, latent), atol=0)


class TestDecode:
    def _e(self, m, n_t=5, seed=0):
        return np.random.default_rng(seed).standard_normal(
            (m.config.query_gru, n_t)) * 0.3

    def test_step_arithmetic(self):
        m = tiny_model(seed=5)
        _, att = m.decode(self._e(m), 4, return_attention=True)
        assert len(att) == 2
        _, att = m.decode(self._e(m), 5, return_attention=True)
        assert len(att) == 3

    def test_truncation(self):
        m = tiny_model(seed=5)
        y = m.decode(self._e(m), 5)
        assert y.values.shape == (16, 5)

    def test_attention_weights_sum_to_one(self):
        m = tiny_model(seed=6)
        _, att = m.decode(self._e(m, n_t=9), 8, return_attention=True)
        for w in att:
            assert w.shape == (9,)
            assert abs(w.sum() - 1.0) < 1e-6
            assert (w >= 0).all()

    def test_eval_ignores_teacher(self):
        m = tiny_model(seed=7)
        e = self._e(m)
        teacher = MelSpectrogram(rand_mel(16, 6, seed=9))
        a = m.decode(e, 6, "eval")
        b = m.decode(e, 6, "eval", teacher=teacher)
        assert np.array_equal(a.values, b.values)

    def test_teacher_forcing_changes_output(self):
        m = tiny_model(seed=7)
        e = self._e(m)
        teacher = MelSpectrogram(rand_mel(16, 6, seed=9))
        a = m.decode(e, 6, "eval")
        b = m.decode(e, 6, "train", teacher=teacher)
        assert not np.allclose(a.values, b.values)

    def test_train_requires_teacher(self):
        m = tiny_model()
        with pytest.raises(ShapeMismatch):
            m.decode(self._e(m), 4, "train")

    def test_teacher_shape_checked(self):
        m = tiny_model()
        with pytest.raises(ShapeMismatch):
            m.decode(self._e(m), 4, "train", teacher=rand_mel(16, 99))


class TestDetect:
    def test_zero_weights_half(self):
        m = tiny_model()
        m.params["detector/weight"].data[...] = 0.0
        m.params["detector/bias"].data[...] = 0.0
        assert m.detect(M.LatentPoint(3.0, -2.0)).p_dysarthric == pytest.approx(0.5)

    def test_tanh_bounds_probability(self):
        # logits live in [-1,1], so p is pinned to (1/(1+e^2), e^2/(1+e^2))
        lo, hi = 1 / (1 + np.e**2), np.e**2 / (1 + np.e**2)
        assert lo == pytest.approx(0.1192, abs=1e-4)
        assert hi == pytest.approx(0.8808, abs=1e-4)
        rng = np.random.default_rng(11)
        for seed in range(5):
            m = tiny_model(seed=seed)
            for _ in range(20):
                p = m.detect(rng.standard_normal(2) * 10).p_dysarthric
                # tanh saturates to exactly +-1 in floats, so allow 1 ulp
                assert lo - 1e-12 <= p <= hi + 1e-12

    def test_probabilities_sum_to_one(self):
        m = tiny_model(seed=8)
        import dyslat.autodiff as ad
        with ad.no_grad():
            probs = m.detect_graph(Tensor(np.array([[0.4, -1.2]]))).data
        assert abs(probs.sum() - 1.0) < 1e-9


class TestForward:
    def test_reconstruction_shape_contract(self):
        m = tiny_model(seed=9)
        rng = np.random.default_rng(3)
        for i in range(10):
            n_f = int(rng.integers(28, 60))
            x = rng.standard_normal((16, n_f))
            _, y = m.forward(x, encode_transcript("window"))
            assert y.values.shape == x.shape

    def test_eval_idempotent(self):
        m = tiny_model(seed=10)
        x = rand_mel(16, 33, seed=1)
        t = encode_transcript("paper")
        d1, y1 = m.forward(x, t)
        d2, y2 = m.forward(x, t)
        assert d1 == d2
        assert np.array_equal(y1.values, y2.values)

    def test_train_mode_dropout_changes_latent(self):
        m = tiny_model(seed=11)
        x = rand_mel(16, 30, seed=2)
        eval_l = m.encode_audio(x).as_array()
        train_l = m.encode_audio(x, mode="train",
                                 rng=np.random.default_rng(1)).as_array()
        assert not np.allclose(eval_l, train_l)


class TestReconstructWithLatent:
    def test_consistent_with_forward(self):
        # float32 default path: same latent through either route, bit-exact
        m = M.MultiTaskModel.init(M.ModelConfig(), seed=12)
        x = rand_mel(128, 36, seed=4)
        t = encode_transcript("command")
        _, y_fwd = m.forward(x, t)
        latent = m.encode_audio(x)
        y_lat = m.reconstruct_with_latent(t, latent, 36)
        assert np.array_equal(y_fwd.values, y_lat.values)

    def test_sweep_shapes_and_distinct(self):
        m = tiny_model(seed=13)
        t = encode_transcript("backspace")
        outs = [m.reconstruct_with_latent(t, (v, -0.1), 20).values
                for v in (-0.5, 0.0, 0.5, 1.0, 1.5)]
        assert all(o.shape == (16, 20) for o in outs)
        for i in range(5):
            for j in range(i + 1, 5):
                assert np.linalg.norm(outs[i] - outs[j]) > 0

    def test_bad_latent_shape(self):
        with pytest.raises(ShapeMismatch):
            tiny_model().reconstruct_with_latent(
                encode_transcript("a"), np.array([1.0, 2.0, 3.0]), 8)


class TestGradientFlow:
    def test_composite_finite_difference(self):
        # full graph in eval mode (self-feedback decoding, no dropout) is
        # deterministic, so central differences on the in-place params work
        import dyslat.autodiff as ad

        m = tiny_model(seed=20)
        rng = np.random.default_rng(7)
        x = rng.standard_normal((1, 16, 30))
        t = np.zeros((1, 27, 4))
        t[0, rng.integers(0, 27, size=4), np.arange(4)] = 1.0

        def loss_value():
            probs, _, y = m.forward_graph(Tensor(x), Tensor(t), "eval")
            return ad.mean(ad.square(y)) + ad.mean(ad.square(probs))

        loss = loss_value()
        loss.backward()
        eps = 1e-6
        picks = ["audio_enc/conv1/kernel", "audio_enc/gru/Wh",
                 "text_enc/conv2/kernel", "decoder/query_gru/Uz",
                 "decoder/proj/weight", "detector/weight"]
        for name in picks:
            tensor = m.params[name]
            flat = tensor.data.reshape(-1)
            for k in (0, flat.size // 2):
                keep = flat[k]
                flat[k] = keep + eps
                up = loss_value().item()
                flat[k] = keep - eps
                down = loss_value().item()
                flat[k] = keep
                want = (up - down) / (2 * eps)
                got = tensor.grad.reshape(-1)[k]
                rel = abs(got - want) / max(abs(want), 1e-4)
                assert rel < 1e-4, f"{name}[{k}]: fd {want} vs autodiff {got}"


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        m = tiny_model(seed=14, dtype=np.float32)
        p = tmp_path / "model.ckpt"
        M.save_checkpoint(p, m)
        m2 = M.load_checkpoint(p)
        assert m2.config == m.config
        assert m2.seed == m.seed
        for name, t in m.params.items():
            assert np.array_equal(m2.params[name].data, t.data)

    def test_roundtrip_preserves_outputs(self, tmp_path):
        m = tiny_model(seed=15, dtype=np.float32)
        p = tmp_path / "model.ckpt"
        M.save_checkpoint(p, m)
        m2 = M.load_checkpoint(p)
        x = rand_mel(16, 30, seed=6)
        assert np.array_equal(m.encode_audio(x).as_array(),
                              m2.encode_audio(x).as_array())

    def test_hash_guard(self, tmp_path):
        import json
        import zipfile

        m = tiny_model(seed=16, dtype=np.float32)
        p = tmp_path / "model.ckpt"
        M.save_checkpoint(p, m)
        # tamper with the stored config so the hash no longer matches
        with zipfile.ZipFile(p) as z:
            entries = {n: z.read(n) for n in z.namelist()}
        cfg = json.loads(entries["config.json"])
        cfg["reduction"] = 4
        entries["config.json"] = json.dumps(cfg, sort_keys=True).encode()
        tampered = tmp_path / "tampered.ckpt"
        with zipfile.ZipFile(tampered, "w") as z:
            for n, blob in entries.items():
                z.writestr(n, blob)
        with pytest.raises(CheckpointMismatch):
            M.load_checkpoint(tampered)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointMismatch):
            M.load_checkpoint(tmp_path / "nope.ckpt")

    def test_bytes_independent_of_wall_clock(self, tmp_path, monkeypatch):
        # zip entries must carry a fixed timestamp, or equal models saved
        # on different days (or across a 2 s DOS-time boundary) would hash
        # differently
        import time

        m = tiny_model(seed=18, dtype=np.float32)
        blobs = []
        for stamp in ((2020, 1, 1, 0, 0, 0, 2, 1, 0),
                      (2031, 7, 20, 12, 34, 56, 6, 201, 0)):
            fake = time.struct_time(stamp)
            monkeypatch.setattr("time.localtime", lambda *_a, _f=fake: _f)
            p = tmp_path / f"at-{stamp[0]}.ckpt"
            M.save_checkpoint(p, m)
            blobs.append(p.read_bytes())
        assert blobs[0] == blobs[1]

    def test_params_stored_float32(self, tmp_path):
        m = tiny_model(seed=17, dtype=np.float64)
        p = tmp_path / "model.ckpt"
        M.save_checkpoint(p, m)
        m2 = M.load_checkpoint(p)
        assert m2.dtype == np.float32
