"""Tests for manifests, one-hot encodings, batching and the synthetic corpus."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyslat import data
from dyslat.data import (
    DEFAULT_ALPHABET,
    SyntheticCorpusConfig,
    UtteranceRecord,
    collate,
    decode_onehot,
    encode_transcript,
    generate_synthetic_corpus,
    load_manifest,
    make_batches,
    normalize_text,
    prepare_utterance,
    write_manifest,
)
from dyslat.dsp import StftConfig, read_wav
from dyslat.errors import EmptySequence, IoError, ParseError


class TestEncodeTranscript:
    def test_single_letter(self):
        oh = encode_transcript("a")
        assert oh.matrix.shape == (27, 1)
        assert oh.matrix[0, 0] == 1.0
        assert oh.matrix.sum() == 1.0

    def test_case_folding(self):
        assert np.array_equal(encode_transcript("Command").matrix,
                              encode_transcript("command").matrix)

    def test_backspace(self):
        oh = encode_transcript("backspace")
        assert oh.n_t == 9
        assert np.all(oh.matrix.sum(axis=0) == 1.0)

    def test_punctuation_to_space(self):
        assert normalize_text("don't stop") == "don t stop"

    def test_space_collapsing(self):
        assert normalize_text("  a   b  ") == "a b"

    def test_empty_after_normalization(self):
        with pytest.raises(EmptySequence):
            encode_transcript("123!?")

    @given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz ", min_size=1, max_size=30))
    @settings(max_examples=80, deadline=None)
    def test_roundtrip_on_normalized(self, text):
        norm = normalize_text(text)
        if not norm:
            return
        assert decode_onehot(encode_transcript(norm)) == norm

    def test_column_sums_always_one(self):
        oh = encode_transcript("the quick brown fox")
        assert np.array_equal(oh.matrix.sum(axis=0), np.ones(oh.n_t))


class TestManifest:
    HEADER = "\t".join(data.MANIFEST_COLUMNS)

    def test_header_only(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text(self.HEADER + "\n")
        assert load_manifest(p) == []

    def test_bad_dysarthric_value(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text(self.HEADER + "\na.wav\thello\tspk1\t2\t50\t1\n")
        with pytest.raises(ParseError, match="dysarthric"):
            load_manifest(p)

    def test_error_carries_line_number(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text(self.HEADER + "\na.wav\thi\ts1\t1\t50\t1\nb.wav\thi\ts1\t7\t50\t1\n")
        with pytest.raises(ParseError, match=":3:"):
            load_manifest(p)

    def test_wrong_field_count(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text(self.HEADER + "\na.wav\thello\tspk1\t1\n")
        with pytest.raises(ParseError, match="fields"):
            load_manifest(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("foo\tbar\n")
        with pytest.raises(ParseError, match="header"):
            load_manifest(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            load_manifest(tmp_path / "absent.tsv")

    def test_missing_intelligibility_allowed(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text(self.HEADER + "\na.wav\thello\tspk1\t0\t\t1\n")
        recs = load_manifest(p)
        assert recs[0].intelligibility is None

    def test_roundtrip(self, tmp_path):
        recs = [
            UtteranceRecord("s1/w1_1.wav", "hello", "s1", 1, 62.5, 1),
            UtteranceRecord("s2/w1_1.wav", "hello", "s2", 0, None, 1),
        ]
        p = tmp_path / "m.tsv"
        write_manifest(p, recs)
        back = load_manifest(p)
        assert back == recs

    def test_28_speakers(self, tmp_path):
        rows = [self.HEADER]
        for i in range(15):
            rows.append(f"d{i}.wav\tword\tdys{i:02d}\t1\t40\t1")
        for i in range(13):
            rows.append(f"c{i}.wav\tword\tctl{i:02d}\t0\t100\t1")
        p = tmp_path / "m.tsv"
        p.write_text("\n".join(rows) + "\n")
        recs = load_manifest(p)
        assert len({r.speaker_id for r in recs}) == 28


TINY = SyntheticCorpusConfig(
    n_speakers_per_class=1, words=("delete", "window"), severities=(0.8,),
    repetitions=2, seed=7)


class TestSyntheticCorpus:
    def test_record_counts_and_labels(self):
        corpus = generate_synthetic_corpus(TINY)
        assert len(corpus) == 2 * 1 * 2 * 2
        labels = {rec.speaker_id: rec.dysarthric for _, rec in corpus}
        assert labels == {"ctl01": 0, "dys01": 1}

    def test_deterministic(self):
        a = generate_synthetic_corpus(TINY)
        b = generate_synthetic_corpus(TINY)
        for (ca, ra), (cb, rb) in zip(a, b):
            assert np.array_equal(ca.samples, cb.samples)
            assert ra == rb

    def test_duration_stretch_law(self):
        corpus = generate_synthetic_corpus(TINY)
        dur = {0: [], 1: []}
        for clip, rec in corpus:
            dur[rec.dysarthric].append(clip.duration)
        ratio = np.mean(dur[1]) / np.mean(dur[0])
        assert abs(ratio - 1.8) < 0.05

    def test_intelligibility_mapping(self):
        for _, rec in generate_synthetic_corpus(TINY):
            expect = 100.0 * (1.0 - (0.8 if rec.dysarthric else 0.0))
            assert rec.intelligibility == expect

    def test_severity_duration_monotone(self):
        import scipy.stats

        cfg = SyntheticCorpusConfig(
            n_speakers_per_class=4, words=("delete", "window"),
            severities=(0.3, 0.5, 0.7, 0.9), repetitions=1, seed=1)
        per_speaker: dict = {}
        sev = {}
        for clip, rec in generate_synthetic_corpus(cfg):
            per_speaker.setdefault(rec.speaker_id, []).append(clip.duration)
            s = 0.0 if rec.dysarthric == 0 else cfg.severities[
                int(rec.speaker_id[-2:]) - 1]
            sev[rec.speaker_id] = s
        speakers = sorted(per_speaker)
        rho = scipy.stats.spearmanr(
            [sev[s] for s in speakers],
            [np.mean(per_speaker[s]) for s in speakers]).statistic
        assert rho > 0.9

    def test_audio_is_wav_safe(self):
        for clip, _ in generate_synthetic_corpus(TINY):
            assert np.abs(clip.samples).max() <= 1.0
            assert np.isfinite(clip.samples).all()

    def test_every_clip_clears_min_frames(self):
        for clip, _ in generate_synthetic_corpus(TINY):
            n_f = StftConfig().n_frames(clip.samples.size)
            assert n_f >= 28

    def test_save_corpus(self, tmp_path):
        manifest = data.save_synthetic_corpus(TINY, tmp_path)
        recs = load_manifest(manifest)
        assert len(recs) == 8
        clip = read_wav(tmp_path / recs[0].audio_path)
        assert clip.sample_rate == 16000

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SyntheticCorpusConfig(words=())
        with pytest.raises(ValueError):
            SyntheticCorpusConfig(severities=(0.5,))  # wrong count for 4 speakers
        with pytest.raises(ValueError):
            SyntheticCorpusConfig(n_speakers_per_class=1, severities=(1.5,))


class TestBatching:
    def test_partition_sizes(self):
        batches = make_batches(list(range(101)), 50, seed=0, epoch=0)
        assert [len(b) for b in batches] == [50, 50, 1]

    def test_same_seed_epoch_identical(self):
        a = make_batches(list(range(40)), 7, seed=3, epoch=5)
        b = make_batches(list(range(40)), 7, seed=3, epoch=5)
        assert a == b

    def test_epochs_differ(self):
        a = make_batches(list(range(40)), 7, seed=3, epoch=0)
        b = make_batches(list(range(40)), 7, seed=3, epoch=1)
        assert a != b

    def test_union_is_input_multiset(self):
        items = [i % 10 for i in range(33)]
        batches = make_batches(items, 8, seed=1, epoch=2)
        flat = sorted(x for b in batches for x in b)
        assert flat == sorted(items)

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            make_batches([1, 2], 0)


class TestCollate:
    def _items(self):
        corpus = generate_synthetic_corpus(TINY)
        return [prepare_utterance(c, r) for c, r in corpus[:3]]

    def test_shapes_and_masks(self):
        items = self._items()
        batch = collate(items)
        max_nf = max(it.mel.shape[1] for it in items)
        assert batch.mel.shape == (3, 128, max_nf)
        assert batch.frame_mask.shape == (3, max_nf)
        for i, it in enumerate(items):
            nf = it.mel.shape[1]
            assert batch.frame_mask[i, :nf].all()
            assert not batch.frame_mask[i, nf:].any()
            assert np.array_equal(batch.mel[i, :, :nf], it.mel)
            assert np.all(batch.mel[i, :, nf:] == 0)

    def test_labels(self):
        batch = collate(self._items())
        assert set(batch.labels) <= {0.0, 1.0}

    def test_empty_rejected(self):
        with pytest.raises(EmptySequence):
            collate([])


class TestPrepare:
    def test_mel_is_zscored(self):
        clip, rec = generate_synthetic_corpus(TINY)[0]
        item = prepare_utterance(clip, rec)
        assert abs(item.mel.mean()) < 1e-9
        assert abs(item.mel.std() - 1.0) < 1e-9
        assert item.onehot.shape[0] == 27
