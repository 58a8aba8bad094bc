"""Corpus formats, transcript expansion, and the synthetic generator."""

import math
from pathlib import Path

import numpy as np
import pytest

from dtekit.corpus import (
    CorpusManifest,
    Lexicon,
    PhoneSet,
    SynthSpec,
    expand_transcript,
    generate_synthetic_corpus,
    load_manifest,
    read_wav,
    save_manifest,
    write_wav,
)
from dtekit.errors import ConfigError, MissingArtifactError
from dtekit.features import FrontEndConfig, compute_mfcc
from dtekit.corpus import Utterance


def small_phone_set():
    return PhoneSet(["sil", "k", "ae", "t"], "sil")


def small_lexicon():
    return Lexicon({"cat": [("k", "ae", "t")], "at": [("ae", "t")]})


class TestPhoneSet:
    def test_round_trip(self, tmp_path):
        ps = small_phone_set()
        ps.save(tmp_path / "phones.txt")
        assert PhoneSet.load(tmp_path / "phones.txt") == ps

    def test_duplicate_symbols_rejected(self):
        with pytest.raises(ConfigError):
            PhoneSet(["sil", "a", "a"], "sil")

    def test_whitespace_symbol_rejected(self):
        with pytest.raises(ConfigError):
            PhoneSet(["sil", "a b"], "sil")

    def test_silence_must_be_member(self):
        with pytest.raises(ConfigError):
            PhoneSet(["a", "b", "c"], "sil")

    def test_stable_indices(self):
        ps = small_phone_set()
        assert ps.index("sil") == 0 and ps.index("t") == 3
        assert ps.silence_id == 0


class TestLexicon:
    def test_round_trip(self, tmp_path):
        lex = Lexicon({"cat": [("k", "ae", "t"), ("k", "ae")], "at": [("ae", "t")]})
        lex.save(tmp_path / "lex.txt")
        assert Lexicon.load(tmp_path / "lex.txt") == lex

    def test_first_pron_is_first_listed(self):
        lex = Lexicon({"cat": [("k", "ae", "t"), ("k", "ae")]})
        assert lex.first_pron("cat") == ("k", "ae", "t")

    def test_unknown_phone_rejected(self):
        lex = Lexicon({"cat": [("k", "zz", "t")]})
        with pytest.raises(ConfigError, match="zz"):
            lex.validate(small_phone_set())

    def test_empty_pronunciation_rejected(self):
        with pytest.raises(ConfigError):
            Lexicon({"cat": [()]})


class TestExpandTranscript:
    def test_single_word_with_boundaries(self):
        out = expand_transcript(["cat"], small_lexicon(), small_phone_set())
        assert out == ["sil", "k", "ae", "t", "sil"]

    def test_empty_transcript_is_single_silence(self):
        assert expand_transcript([], small_lexicon(), small_phone_set()) == ["sil"]

    def test_repeated_word_no_interword_silence(self):
        out = expand_transcript(["cat", "cat"], small_lexicon(), small_phone_set(),
                                silence_between_words=False)
        assert out == ["sil", "k", "ae", "t", "k", "ae", "t", "sil"]

    def test_interword_silence(self):
        out = expand_transcript(["cat", "at"], small_lexicon(), small_phone_set(),
                                silence_between_words=True)
        assert out == ["sil", "k", "ae", "t", "sil", "ae", "t", "sil"]

    def test_unknown_word(self):
        with pytest.raises(ConfigError, match="dog"):
            expand_transcript(["dog"], small_lexicon(), small_phone_set())

    def test_length_property(self):
        lex = small_lexicon()
        ps = small_phone_set()
        rng = np.random.default_rng(0)
        words = list(lex.entries)
        for _ in range(25):
            transcript = [words[i] for i in rng.integers(0, len(words), rng.integers(0, 6))]
            for between in (False, True):
                out = expand_transcript(transcript, lex, ps, silence_between_words=between)
                pron_total = sum(len(lex.first_pron(w)) for w in transcript)
                if not transcript:
                    n_sil = 1
                else:
                    n_sil = 2 + ((len(transcript) - 1) if between else 0)
                assert len(out) == pron_total + n_sil


class TestManifest:
    def _write_corpus(self, root):
        ps = small_phone_set()
        lex = small_lexicon()
        ps.save(root / "phones.txt")
        lex.save(root / "lexicon.txt")
        (root / "wav").mkdir()
        rng = np.random.default_rng(1)
        for name in ("u1", "u2"):
            write_wav(root / "wav" / f"{name}.wav", rng.normal(0, 0.1, 8000), 16000)
        return ps, lex

    def test_round_trip(self, tmp_path):
        ps, lex = self._write_corpus(tmp_path)
        text = (
            "#phones phones.txt\n#lexicon lexicon.txt\n"
            "u1\twav/u1.wav\tcat at\n"
            "u2\twav/u2.wav\tcat\n"
        )
        (tmp_path / "train.manifest").write_text(text)
        manifest = load_manifest(tmp_path / "train.manifest")
        assert manifest.split == "train"
        assert len(manifest.records) == 2
        save_manifest(manifest, tmp_path / "copy.manifest")
        again = load_manifest(tmp_path / "copy.manifest", split="train")
        assert manifest.structurally_equal(again)

    def test_unknown_word_names_word_and_utterance(self, tmp_path):
        self._write_corpus(tmp_path)
        (tmp_path / "train.manifest").write_text(
            "#phones phones.txt\n#lexicon lexicon.txt\nu1\twav/u1.wav\tdog\n"
        )
        with pytest.raises(ConfigError, match=r"u1.*dog|dog.*u1"):
            load_manifest(tmp_path / "train.manifest")

    def test_empty_manifest_is_valid(self, tmp_path):
        self._write_corpus(tmp_path)
        (tmp_path / "train.manifest").write_text(
            "#phones phones.txt\n#lexicon lexicon.txt\n"
        )
        manifest = load_manifest(tmp_path / "train.manifest")
        assert manifest.records == []

    def test_missing_audio_names_utterance(self, tmp_path):
        self._write_corpus(tmp_path)
        (tmp_path / "train.manifest").write_text(
            "#phones phones.txt\n#lexicon lexicon.txt\nu9\twav/u9.wav\tcat\n"
        )
        with pytest.raises(MissingArtifactError, match="u9"):
            load_manifest(tmp_path / "train.manifest")

    def test_parse_error_reports_line(self, tmp_path):
        self._write_corpus(tmp_path)
        (tmp_path / "train.manifest").write_text(
            "#phones phones.txt\n#lexicon lexicon.txt\nbroken line without tabs\n"
        )
        with pytest.raises(ConfigError, match=":3"):
            load_manifest(tmp_path / "train.manifest")

    def test_duplicate_id_rejected(self, tmp_path):
        self._write_corpus(tmp_path)
        (tmp_path / "train.manifest").write_text(
            "#phones phones.txt\n#lexicon lexicon.txt\n"
            "u1\twav/u1.wav\tcat\nu1\twav/u1.wav\tat\n"
        )
        with pytest.raises(ConfigError, match="duplicate"):
            load_manifest(tmp_path / "train.manifest")


class TestWav:
    def test_round_trip_close(self, tmp_path):
        rng = np.random.default_rng(7)
        samples = rng.uniform(-0.9, 0.9, 4000).astype(np.float32)
        write_wav(tmp_path / "x.wav", samples, 16000)
        back, rate = read_wav(tmp_path / "x.wav")
        assert rate == 16000
        np.testing.assert_allclose(back, samples, atol=1.0 / 32767)


def _tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


class TestSyntheticCorpus:
    def test_determinism(self, tmp_path):
        spec = SynthSpec(n_phones=5, n_words=4, utts_train=3, utts_dev=1, utts_test=1)
        generate_synthetic_corpus(spec, 42, tmp_path / "a")
        generate_synthetic_corpus(spec, 42, tmp_path / "b")
        a = _tree_bytes(tmp_path / "a")
        b = _tree_bytes(tmp_path / "b")
        assert a.keys() == b.keys()
        for name in a:
            assert a[name] == b[name], f"file {name} differs between identical runs"

    def test_different_seed_differs(self, tmp_path):
        spec = SynthSpec(n_phones=5, n_words=4, utts_train=2, utts_dev=1, utts_test=1)
        generate_synthetic_corpus(spec, 1, tmp_path / "a")
        generate_synthetic_corpus(spec, 2, tmp_path / "b")
        a = _tree_bytes(tmp_path / "a")
        b = _tree_bytes(tmp_path / "b")
        assert any(a[n] != b[n] for n in a if n.endswith(".wav"))

    def test_manifests_load_and_transcripts_match(self, tmp_path):
        spec = SynthSpec(n_phones=6, n_words=5, utts_train=4, utts_dev=2, utts_test=2)
        manifests, truth = generate_synthetic_corpus(spec, 3, tmp_path)
        for split in ("train", "dev", "test"):
            loaded = load_manifest(tmp_path / f"{split}.manifest")
            assert loaded.structurally_equal(manifests[split])
            for rec in loaded.records:
                # emitted phone spans mirror the expanded transcript exactly
                seq = expand_transcript(rec.transcript, loaded.lexicon, loaded.phone_set)
                assert [p for p, _, _ in truth[rec.id]] == seq

    def test_confusable_pairs_share_frequencies(self, tmp_path):
        from dtekit.corpus import _phone_prototypes

        spec = SynthSpec(n_phones=7, confusable_pairs=2)
        protos = _phone_prototypes(spec, np.random.default_rng(0))
        # clones sit at the end: phone 5 clones phone 1, phone 6 clones phone 2
        assert protos[5][0] == protos[1][0]
        assert protos[6][0] == protos[2][0]
        assert protos[5][1] != protos[1][1]

    def test_confusable_pairs_bound(self):
        with pytest.raises(ConfigError):
            SynthSpec(n_phones=5, confusable_pairs=3).validate()

    def test_zero_words_rejected(self):
        with pytest.raises(ConfigError):
            SynthSpec(n_words=0).validate()

    def test_too_few_phones_rejected(self):
        with pytest.raises(ConfigError):
            SynthSpec(n_phones=2).validate()

    def test_short_durations_rejected(self):
        with pytest.raises(ConfigError):
            SynthSpec(dur_min=2).validate()

    def test_noise_free_phones_are_separable(self, tmp_path):
        """SNR=inf: tiny within-phone spread, >95% nearest-centroid accuracy."""
        spec = SynthSpec(
            n_phones=6, n_words=6, utts_train=8, utts_dev=1, utts_test=1,
            dur_min=18, dur_max=28, sil_dur_min=12, sil_dur_max=18,
            snr_db=math.inf,
        )
        manifests, truth = generate_synthetic_corpus(spec, 11, tmp_path)
        cfg = FrontEndConfig()
        frames_by_phone = {}
        interior_by_phone = {}
        frame_len = 400
        shift = 160
        for rec in manifests["train"].records:
            samples, rate = read_wav(rec.audio_path)
            utt = Utterance(rec.id, samples, rate, rec.transcript)
            fm = compute_mfcc(utt, cfg)
            for t in range(fm.n_frames):
                center = t * shift + frame_len // 2
                lo = t * shift
                hi = t * shift + frame_len
                for phone, a, b in truth[rec.id]:
                    if a <= center < b:
                        frames_by_phone.setdefault(phone, []).append(fm.frames[t])
                        if a <= lo and hi <= b:
                            interior_by_phone.setdefault(phone, []).append(fm.frames[t])
                        break
        # near-zero within-phone variance of c1..c12 for fully interior frames
        # (summed across coefficients; the residual spread is the phase
        # dependence of windowed-sinusoid spectral leakage in the log domain)
        global_var = np.var(
            np.concatenate([np.asarray(v) for v in interior_by_phone.values()]), axis=0
        )[1:].sum()
        for phone, rows in interior_by_phone.items():
            if phone == "sil" or len(rows) < 4:
                continue
            within = np.var(np.asarray(rows), axis=0)[1:].sum()
            assert within <= 0.08 * global_var, phone
        # 1-nearest-centroid oracle over all frames labeled by span center
        phones = sorted(frames_by_phone)
        centroids = np.stack([np.mean(frames_by_phone[p], axis=0) for p in phones])
        hits = 0
        total = 0
        for i, phone in enumerate(phones):
            rows = np.asarray(frames_by_phone[phone])
            d = np.linalg.norm(rows[:, None, :] - centroids[None, :, :], axis=2)
            hits += int(np.sum(d.argmin(axis=1) == i))
            total += rows.shape[0]
        assert hits / total > 0.95
