"""Shared fixtures: a small synthetic corpus with features and HMM data."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from dtekit import corpus as corpusmod
from dtekit import features as featmod
from dtekit.corpus import SynthSpec, generate_synthetic_corpus


@dataclass
class SmallCorpus:
    root: Path
    manifests: dict
    truth: dict
    feats: dict           # split -> {utt id: FeatureMatrix}, normalized
    phone_set: object
    lexicon: object

    def hmm_data(self, split):
        manifest = self.manifests[split]
        out = []
        for rec in manifest.records:
            seq = corpusmod.expand_transcript(rec.transcript, self.lexicon,
                                              self.phone_set)
            out.append((
                self.feats[split][rec.id].frames.astype(np.float64),
                self.phone_set.to_ids(seq),
            ))
        return out

    def phone_sequences(self, split):
        manifest = self.manifests[split]
        out = {}
        for rec in manifest.records:
            seq = corpusmod.expand_transcript(rec.transcript, self.lexicon,
                                              self.phone_set)
            out[rec.id] = self.phone_set.to_ids(seq)
        return out


def build_small_corpus(root, spec=None, seed=29) -> SmallCorpus:
    spec = spec or SynthSpec(
        n_phones=5, n_words=5, utts_train=10, utts_dev=3, utts_test=3,
        utt_words_min=1, utt_words_max=3, dur_min=10, dur_max=16,
        snr_db=20.0,
    )
    manifests, truth = generate_synthetic_corpus(spec, seed, root)
    cfg = featmod.FrontEndConfig()
    raw = {}
    for split, manifest in manifests.items():
        raw[split] = {}
        for rec in manifest.records:
            u = corpusmod.load_utterance(rec)
            raw[split][rec.id] = featmod.append_deltas(featmod.compute_mfcc(u, cfg))
    stats = featmod.fit_norm(list(raw["train"].values()))
    feats = {
        split: {uid: featmod.apply_norm(fm, stats) for uid, fm in fms.items()}
        for split, fms in raw.items()
    }
    return SmallCorpus(
        root=Path(root),
        manifests=manifests,
        truth=truth,
        feats=feats,
        phone_set=manifests["train"].phone_set,
        lexicon=manifests["train"].lexicon,
    )


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> SmallCorpus:
    return build_small_corpus(tmp_path_factory.mktemp("small_corpus"))
