"""Staged experiment pipeline over a shared experiment directory.

Layout: `<exp>/{corpus,features,models,align,embed,decode,reports,logs}`.
Every stage validates its input artifacts, names the producing command
when one is missing, and overwrites its outputs deterministically, so
re-running any stage with identical inputs is safe.

Preset systems: hmm-gmm, hmm-dnn, hmm-dnn-w (context width-matched to
the embedding system's frame span), hmm-dnn-w+d (width-matched and
depth-doubled), dte-pca, dte-lda.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import corpus as corpusmod
from . import decoder as decodermod
from . import dnn, embedding, features, hmm, report
from .errors import ConfigError, MissingArtifactError

log = logging.getLogger(__name__)

SYSTEMS = ("hmm-gmm", "hmm-dnn", "hmm-dnn-w", "hmm-dnn-w+d", "dte-pca", "dte-lda")
SPLITS = ("train", "dev", "test")

# deterministic per-purpose seed offsets on top of the experiment seed
SEED_SYNTH = 0
SEED_NET_INIT = {"hmm-dnn": 101, "hmm-dnn-w": 102, "hmm-dnn-w+d": 103,
                 "dte-pca": 104, "dte-lda": 105}
SEED_NET_SHUFFLE = {"hmm-dnn": 201, "hmm-dnn-w": 202, "hmm-dnn-w+d": 203,
                    "dte-pca": 204, "dte-lda": 205}
SEED_PROJ_SAMPLE = 301


@dataclass
class ExperimentConfig:
    raw: dict
    seed: int
    corpus_dir: str
    synth: corpusmod.SynthSpec
    frontend: features.FrontEndConfig
    hmm_train: hmm.HmmTrainConfig
    dnn1_radius: int
    dnn1_hidden: list
    dnn1_sched: dnn.TrainSchedule
    activation: str
    dte: embedding.DteConfig
    proj_sample_fraction: float
    dnn2_hidden: list
    dnn2_sched: dnn.TrainSchedule
    lm_alpha: float
    lm_scales: list
    penalties: list
    mode: str

    @property
    def wide_radius(self) -> int:
        """Raw-context radius matching the embedding system's frame span."""
        return self.dte.left + self.dte.center // 2

    def net_geometry(self, system: str):
        """(context radius, hidden sizes) of a first-stage style system."""
        if system == "hmm-dnn":
            return self.dnn1_radius, list(self.dnn1_hidden)
        if system == "hmm-dnn-w":
            return self.wide_radius, list(self.dnn1_hidden)
        if system == "hmm-dnn-w+d":
            return self.wide_radius, list(self.dnn1_hidden) * 2
        raise ConfigError(f"{system!r} is not a first-stage network system")

    def validate(self):
        self.synth.validate()
        self.frontend.validate()
        self.dte.validate()
        self.dnn1_sched.validate()
        self.dnn2_sched.validate()
        if self.dnn1_radius < 0:
            raise ConfigError("dnn1.context must be >= 0")
        if not self.dnn1_hidden or not self.dnn2_hidden:
            raise ConfigError("dnn1.hidden and dnn2.hidden must be non-empty")
        if self.dte.dim > self.dnn1_hidden[-1]:
            raise ConfigError(
                f"dte.dim = {self.dte.dim} exceeds the last hidden width "
                f"{self.dnn1_hidden[-1]} of the first-stage network"
            )
        if self.dte.stage1_radius != self.dnn1_radius:
            raise ConfigError(
                f"dte.stage1_radius ({self.dte.stage1_radius}) must equal "
                f"dnn1.context ({self.dnn1_radius})"
            )
        if not self.lm_scales or not self.penalties:
            raise ConfigError("decode.lm_scales and decode.penalties must be non-empty")
        if self.mode not in ("posterior", "posterior-over-prior"):
            raise ConfigError(f"decode.mode {self.mode!r} not in "
                              "{posterior, posterior-over-prior}")
        if not 0 < self.proj_sample_fraction <= 1:
            raise ConfigError("dte.sample_fraction must lie in (0, 1]")


def load_experiment_config(path, seed_override=None) -> ExperimentConfig:
    values = cfgmod.load_kv(path)
    seed = cfgmod.get_int(values, "seed", 17)
    if seed_override is not None:
        seed = seed_override
    hmm_section = cfgmod.section(values, "hmm")
    dnn1_section = cfgmod.section(values, "dnn1")
    dnn2_section = cfgmod.section(values, "dnn2")
    dte_section = cfgmod.section(values, "dte")
    decode_section = cfgmod.section(values, "decode")
    dnn1_radius = cfgmod.get_int(dnn1_section, "context", 3)
    dte_section.setdefault("stage1_radius", str(dnn1_radius))
    min_count_raw = hmm_section.get("min_count", "inf")
    min_count = math.inf if min_count_raw.lower() == "inf" else float(min_count_raw)
    cfg = ExperimentConfig(
        raw=values,
        seed=seed,
        corpus_dir=cfgmod.get_str(values, "corpus.dir", "corpus"),
        synth=corpusmod.SynthSpec.from_config(cfgmod.section(values, "synth")),
        frontend=features.FrontEndConfig.from_config(cfgmod.section(values, "frontend")),
        hmm_train=hmm.HmmTrainConfig(
            em_iters=cfgmod.get_int(hmm_section, "em_iters", 6),
            mixtures=cfgmod.get_int(hmm_section, "mixtures", 2),
            mix_schedule=cfgmod.get_int_list(hmm_section, "mix_schedule", []),
            min_count=min_count,
            max_states=cfgmod.get_int(hmm_section, "max_states", 10_000),
            var_floor_scale=cfgmod.get_float(hmm_section, "var_floor", 1e-4),
        ),
        dnn1_radius=dnn1_radius,
        dnn1_hidden=cfgmod.get_int_list(dnn1_section, "hidden", [64, 64]),
        dnn1_sched=dnn.TrainSchedule.from_config(dnn1_section),
        activation=cfgmod.get_str(dnn1_section, "activation", "relu"),
        dte=embedding.DteConfig.from_config(dte_section),
        proj_sample_fraction=cfgmod.get_float(dte_section, "sample_fraction", 0.1),
        dnn2_hidden=cfgmod.get_int_list(dnn2_section, "hidden", [64, 64]),
        dnn2_sched=dnn.TrainSchedule.from_config(dnn2_section),
        lm_alpha=cfgmod.get_float(decode_section, "alpha", 1.0),
        lm_scales=cfgmod.get_float_list(decode_section, "lm_scales", [0.5, 1.0, 2.0, 4.0]),
        penalties=cfgmod.get_float_list(decode_section, "penalties", [0.0, -1.0, -2.0, -4.0]),
        mode=cfgmod.get_str(decode_section, "mode", "posterior"),
    )
    cfg.validate()
    return cfg


class Experiment:
    """Path bookkeeping for one experiment directory."""

    def __init__(self, cfg: ExperimentConfig, exp_dir):
        self.cfg = cfg
        self.dir = Path(exp_dir)
        corpus_dir = Path(cfg.corpus_dir)
        self.corpus_dir = corpus_dir if corpus_dir.is_absolute() else self.dir / corpus_dir

    def path(self, *parts) -> Path:
        p = self.dir.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def manifest_path(self, split):
        return self.corpus_dir / f"{split}.manifest"

    def feat_dir(self, split):
        return self.dir / "features" / split

    def align_dir(self, split):
        return self.dir / "align" / split

    def embed_dir(self, kind, split):
        return self.dir / "embed" / kind / split

    def model_path(self, name):
        return self.dir / "models" / name

    def net_path(self, system):
        name = {"hmm-dnn": "dnn1.net", "hmm-dnn-w": "dnn-w.net",
                "hmm-dnn-w+d": "dnn-wd.net", "dte-pca": "dnn2-pca.net",
                "dte-lda": "dnn2-lda.net"}[system]
        return self.model_path(name)

    # ---- loading helpers -------------------------------------------------

    def manifests(self) -> dict:
        out = {}
        for split in SPLITS:
            path = self.manifest_path(split)
            if not path.exists():
                raise MissingArtifactError(
                    f"manifest not found: {path} (run `dtekit synth` or point "
                    f"corpus.dir at an existing corpus)"
                )
            out[split] = corpusmod.load_manifest(path, split=split)
        return out

    def split_features(self, manifest) -> dict:
        out = {}
        for rec in manifest.records:
            path = self.feat_dir(manifest.split) / f"{rec.id}.feat"
            out[rec.id] = features.read_features(path, utterance_id=rec.id)
        return out

    def split_alignments(self, manifest) -> dict:
        out = {}
        for rec in manifest.records:
            path = self.align_dir(manifest.split) / f"{rec.id}.ali"
            out[rec.id] = hmm.load_alignment(path, utterance_id=rec.id)
        return out

    def phone_sequences(self, manifest) -> dict:
        """Expanded phone id sequences (silence at boundaries) per utterance."""
        ps = manifest.phone_set
        out = {}
        for rec in manifest.records:
            symbols = corpusmod.expand_transcript(
                rec.transcript, manifest.lexicon, ps,
                silence_between_words=self.cfg.synth.silence_between_words,
            )
            out[rec.id] = ps.to_ids(symbols)
        return out

    def reference_phones(self, manifest) -> dict:
        """Silence-stripped reference phone ids for recognition scoring."""
        sil = manifest.phone_set.silence_id
        return {
            utt_id: [p for p in seq if p != sil]
            for utt_id, seq in self.phone_sequences(manifest).items()
        }

    def hmm_data(self, manifest, feats=None):
        feats = feats or self.split_features(manifest)
        seqs = self.phone_sequences(manifest)
        return [
            (feats[rec.id].frames.astype(np.float64), seqs[rec.id])
            for rec in manifest.records
        ]


# ---- stages ---------------------------------------------------------------


def stage_synth(exp: Experiment) -> None:
    corpusmod.generate_synthetic_corpus(
        exp.cfg.synth, exp.cfg.seed + SEED_SYNTH, exp.corpus_dir
    )
    log.info("synthesized corpus under %s", exp.corpus_dir)


def stage_features(exp: Experiment) -> None:
    """MFCC + deltas, normalized with train-split statistics."""
    manifests = exp.manifests()
    raw = {}
    for split, manifest in manifests.items():
        raw[split] = {}
        for rec in manifest.records:
            utt = corpusmod.load_utterance(rec)
            fm = features.append_deltas(features.compute_mfcc(utt, exp.cfg.frontend))
            raw[split][rec.id] = fm
    stats = features.fit_norm(list(raw["train"].values()))
    features.write_norm_stats(stats, exp.path("features", "norm.feat"))
    for split, fms in raw.items():
        for utt_id, fm in fms.items():
            normalized = features.apply_norm(fm, stats)
            features.write_features(normalized, exp.path("features", split, f"{utt_id}.feat"))
    log.info("wrote features for %s", ", ".join(manifests))


def stage_train_gmm(exp: Experiment) -> None:
    """Monophone flat start, count-threshold tying, tied-state refinement, LM."""
    manifests = exp.manifests()
    train = manifests["train"]
    data = exp.hmm_data(train)
    cfg = exp.cfg.hmm_train
    mono_cfg = hmm.HmmTrainConfig(
        em_iters=cfg.em_iters, mixtures=1, var_floor_scale=cfg.var_floor_scale,
    )
    mono, mono_hist, occupancy = hmm.train_monophone_gmm(data, train.phone_set, mono_cfg)
    hmm.save_model(mono, exp.path("models", "mono.gmm"))
    tied_map = hmm.tie_states(occupancy, len(train.phone_set),
                              cfg.min_count, cfg.max_states)
    tied, tied_hist = hmm.train_tied_triphone_gmm(data, mono, tied_map, cfg)
    hmm.save_model(tied, exp.path("models", "tied.gmm"))
    lm = decodermod.train_bigram_lm(
        list(exp.phone_sequences(train).values()), len(train.phone_set),
        alpha=exp.cfg.lm_alpha,
    )
    decodermod.save_lm(lm, exp.path("models", "phone.lm"))
    em_log = exp.path("logs", "em.log")
    with open(em_log, "w", encoding="utf-8") as f:
        for name, hist in (("mono", mono_hist), ("tied", tied_hist)):
            for it, ll, m in hist:
                f.write(f"{name} iter {it} loglik {ll:.6f} mixtures {m}\n")
    report.plot_em_history(mono_hist, exp.path("reports", "em_mono.png"),
                           title="monophone EM")
    report.plot_em_history(tied_hist, exp.path("reports", "em_tied.png"),
                           title=f"tied-state EM ({tied.n_states} states)")
    log.info("trained GMM models: %d tied states", tied.n_states)


def stage_align(exp: Experiment) -> None:
    model = hmm.load_model(exp.model_path("tied.gmm"))
    manifests = exp.manifests()
    for split, manifest in manifests.items():
        feats = exp.split_features(manifest)
        seqs = exp.phone_sequences(manifest)
        for rec in manifest.records:
            ali = hmm.force_align(feats[rec.id], seqs[rec.id], model)
            hmm.save_alignment(ali, exp.path("align", split, f"{rec.id}.ali"))
    log.info("aligned all splits with the tied-state model")


def _training_arrays(exp: Experiment, manifest, radius):
    feats = exp.split_features(manifest)
    alis = exp.split_alignments(manifest)
    xs, ys = [], []
    for rec in manifest.records:
        fm = feats[rec.id]
        ali = alis[rec.id]
        if ali.n_frames != fm.n_frames:
            raise ConfigError(
                f"utterance {rec.id!r}: {fm.n_frames} frames but alignment "
                f"has {ali.n_frames}; re-run `dtekit align`"
            )
        xs.append(features.make_all_windows(fm, radius).astype(np.float32))
        ys.append(ali.tied)
    return np.concatenate(xs), np.concatenate(ys)


def stage_train_dnn1(exp: Experiment, system: str = "hmm-dnn") -> None:
    """First-stage style network on context windows of tied-state targets."""
    model = hmm.load_model(exp.model_path("tied.gmm"))
    manifests = exp.manifests()
    radius, hidden = exp.cfg.net_geometry(system)
    X_train, y_train = _training_arrays(exp, manifests["train"], radius)
    X_dev, y_dev = _training_arrays(exp, manifests["dev"], radius)
    spec = dnn.NetSpec(
        input_dim=X_train.shape[1],
        hidden=hidden,
        classes=model.n_states,
        activation=exp.cfg.activation,
        seed=exp.cfg.seed + SEED_NET_INIT[system],
    )
    sched = dnn.TrainSchedule(**{
        **exp.cfg.dnn1_sched.__dict__,
        "shuffle_seed": exp.cfg.seed + SEED_NET_SHUFFLE[system],
    })
    log_path = exp.path("logs", f"{system}.log")
    with open(log_path, "w", encoding="utf-8") as f:
        params, history = dnn.train(spec, sched, (X_train, y_train), (X_dev, y_dev),
                                    log_file=f)
    dnn.save_net(params, exp.net_path(system))
    report.plot_training_curves(history, exp.path("reports", f"curve_{system}.png"),
                                title=system)
    log.info("trained %s: input %d, hidden %s", system, spec.input_dim, hidden)


def _sampled_activations(exp: Experiment, manifest, net):
    """Seeded uniform subsample of train frames: (activations, tied labels)."""
    feats = exp.split_features(manifest)
    alis = exp.split_alignments(manifest)
    rng = np.random.default_rng(exp.cfg.seed + SEED_PROJ_SAMPLE)
    acts, labels = [], []
    for rec in manifest.records:
        fm = feats[rec.id]
        keep = rng.random(fm.n_frames) < exp.cfg.proj_sample_fraction
        idx = np.where(keep)[0]
        if idx.size == 0:
            continue
        windows = features.make_all_windows(fm, exp.cfg.dnn1_radius)[idx]
        acts.append(dnn.last_hidden(net, windows))
        labels.append(alis[rec.id].tied[idx])
    if not acts:
        raise ConfigError("projection sample is empty; raise dte.sample_fraction")
    return np.concatenate(acts), np.concatenate(labels)


def _system_kind(system: str) -> str:
    if system not in ("dte-pca", "dte-lda"):
        raise ConfigError(f"{system!r} is not an embedding system (dte-pca, dte-lda)")
    return system.split("-")[1]


def stage_fit_projection(exp: Experiment, system: str, dump_activations=None) -> None:
    kind = _system_kind(system)
    net = dnn.load_net(_require(exp, exp.net_path("hmm-dnn"), "train-dnn1"))
    manifests = exp.manifests()
    acts, labels = _sampled_activations(exp, manifests["train"], net)
    if dump_activations:
        dump = features.FeatureMatrix(
            utterance_id="activations",
            frames=np.hstack([labels[:, None].astype(np.float32),
                              acts.astype(np.float32)]),
            frame_shift_ms=0.0,
            frame_length_ms=0.0,
        )
        features.write_features(dump, dump_activations)
        log.info("dumped %d (label, activation) rows to %s", acts.shape[0],
                 dump_activations)
    if kind == "pca":
        proj = embedding.fit_pca(acts, exp.cfg.dte.dim)
    else:
        # LDA needs >= 2 samples per class; drop starved classes from the sample
        classes, counts = np.unique(labels, return_counts=True)
        keep = np.isin(labels, classes[counts >= 2])
        if np.unique(labels[keep]).size <= exp.cfg.dte.dim:
            raise ConfigError(
                f"LDA sample has {np.unique(labels[keep]).size} usable classes "
                f"for dte.dim = {exp.cfg.dte.dim}; raise dte.sample_fraction"
            )
        proj = embedding.fit_lda(acts[keep], labels[keep], exp.cfg.dte.dim)
    embedding.save_projection(proj, exp.path("models", f"{kind}.proj"))
    log.info("fitted %s projection on %d sampled frames", kind, acts.shape[0])


def stage_assemble(exp: Experiment, system: str) -> None:
    """Materialize stage-two input vectors for every split.

    Vectors are z-scored with train-split statistics before writing: the
    raw embedding components inherit the projection's eigenvalue spread,
    which conditions second-stage SGD poorly when left unnormalized.
    """
    kind = _system_kind(system)
    net = dnn.load_net(_require(exp, exp.net_path("hmm-dnn"), "train-dnn1"))
    proj = embedding.load_projection(
        _require(exp, exp.model_path(f"{kind}.proj"), "fit-projection"))
    manifests = exp.manifests()
    raw = {}
    for split, manifest in manifests.items():
        feats = exp.split_features(manifest)
        raw[split] = {}
        for rec in manifest.records:
            rows = embedding.assemble_all(exp.cfg.dte, proj, net, feats[rec.id])
            raw[split][rec.id] = features.FeatureMatrix(
                utterance_id=rec.id,
                frames=rows.astype(np.float32),
                frame_shift_ms=feats[rec.id].frame_shift_ms,
                frame_length_ms=feats[rec.id].frame_length_ms,
            )
    stats = features.fit_norm(list(raw["train"].values()))
    features.write_norm_stats(stats, exp.path("embed", kind, "norm.feat"))
    for split, fms in raw.items():
        for utt_id, fm in fms.items():
            normalized = features.apply_norm(fm, stats)
            features.write_features(normalized,
                                    exp.path("embed", kind, split, f"{utt_id}.feat"))
    log.info("assembled stage-two vectors (%s)", kind)


def _stage_two_arrays(exp: Experiment, manifest, kind):
    alis = exp.split_alignments(manifest)
    xs, ys = [], []
    for rec in manifest.records:
        path = exp.embed_dir(kind, manifest.split) / f"{rec.id}.feat"
        if not path.exists():
            raise MissingArtifactError(
                f"stage-two vectors not found: {path} (run `dtekit assemble`)"
            )
        fm = features.read_features(path, utterance_id=rec.id)
        xs.append(fm.frames)
        ys.append(alis[rec.id].tied)
    return np.concatenate(xs), np.concatenate(ys)


def stage_train_dnn2(exp: Experiment, system: str) -> None:
    kind = _system_kind(system)
    model = hmm.load_model(exp.model_path("tied.gmm"))
    manifests = exp.manifests()
    X_train, y_train = _stage_two_arrays(exp, manifests["train"], kind)
    X_dev, y_dev = _stage_two_arrays(exp, manifests["dev"], kind)
    expected = exp.cfg.dte.stage_two_dim(_feature_dim(exp))
    if X_train.shape[1] != expected:
        raise ConfigError(
            f"stage-two vectors are {X_train.shape[1]}-dimensional, config "
            f"implies {expected}; re-run `dtekit assemble`"
        )
    spec = dnn.NetSpec(
        input_dim=X_train.shape[1],
        hidden=list(exp.cfg.dnn2_hidden),
        classes=model.n_states,
        activation=exp.cfg.activation,
        seed=exp.cfg.seed + SEED_NET_INIT[system],
    )
    sched = dnn.TrainSchedule(**{
        **exp.cfg.dnn2_sched.__dict__,
        "shuffle_seed": exp.cfg.seed + SEED_NET_SHUFFLE[system],
    })
    with open(exp.path("logs", f"{system}.log"), "w", encoding="utf-8") as f:
        params, history = dnn.train(spec, sched, (X_train, y_train), (X_dev, y_dev),
                                    log_file=f)
    dnn.save_net(params, exp.net_path(system))
    report.plot_training_curves(history, exp.path("reports", f"curve_{system}.png"),
                                title=system)
    log.info("trained %s: input %d", system, spec.input_dim)


def _feature_dim(exp: Experiment) -> int:
    stats_path = exp.dir / "features" / "norm.feat"
    if not stats_path.exists():
        raise MissingArtifactError(
            f"feature statistics not found: {stats_path} (run `dtekit features`)"
        )
    return features.read_norm_stats(stats_path).dim


def _require(exp: Experiment, path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing artifact {path} (run `dtekit {producer}`)")
    return path


def _frame_scores(exp: Experiment, system: str, manifest, model, priors=None):
    """Per-utterance T x S decode score matrices for one split."""
    feats = exp.split_features(manifest)
    scores = {}
    if system == "hmm-gmm":
        all_states = list(range(model.n_states))
        for rec in manifest.records:
            scores[rec.id] = model.emission.score_states(
                feats[rec.id].frames.astype(np.float64), all_states)
        return scores
    if system in ("hmm-dnn", "hmm-dnn-w", "hmm-dnn-w+d"):
        net = dnn.load_net(_require(exp, exp.net_path(system), "train-dnn1"))
        radius, _ = exp.cfg.net_geometry(system)
        for rec in manifest.records:
            windows = features.make_all_windows(feats[rec.id], radius)
            post = dnn.posteriors(net, windows)
            scores[rec.id] = decodermod.scaled_likelihoods(post, exp.cfg.mode, priors)
        return scores
    kind = _system_kind(system)
    net = dnn.load_net(_require(exp, exp.net_path(system), "train-dnn2"))
    for rec in manifest.records:
        path = exp.embed_dir(kind, manifest.split) / f"{rec.id}.feat"
        if not path.exists():
            raise MissingArtifactError(
                f"stage-two vectors not found: {path} (run `dtekit assemble`)"
            )
        fm = features.read_features(path, utterance_id=rec.id)
        post = dnn.posteriors(net, fm.frames)
        scores[rec.id] = decodermod.scaled_likelihoods(post, exp.cfg.mode, priors)
    return scores


def _decode_priors(exp: Experiment, model, manifests):
    if exp.cfg.mode != "posterior-over-prior":
        return None
    alis = exp.split_alignments(manifests["train"])
    return decodermod.state_priors(list(alis.values()), model.n_states)


def stage_decode(exp: Experiment, system: str) -> None:
    """Tune (lm_scale, penalty) on dev, then decode the test split."""
    if system not in SYSTEMS:
        raise ConfigError(f"unknown system {system!r}; expected one of {SYSTEMS}")
    model = hmm.load_model(_require(exp, exp.model_path("tied.gmm"), "train-gmm"))
    lm = decodermod.load_lm(_require(exp, exp.model_path("phone.lm"), "train-gmm"))
    manifests = exp.manifests()
    priors = _decode_priors(exp, model, manifests)
    sil = model.phone_set.silence_id
    mode = "gmm" if system == "hmm-gmm" else exp.cfg.mode

    dev_scores = _frame_scores(exp, system, manifests["dev"], model, priors)
    dev_refs = exp.reference_phones(manifests["dev"])
    params, grid = decodermod.tune_decode_params(
        dev_scores, dev_refs, model.tied_map, model.topology, lm, sil,
        exp.cfg.lm_scales, exp.cfg.penalties, mode,
    )
    test_scores = _frame_scores(exp, system, manifests["test"], model, priors)
    hyps = {}
    for utt_id, sc in test_scores.items():
        hyps[utt_id] = decodermod.viterbi_decode(
            sc, model.tied_map, model.topology, lm, params, sil).phones
    decodermod.write_hypotheses(hyps, model.phone_set,
                                exp.path("decode", system, "test.hyp"))
    tuned_lines = [f"lm_scale={params.lm_scale:g}",
                   f"insertion_penalty={params.insertion_penalty:g}",
                   f"mode={params.mode}"]
    exp.path("decode", system, "tuned.txt").write_text(
        "\n".join(tuned_lines) + "\n", encoding="utf-8")
    grid_lines = ["lm_scale\tpenalty\tdev_acc"]
    grid_lines += [f"{s:g}\t{p:g}\t{a:.6f}" for s, p, a in grid]
    exp.path("decode", system, "grid.tsv").write_text(
        "\n".join(grid_lines) + "\n", encoding="utf-8")
    report.plot_tuning_grid(grid, exp.path("reports", f"grid_{system}.png"),
                            title=f"{system} dev tuning")
    log.info("decoded test with %s: lm_scale=%g penalty=%g",
             system, params.lm_scale, params.insertion_penalty)


def _load_tuned(exp: Experiment, system: str) -> decodermod.DecodeParams:
    path = exp.dir / "decode" / system / "tuned.txt"
    if not path.exists():
        raise MissingArtifactError(f"tuned parameters not found: {path} (run `dtekit decode`)")
    values = cfgmod.parse_kv_text(path.read_text(encoding="utf-8"), source=str(path))
    return decodermod.DecodeParams(
        lm_scale=cfgmod.get_float(values, "lm_scale"),
        insertion_penalty=cfgmod.get_float(values, "insertion_penalty"),
        mode=cfgmod.get_str(values, "mode"),
    )


def stage_score(exp: Experiment, system: str) -> dict:
    """Classification + recognition scores on test; report, TSV, figure."""
    model = hmm.load_model(_require(exp, exp.model_path("tied.gmm"), "train-gmm"))
    manifests = exp.manifests()
    test = manifests["test"]
    priors = _decode_priors(exp, model, manifests)
    sil = model.phone_set.silence_id

    scores = _frame_scores(exp, system, test, model, priors)
    alis = exp.split_alignments(test)
    truth_tied = []
    truth_center = []
    score_rows = []
    for rec in test.records:
        truth_tied.append(alis[rec.id].tied)
        truth_center.append(alis[rec.id].center)
        score_rows.append(scores[rec.id])
    cls = decodermod.classify_frames(
        np.concatenate(score_rows),
        np.concatenate(truth_tied),
        np.concatenate(truth_center),
        model.tied_map.center_phone,
        sil,
    )
    hyp_path = exp.dir / "decode" / system / "test.hyp"
    if not hyp_path.exists():
        raise MissingArtifactError(f"hypotheses not found: {hyp_path} (run `dtekit decode`)")
    hyps = decodermod.read_hypotheses(hyp_path, model.phone_set)
    refs = exp.reference_phones(test)
    rec_scores = decodermod.recognition_score(refs, hyps)
    params = _load_tuned(exp, system)

    text = report.render_score_report(system, "test", cls, rec_scores, params)
    exp.path("reports", f"{system}.report.txt").write_text(text, encoding="utf-8")
    row = {
        "system": system,
        "tied_acc": cls.tied_accuracy,
        "phone_acc": cls.phone_accuracy,
        "rec_acc": rec_scores.accuracy,
        "rec_correctness": rec_scores.correctness,
        "S": rec_scores.substitutions,
        "D": rec_scores.deletions,
        "I": rec_scores.insertions,
        "N": rec_scores.n_ref,
        "frames": cls.frames,
    }
    report.write_scores_tsv([row], exp.path("reports", f"{system}.scores.tsv"))
    report.plot_system_scores([row], exp.path("reports", f"{system}.scores.png"))
    log.info("scored %s: phone %.2f%%, recognition %.2f%%", system,
             100 * (cls.phone_accuracy or 0), 100 * rec_scores.accuracy)
    return row


def run_all(exp: Experiment, systems=SYSTEMS) -> list:
    """Full chain; emits one score report per system plus a summary."""
    stage_synth(exp)
    stage_features(exp)
    stage_train_gmm(exp)
    stage_align(exp)
    stage1_needed = {s for s in systems if s.startswith("hmm-dnn")}
    if any(s.startswith("dte-") for s in systems):
        stage1_needed.add("hmm-dnn")
    for system in ("hmm-dnn", "hmm-dnn-w", "hmm-dnn-w+d"):
        if system in stage1_needed:
            stage_train_dnn1(exp, system)
    for system in ("dte-pca", "dte-lda"):
        if system in systems:
            stage_fit_projection(exp, system)
            stage_assemble(exp, system)
            stage_train_dnn2(exp, system)
    rows = []
    for system in systems:
        stage_decode(exp, system)
        rows.append(stage_score(exp, system))
    report.write_scores_tsv(rows, exp.path("reports", "summary.tsv"))
    report.plot_system_scores(rows, exp.path("reports", "summary.png"))
    return rows
