"""Corpus handling: phone sets, lexica, manifests, and synthetic audio.

On-disk formats
---------------
Phone set: one symbol per line, first line ``!sil <symbol>`` naming the
silence phone.  Lexicon: ``<word>\\t<phone> <phone> ...``, one line per
pronunciation (repeat the word for alternates).  Manifest: header lines
``#phones <path>`` and ``#lexicon <path>`` followed by one record per
line: ``<id>\\t<relative audio path>\\t<transcript words>``.

The synthetic generator stands in for a real corpus: every phone is a
stationary sum of a few sinusoids plus Gaussian noise at a configurable
SNR, so phones are separable at high SNR and confusable at low SNR.
"""

import math
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import ConfigError, MissingArtifactError


class PhoneSet:
    """Ordered phone inventory with a designated silence symbol.

    Phone indices are stable for the lifetime of a trained system; every
    serialized model echoes the inventory it was trained with.
    """

    def __init__(self, phones, silence_symbol):
        phones = list(phones)
        if len(set(phones)) != len(phones):
            raise ConfigError("phone symbols must be unique")
        for p in phones:
            if not p or any(c.isspace() for c in p):
                raise ConfigError(f"bad phone symbol {p!r}: empty or contains whitespace")
        if silence_symbol not in phones:
            raise ConfigError(f"silence symbol {silence_symbol!r} not in phone set")
        self.phones = tuple(phones)
        self.silence_symbol = silence_symbol
        self._index = {p: i for i, p in enumerate(self.phones)}

    def __len__(self):
        return len(self.phones)

    def __eq__(self, other):
        return (
            isinstance(other, PhoneSet)
            and self.phones == other.phones
            and self.silence_symbol == other.silence_symbol
        )

    def __contains__(self, symbol):
        return symbol in self._index

    def index(self, symbol) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise ConfigError(f"unknown phone {symbol!r}")

    @property
    def silence_id(self) -> int:
        return self._index[self.silence_symbol]

    def to_ids(self, symbols):
        return [self.index(s) for s in symbols]

    def save(self, path) -> None:
        lines = [f"!sil {self.silence_symbol}"]
        lines.extend(self.phones)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PhoneSet":
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"phone set file not found: {path}")
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("!sil "):
            raise ConfigError(f"{path}:1: first line must be '!sil <symbol>'")
        silence = lines[0][len("!sil "):].strip()
        phones = [ln.strip() for ln in lines[1:] if ln.strip()]
        return cls(phones, silence)


class Lexicon:
    """Word -> pronunciations map; the first listed pronunciation wins."""

    def __init__(self, entries):
        self.entries = {}
        for word, prons in entries.items():
            prons = [tuple(p) for p in prons]
            if not prons or any(len(p) == 0 for p in prons):
                raise ConfigError(f"word {word!r} needs at least one non-empty pronunciation")
            self.entries[word] = prons

    def __eq__(self, other):
        return isinstance(other, Lexicon) and self.entries == other.entries

    def __contains__(self, word):
        return word in self.entries

    def first_pron(self, word):
        try:
            return self.entries[word][0]
        except KeyError:
            raise ConfigError(f"unknown word {word!r}")

    def validate(self, phone_set: PhoneSet) -> None:
        for word, prons in self.entries.items():
            for pron in prons:
                for phone in pron:
                    if phone not in phone_set:
                        raise ConfigError(
                            f"word {word!r}: pronunciation uses unknown phone {phone!r}"
                        )

    def save(self, path) -> None:
        lines = []
        for word, prons in self.entries.items():
            for pron in prons:
                lines.append(f"{word}\t{' '.join(pron)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Lexicon":
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"lexicon file not found: {path}")
        entries = {}
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            if "\t" not in line:
                raise ConfigError(f"{path}:{lineno}: expected '<word>\\t<phones>'")
            word, _, phones = line.partition("\t")
            pron = tuple(phones.split())
            if not word or not pron:
                raise ConfigError(f"{path}:{lineno}: empty word or pronunciation")
            entries.setdefault(word, []).append(pron)
        return cls(entries)


@dataclass
class Utterance:
    id: str
    samples: np.ndarray  # float32 mono in [-1, 1]
    sample_rate: int
    transcript: list


@dataclass
class ManifestRecord:
    id: str
    audio_path: Path  # absolute, resolved against the manifest location
    rel_path: str     # as written in the manifest
    transcript: list


@dataclass
class CorpusManifest:
    split: str
    records: list
    phone_set: PhoneSet
    lexicon: Lexicon
    phones_ref: str = "phones.txt"
    lexicon_ref: str = "lexicon.txt"

    def __post_init__(self):
        if self.split not in ("train", "dev", "test"):
            raise ConfigError(f"bad split {self.split!r}: expected train, dev or test")

    def ids(self):
        return [r.id for r in self.records]

    def structurally_equal(self, other) -> bool:
        if self.split != other.split or self.phone_set != other.phone_set:
            return False
        if self.lexicon != other.lexicon or len(self.records) != len(other.records):
            return False
        for a, b in zip(self.records, other.records):
            if (a.id, a.rel_path, a.transcript) != (b.id, b.rel_path, b.transcript):
                return False
        return True


def load_manifest(path, split=None) -> CorpusManifest:
    """Load and eagerly validate a manifest.

    Raises ConfigError with a line number on parse problems, a
    MissingArtifactError naming the utterance for absent audio, and a
    ConfigError naming word and utterance for out-of-lexicon words.
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"manifest not found: {path}")
    base = path.parent
    if split is None:
        split = path.stem.split(".")[0]
    phones_ref = None
    lexicon_ref = None
    records = []
    seen = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#phones "):
            phones_ref = line[len("#phones "):].strip()
            continue
        if line.startswith("#lexicon "):
            lexicon_ref = line[len("#lexicon "):].strip()
            continue
        if line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ConfigError(
                f"{path}:{lineno}: expected '<id>\\t<audio path>\\t<transcript>', got {line!r}"
            )
        utt_id, rel, words = parts
        if utt_id in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate utterance id {utt_id!r}")
        seen.add(utt_id)
        records.append(
            ManifestRecord(
                id=utt_id,
                audio_path=(base / rel).resolve(),
                rel_path=rel,
                transcript=words.split(),
            )
        )
    if phones_ref is None or lexicon_ref is None:
        raise ConfigError(f"{path}: missing '#phones <path>' or '#lexicon <path>' header")
    phone_set = PhoneSet.load(base / phones_ref)
    lexicon = Lexicon.load(base / lexicon_ref)
    lexicon.validate(phone_set)
    for rec in records:
        if not rec.audio_path.exists():
            raise MissingArtifactError(
                f"utterance {rec.id!r}: audio file missing: {rec.audio_path}"
            )
        for word in rec.transcript:
            if word not in lexicon:
                raise ConfigError(f"utterance {rec.id!r}: word {word!r} not in lexicon")
    return CorpusManifest(
        split=split,
        records=records,
        phone_set=phone_set,
        lexicon=lexicon,
        phones_ref=phones_ref,
        lexicon_ref=lexicon_ref,
    )


def save_manifest(manifest: CorpusManifest, path) -> None:
    lines = [f"#phones {manifest.phones_ref}", f"#lexicon {manifest.lexicon_ref}"]
    for rec in manifest.records:
        lines.append(f"{rec.id}\t{rec.rel_path}\t{' '.join(rec.transcript)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def expand_transcript(transcript, lexicon: Lexicon, phone_set: PhoneSet,
                      silence_between_words=False):
    """Expand words to phones using each word's first pronunciation.

    Silence is prepended and appended; with `silence_between_words` it is
    also inserted at every word boundary.
    """
    sil = phone_set.silence_symbol
    if not transcript:
        return [sil]
    phones = [sil]
    for i, word in enumerate(transcript):
        if silence_between_words and i > 0:
            phones.append(sil)
        phones.extend(lexicon.first_pron(word))
    phones.append(sil)
    return phones


def write_wav(path, samples, sample_rate) -> None:
    """16-bit PCM mono WAV; the one audio format used throughout."""
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32767.0),
                  -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())


def read_wav(path) -> tuple:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"audio file not found: {path}")
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise ConfigError(f"{path}: expected 16-bit mono PCM")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32767.0
    return samples, rate


@dataclass
class SynthSpec:
    """Parameters of the synthetic corpus generator.

    Durations are counted in 10 ms analysis frames at `sample_rate`.
    `snr_db = inf` disables the additive noise entirely.
    """

    n_phones: int = 8            # total phones including silence
    n_words: int = 10
    word_len_min: int = 2
    word_len_max: int = 4
    utts_train: int = 40
    utts_dev: int = 8
    utts_test: int = 8
    utt_words_min: int = 2
    utt_words_max: int = 5
    dur_min: int = 5             # frames per phone
    dur_max: int = 12
    sil_dur_min: int = 4
    sil_dur_max: int = 8
    snr_db: float = 10.0
    sample_rate: int = 16000
    amplitude: float = 0.15      # per-phone rms of the clean prototype
    silence_between_words: bool = False
    confusable_pairs: int = 0    # phone pairs sharing frequencies, differing
                                 # only in partial amplitude ratios

    def validate(self) -> None:
        if self.n_phones < 3:
            raise ConfigError("synthetic corpus needs at least 3 phones (incl. silence)")
        if self.n_words < 2:
            raise ConfigError("synthetic corpus needs at least 2 words")
        if not 0 <= self.confusable_pairs <= (self.n_phones - 1) // 2:
            raise ConfigError(
                f"confusable_pairs must lie in [0, {(self.n_phones - 1) // 2}] "
                f"for {self.n_phones} phones"
            )
        for name in ("utts_train", "utts_dev", "utts_test"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.dur_min < 3:
            raise ConfigError("per-phone duration must be at least 3 frames")
        if self.dur_max < self.dur_min or self.word_len_max < self.word_len_min:
            raise ConfigError("range maxima must be >= minima")
        if self.utt_words_min < 1 or self.utt_words_max < self.utt_words_min:
            raise ConfigError("bad words-per-utterance range")
        if self.sample_rate <= 0:
            raise ConfigError("sample rate must be positive")

    @classmethod
    def from_config(cls, values: dict) -> "SynthSpec":
        spec = cls(
            n_phones=cfgmod.get_int(values, "phones", cls.n_phones),
            n_words=cfgmod.get_int(values, "words", cls.n_words),
            word_len_min=cfgmod.get_int(values, "word_len_min", cls.word_len_min),
            word_len_max=cfgmod.get_int(values, "word_len_max", cls.word_len_max),
            utts_train=cfgmod.get_int(values, "utts_train", cls.utts_train),
            utts_dev=cfgmod.get_int(values, "utts_dev", cls.utts_dev),
            utts_test=cfgmod.get_int(values, "utts_test", cls.utts_test),
            utt_words_min=cfgmod.get_int(values, "utt_words_min", cls.utt_words_min),
            utt_words_max=cfgmod.get_int(values, "utt_words_max", cls.utt_words_max),
            dur_min=cfgmod.get_int(values, "dur_min", cls.dur_min),
            dur_max=cfgmod.get_int(values, "dur_max", cls.dur_max),
            sil_dur_min=cfgmod.get_int(values, "sil_dur_min", cls.sil_dur_min),
            sil_dur_max=cfgmod.get_int(values, "sil_dur_max", cls.sil_dur_max),
            snr_db=cfgmod.parse_snr(values.get("snr_db", str(cls.snr_db))),
            sample_rate=cfgmod.get_int(values, "sample_rate", cls.sample_rate),
            amplitude=cfgmod.get_float(values, "amplitude", cls.amplitude),
            silence_between_words=cfgmod.get_bool(
                values, "silence_between_words", cls.silence_between_words
            ),
            confusable_pairs=cfgmod.get_int(values, "confusable_pairs",
                                            cls.confusable_pairs),
        )
        spec.validate()
        return spec


def _phone_prototypes(spec: SynthSpec, rng):
    """Sinusoid recipe per phone: (freqs, amps), silence empty.

    Base frequencies sit on a mel-spaced grid between 300 Hz and 3.5 kHz
    with a small seeded jitter, plus one or two partials, so prototypes
    are distinct but share spectral territory.  The last
    `confusable_pairs` voiced phones clone the frequencies of the first
    ones with flattened amplitude ratios: cleanly separable without
    noise, heavily confusable for a frame-level model at low SNR.
    """
    n_voiced = spec.n_phones - 1
    n_unique = n_voiced - spec.confusable_pairs
    mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    inv = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    grid = inv(np.linspace(mel(300.0), mel(3500.0), n_unique))
    nyquist = spec.sample_rate / 2.0
    protos = [([], [])]  # index 0 = silence
    for base in grid:
        base = base * (1.0 + rng.uniform(-0.03, 0.03))
        n_partials = int(rng.integers(2, 4))  # 2 or 3 sinusoids
        freqs = [base]
        amps = [1.0]
        for k in range(1, n_partials):
            f = base * (k + 1) * (1.0 + rng.uniform(-0.02, 0.02))
            if f < nyquist * 0.95:
                freqs.append(f)
                amps.append(0.5 ** k)
        protos.append((freqs, amps))
    for k in range(spec.confusable_pairs):
        freqs, amps = protos[1 + k]
        protos.append((list(freqs), [a ** 0.4 for a in amps]))
    return protos


def _render_segment(proto, n_samples, sample_rate, amplitude):
    freqs, amps = proto
    if not freqs:
        return np.zeros(n_samples)
    t = np.arange(n_samples) / sample_rate
    sig = np.zeros(n_samples)
    for f, a in zip(freqs, amps):
        sig += a * np.sin(2.0 * np.pi * f * t)
    rms = np.sqrt(np.mean(sig ** 2))
    if rms > 0:
        sig *= amplitude / rms
    return sig


def generate_synthetic_corpus(spec: SynthSpec, seed: int, out_dir):
    """Emit a three-split corpus under `out_dir`; deterministic per (spec, seed).

    Writes phones.txt, lexicon.txt, one WAV per utterance under wav/,
    ground-truth phone spans under refs/, and {train,dev,test}.manifest.
    Returns ({split: CorpusManifest}, {utterance id: [(phone, start_sample,
    end_sample), ...]}).
    """
    spec.validate()
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "refs").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    phones = ["sil"] + [f"p{i:02d}" for i in range(1, spec.n_phones)]
    phone_set = PhoneSet(phones, "sil")
    protos = _phone_prototypes(spec, rng)

    voiced = phones[1:]
    entries = {}
    for w in range(spec.n_words):
        length = int(rng.integers(spec.word_len_min, spec.word_len_max + 1))
        pron = tuple(voiced[int(rng.integers(0, len(voiced)))] for _ in range(length))
        entries[f"w{w:02d}"] = [pron]
    lexicon = Lexicon(entries)

    phone_set.save(out_dir / "phones.txt")
    lexicon.save(out_dir / "lexicon.txt")

    shift = spec.sample_rate // 100  # 10 ms
    noise_sigma = 0.0
    if math.isfinite(spec.snr_db):
        noise_sigma = spec.amplitude * 10.0 ** (-spec.snr_db / 20.0)

    manifests = {}
    truth = {}
    counts = {"train": spec.utts_train, "dev": spec.utts_dev, "test": spec.utts_test}
    word_names = list(entries.keys())
    for split in ("train", "dev", "test"):
        records = []
        for u in range(counts[split]):
            utt_id = f"{split}_{u:04d}"
            n_words = int(rng.integers(spec.utt_words_min, spec.utt_words_max + 1))
            words = [word_names[int(rng.integers(0, len(word_names)))] for _ in range(n_words)]
            seq = expand_transcript(words, lexicon, phone_set,
                                    silence_between_words=spec.silence_between_words)
            pieces = []
            spans = []
            cursor = 0
            for phone in seq:
                if phone == "sil":
                    dur = int(rng.integers(spec.sil_dur_min, spec.sil_dur_max + 1))
                else:
                    dur = int(rng.integers(spec.dur_min, spec.dur_max + 1))
                n = dur * shift
                pieces.append(_render_segment(protos[phone_set.index(phone)], n,
                                              spec.sample_rate, spec.amplitude))
                spans.append((phone, cursor, cursor + n))
                cursor += n
            clean = np.concatenate(pieces)
            if noise_sigma > 0:
                clean = clean + rng.normal(0.0, noise_sigma, clean.shape)
            samples = np.clip(clean, -0.999, 0.999)
            rel = f"wav/{utt_id}.wav"
            write_wav(out_dir / rel, samples, spec.sample_rate)
            ref_lines = [f"{p}\t{a}\t{b}" for p, a, b in spans]
            (out_dir / "refs" / f"{utt_id}.tsv").write_text(
                "\n".join(ref_lines) + "\n", encoding="utf-8"
            )
            truth[utt_id] = spans
            records.append(ManifestRecord(
                id=utt_id,
                audio_path=(out_dir / rel).resolve(),
                rel_path=rel,
                transcript=words,
            ))
        manifest = CorpusManifest(
            split=split, records=records, phone_set=phone_set, lexicon=lexicon
        )
        save_manifest(manifest, out_dir / f"{split}.manifest")
        manifests[split] = manifest
    return manifests, truth


def load_utterance(record: ManifestRecord) -> Utterance:
    samples, rate = read_wav(record.audio_path)
    return Utterance(id=record.id, samples=samples, sample_rate=rate,
                     transcript=list(record.transcript))


def load_ref_spans(corpus_dir, utt_id):
    """Ground-truth (phone, start_sample, end_sample) spans from the generator."""
    path = Path(corpus_dir) / "refs" / f"{utt_id}.tsv"
    if not path.exists():
        raise MissingArtifactError(f"reference spans not found: {path} (run `dtekit synth`)")
    spans = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        phone, a, b = line.split("\t")
        spans.append((phone, int(a), int(b)))
    return spans
