"""MFCC front-end and DNN input conditioning.

Produces 13 static cepstra per frame (24 triangular mel filters, log
energies, orthonormal DCT-II), appends delta and delta-delta streams,
z-scores dimensions against train-split statistics, and assembles
context windows with edge replication.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fftpack import dct

from . import binio
from . import config as cfgmod
from .errors import ConfigError, MissingArtifactError

FEAT_MAGIC = b"DTEF"
FEAT_VERSION = 1


@dataclass
class FrontEndConfig:
    frame_ms: float = 25.0
    shift_ms: float = 10.0
    preemphasis: float = 0.97
    n_mels: int = 24
    n_ceps: int = 13
    energy_floor: float = 1e-10
    use_energy: bool = False   # replace c0 with log frame energy

    def validate(self):
        if self.frame_ms <= 0 or self.shift_ms <= 0:
            raise ConfigError("frame and shift lengths must be positive")
        if self.shift_ms > self.frame_ms:
            raise ConfigError("frame shift must not exceed frame length")
        if self.n_mels < 2 or self.n_ceps < 1 or self.n_ceps > self.n_mels:
            raise ConfigError("need 2 <= n_ceps <= n_mels")
        if self.energy_floor <= 0:
            raise ConfigError("energy floor must be positive")

    @classmethod
    def from_config(cls, values: dict) -> "FrontEndConfig":
        cfg = cls(
            frame_ms=cfgmod.get_float(values, "frame_ms", cls.frame_ms),
            shift_ms=cfgmod.get_float(values, "shift_ms", cls.shift_ms),
            preemphasis=cfgmod.get_float(values, "preemphasis", cls.preemphasis),
            n_mels=cfgmod.get_int(values, "n_mels", cls.n_mels),
            n_ceps=cfgmod.get_int(values, "n_ceps", cls.n_ceps),
            energy_floor=cfgmod.get_float(values, "energy_floor", cls.energy_floor),
            use_energy=cfgmod.get_bool(values, "use_energy", cls.use_energy),
        )
        cfg.validate()
        return cfg


@dataclass
class FeatureMatrix:
    utterance_id: str
    frames: np.ndarray  # T x D float32
    frame_shift_ms: float
    frame_length_ms: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ConfigError("feature matrix must be T x D with T >= 1")
        if not np.all(np.isfinite(self.frames)):
            raise ConfigError(f"utterance {self.utterance_id!r}: non-finite features")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate, nfft, n_mels):
    """Triangular filters spanning 0..Nyquist.

    Returns (weights: n_mels x nfft//2+1, center frequencies in Hz).
    Triangles are sampled at exact bin frequencies, so each filter's
    center is analytically mel_to_hz of its grid point.
    """
    nyquist = sample_rate / 2.0
    points = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_mels + 2))
    bin_freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    weights = np.zeros((n_mels, nfft // 2 + 1))
    for j in range(n_mels):
        left, center, right = points[j], points[j + 1], points[j + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        weights[j] = np.maximum(0.0, np.minimum(up, down))
    return weights, points[1:-1]


def _fft_size(frame_len):
    n = 1
    while n < frame_len:
        n *= 2
    return n


def compute_mfcc(utterance, cfg: FrontEndConfig) -> FeatureMatrix:
    """Static 13-coefficient MFCCs; deltas are appended separately.

    T = floor((N - frame_len) / shift) + 1 frames; errors out when the
    audio is shorter than one analysis frame.
    """
    cfg.validate()
    x = np.asarray(utterance.samples, dtype=np.float64)
    sr = utterance.sample_rate
    frame_len = int(round(cfg.frame_ms * sr / 1000.0))
    shift = int(round(cfg.shift_ms * sr / 1000.0))
    if x.ndim != 1 or x.size == 0:
        raise ConfigError(f"utterance {utterance.id!r}: empty audio")
    if x.size < frame_len:
        raise ConfigError(
            f"utterance {utterance.id!r}: {x.size} samples is shorter than one "
            f"{frame_len}-sample frame"
        )
    # pre-emphasis, first sample passed through unchanged
    emph = np.concatenate(([x[0]], x[1:] - cfg.preemphasis * x[:-1]))
    n_frames = (x.size - frame_len) // shift + 1
    idx = np.arange(frame_len)[None, :] + shift * np.arange(n_frames)[:, None]
    frames = emph[idx] * np.hamming(frame_len)

    nfft = _fft_size(frame_len)
    spectrum = np.fft.rfft(frames, nfft)
    power = (spectrum.real ** 2 + spectrum.imag ** 2) / nfft
    weights, _ = mel_filterbank(sr, nfft, cfg.n_mels)
    fbank = power @ weights.T
    log_fbank = np.log(np.maximum(fbank, cfg.energy_floor))
    ceps = dct(log_fbank, type=2, axis=1, norm="ortho")[:, : cfg.n_ceps]
    if cfg.use_energy:
        energy = np.maximum(np.sum(power, axis=1), cfg.energy_floor)
        ceps[:, 0] = np.log(energy)
    return FeatureMatrix(
        utterance_id=utterance.id,
        frames=ceps.astype(np.float32),
        frame_shift_ms=cfg.shift_ms,
        frame_length_ms=cfg.frame_ms,
    )


def _delta(values, k_max=2):
    """Regression delta with edge replication: sum_k k*(c[t+k]-c[t-k]) / (2*sum k^2)."""
    T = values.shape[0]
    denom = 2.0 * sum(k * k for k in range(1, k_max + 1))
    out = np.zeros_like(values)
    for k in range(1, k_max + 1):
        fwd = values[np.minimum(np.arange(T) + k, T - 1)]
        bwd = values[np.maximum(np.arange(T) - k, 0)]
        out += k * (fwd - bwd)
    return out / denom


def append_deltas(static: FeatureMatrix, k_max=2) -> FeatureMatrix:
    base = static.frames.astype(np.float64)
    d1 = _delta(base, k_max)
    d2 = _delta(d1, k_max)
    return FeatureMatrix(
        utterance_id=static.utterance_id,
        frames=np.hstack([base, d1, d2]).astype(np.float32),
        frame_shift_ms=static.frame_shift_ms,
        frame_length_ms=static.frame_length_ms,
    )


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray  # floored at 1e-6 when fitted

    @property
    def dim(self):
        return self.mean.shape[0]


def fit_norm(feature_matrices) -> NormStats:
    """Per-dimension mean/std over all frames of the fitting (train) set."""
    if not feature_matrices:
        raise ConfigError("cannot fit normalization on an empty feature set")
    stacked = np.concatenate([fm.frames.astype(np.float64) for fm in feature_matrices])
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), 1e-6)
    return NormStats(mean=mean, std=std)


def apply_norm(fm: FeatureMatrix, stats: NormStats) -> FeatureMatrix:
    if fm.dim != stats.dim:
        raise ConfigError(
            f"normalization dimension mismatch: features {fm.dim}, stats {stats.dim}"
        )
    frames = (fm.frames.astype(np.float64) - stats.mean) / stats.std
    return FeatureMatrix(
        utterance_id=fm.utterance_id,
        frames=frames.astype(np.float32),
        frame_shift_ms=fm.frame_shift_ms,
        frame_length_ms=fm.frame_length_ms,
    )


def make_window(fm: FeatureMatrix, t: int, radius: int) -> np.ndarray:
    """Frames t-P..t+P concatenated, out-of-range indices replicate the edges."""
    T = fm.n_frames
    if not 0 <= t < T:
        raise ConfigError(f"frame index {t} out of range [0, {T})")
    idx = np.clip(np.arange(t - radius, t + radius + 1), 0, T - 1)
    return fm.frames[idx].reshape(-1)


def make_all_windows(fm: FeatureMatrix, radius: int) -> np.ndarray:
    """T x D*(2P+1) matrix of every frame's context window."""
    T = fm.n_frames
    offsets = np.arange(-radius, radius + 1)
    idx = np.clip(np.arange(T)[:, None] + offsets[None, :], 0, T - 1)
    return fm.frames[idx].reshape(T, -1)


def write_features(fm: FeatureMatrix, path) -> None:
    with open(path, "wb") as f:
        binio.write_header(f, FEAT_MAGIC, FEAT_VERSION)
        binio.write_u32(f, fm.n_frames)
        binio.write_u32(f, fm.dim)
        binio.write_f32(f, fm.frame_shift_ms)
        binio.write_f32(f, fm.frame_length_ms)
        binio.write_array(f, fm.frames, "<f4")


def read_features(path, utterance_id=None) -> FeatureMatrix:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"feature file not found: {path} (run `dtekit features`)")
    with open(path, "rb") as f:
        binio.read_header(f, FEAT_MAGIC, FEAT_VERSION)
        T = binio.read_u32(f)
        D = binio.read_u32(f)
        shift = binio.read_f32(f)
        length = binio.read_f32(f)
        frames = binio.read_array(f, (T, D), "<f4")
    if utterance_id is None:
        utterance_id = path.stem
    return FeatureMatrix(
        utterance_id=utterance_id,
        frames=frames,
        frame_shift_ms=shift,
        frame_length_ms=length,
    )


def write_norm_stats(stats: NormStats, path) -> None:
    """Stored in the feature-file format: row 0 mean, row 1 std."""
    fm = FeatureMatrix(
        utterance_id="norm",
        frames=np.vstack([stats.mean, stats.std]).astype(np.float32),
        frame_shift_ms=0.0,
        frame_length_ms=0.0,
    )
    write_features(fm, path)


def read_norm_stats(path) -> NormStats:
    fm = read_features(path, utterance_id="norm")
    if fm.n_frames != 2:
        raise ConfigError(f"{path}: expected 2 rows (mean, std), got {fm.n_frames}")
    return NormStats(
        mean=fm.frames[0].astype(np.float64),
        std=fm.frames[1].astype(np.float64),
    )
