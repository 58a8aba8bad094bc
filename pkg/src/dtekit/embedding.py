"""Triphone embeddings: projected last-hidden activations as context features.

A first-stage network trained on tied-state targets maps each context
window to its last hidden activation; a PCA or LDA projection compresses
that activation to a short embedding vector.  Second-stage input vectors
concatenate the embeddings of the frames flanking a block of raw center
MFCC frames.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import binio, dnn
from . import config as cfgmod
from .errors import ConfigError, FormatError, MissingArtifactError
from .features import FeatureMatrix, make_all_windows

PROJ_MAGIC = b"DTEP"
PROJ_VERSION = 1


@dataclass
class Projection:
    """Linear map x -> basis^T (x - mean) with canonical column signs."""

    kind: str               # "pca" or "lda"
    mean: np.ndarray        # (input_dim,)
    basis: np.ndarray       # (input_dim, output_dim)
    criterion: np.ndarray   # per-component eigenvalue / trace-ratio value

    def __post_init__(self):
        if self.kind not in ("pca", "lda"):
            raise ConfigError(f"unknown projection kind {self.kind!r}")
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.basis = np.asarray(self.basis, dtype=np.float64)
        self.criterion = np.asarray(self.criterion, dtype=np.float64)
        if self.basis.shape[0] != self.mean.shape[0]:
            raise ConfigError("projection mean/basis dimensions disagree")

    @property
    def input_dim(self):
        return self.basis.shape[0]

    @property
    def output_dim(self):
        return self.basis.shape[1]

    def apply(self, rows) -> np.ndarray:
        X = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise ConfigError(
                f"projection input dim {self.input_dim} != data dim {X.shape[1]}"
            )
        return (X - self.mean) @ self.basis


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive (first on ties)."""
    out = basis.copy()
    for j in range(out.shape[1]):
        k = int(np.argmax(np.abs(out[:, j])))
        if out[k, j] < 0:
            out[:, j] = -out[:, j]
    return out


def fit_pca(activations, d: int) -> Projection:
    """Top-d eigenvectors of the covariance (denominator n) of mean-centered data.

    Errors out when the data rank (eigenvalues above a relative 1e-10
    threshold) is below d, reporting the achievable rank.
    """
    X = np.asarray(activations, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] <= d:
        raise ConfigError(f"PCA needs more samples than components ({X.shape} for d={d})")
    if not np.all(np.isfinite(X)):
        raise ConfigError("PCA input contains non-finite values")
    if d < 1 or d > X.shape[1]:
        raise ConfigError(f"PCA output dim {d} out of range [1, {X.shape[1]}]")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / X.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    rank = int(np.sum(eigvals > max(eigvals[0], 0.0) * 1e-10))
    if rank < d:
        raise ConfigError(f"PCA rank deficient: requested {d} components, rank is {rank}")
    return Projection(
        kind="pca",
        mean=mean,
        basis=_fix_signs(eigvecs[:, :d]),
        criterion=eigvals[:d].copy(),
    )


def fit_lda(activations, labels, d: int, ridge_scale: float = 1e-4) -> Projection:
    """Top-d generalized eigenvectors of (between-class, within-class) scatter.

    The within-class scatter is ridge-regularized by
    ridge_scale * trace(Sw) / dim to survive starved classes.
    """
    X = np.asarray(activations, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ConfigError("LDA needs one label per sample")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise ConfigError("LDA needs at least 2 classes present")
    if np.any(counts < 2):
        raise ConfigError("LDA needs at least 2 samples in every class")
    if d < 1 or d > classes.size - 1:
        raise ConfigError(
            f"LDA output dim {d} out of range [1, {classes.size - 1}] "
            f"({classes.size} classes present)"
        )
    dim = X.shape[1]
    mean = X.mean(axis=0)
    Sw = np.zeros((dim, dim))
    Sb = np.zeros((dim, dim))
    for cls, cnt in zip(classes, counts):
        rows = X[y == cls]
        mu = rows.mean(axis=0)
        centered = rows - mu
        Sw += centered.T @ centered
        offset = (mu - mean)[:, None]
        Sb += cnt * (offset @ offset.T)
    Sw += np.eye(dim) * (ridge_scale * np.trace(Sw) / dim)
    try:
        eigvals, eigvecs = scipy.linalg.eigh(Sb, Sw)
    except scipy.linalg.LinAlgError as exc:
        raise ConfigError(f"LDA scatter matrices not solvable: {exc}")
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    return Projection(
        kind="lda",
        mean=mean,
        basis=_fix_signs(eigvecs[:, :d]),
        criterion=eigvals[:d].copy(),
    )


@dataclass
class DteConfig:
    """Second-stage input geometry.

    left/right: embedding frames flanking the center block; center: odd
    count of raw MFCC frames; stage1_radius: context radius of the
    first-stage network; dim: embedding width.
    """

    left: int = 6
    right: int = 6
    center: int = 5
    stage1_radius: int = 3
    dim: int = 16

    def validate(self):
        if self.left < 0 or self.right < 0 or (self.left == 0 and self.right == 0):
            raise ConfigError("need left or right embedding context (not both 0)")
        if self.center < 1 or self.center % 2 == 0:
            raise ConfigError("center frame count must be odd and >= 1")
        if self.dim < 1 or self.stage1_radius < 0:
            raise ConfigError("embedding dim must be >= 1 and radius >= 0")

    def stage_two_dim(self, feature_dim: int) -> int:
        return (self.left + self.right) * self.dim + self.center * feature_dim

    @classmethod
    def from_config(cls, values: dict) -> "DteConfig":
        cfg = cls(
            left=cfgmod.get_int(values, "left", cls.left),
            right=cfgmod.get_int(values, "right", cls.right),
            center=cfgmod.get_int(values, "center", cls.center),
            stage1_radius=cfgmod.get_int(values, "stage1_radius", cls.stage1_radius),
            dim=cfgmod.get_int(values, "dim", cls.dim),
        )
        cfg.validate()
        return cfg


def embed(projection: Projection, net: dnn.NetParams, features: FeatureMatrix,
          t: int, radius: int) -> np.ndarray:
    """Embedding of frame t: project the last hidden activation of its window."""
    from .features import make_window

    window = make_window(features, t, radius)
    z = dnn.last_hidden(net, window[None, :])
    return projection.apply(z)[0]


def embed_all(projection: Projection, net: dnn.NetParams, features: FeatureMatrix,
              radius: int, batch_size: int = 2048) -> np.ndarray:
    """T x dim matrix of embeddings for every frame of an utterance."""
    windows = make_all_windows(features, radius)
    out = np.empty((windows.shape[0], projection.output_dim))
    for start in range(0, windows.shape[0], batch_size):
        z = dnn.last_hidden(net, windows[start:start + batch_size])
        out[start:start + batch_size] = projection.apply(z)
    return out


def assemble_stage_two(cfg: DteConfig, projection: Projection, net: dnn.NetParams,
                       features: FeatureMatrix, t: int) -> np.ndarray:
    """Stage-two input vector for frame t.

    Layout: left embeddings (leftmost first), center raw MFCC frames,
    right embeddings (nearest first); out-of-range positions replicate
    the edge frame.
    """
    if not 0 <= t < features.n_frames:
        raise ConfigError(f"frame index {t} out of range [0, {features.n_frames})")
    dte = embed_all(projection, net, features, cfg.stage1_radius)
    return _assemble_row(cfg, dte, features.frames, t)


def _assemble_row(cfg: DteConfig, dte: np.ndarray, frames: np.ndarray, t: int):
    T = frames.shape[0]
    half = cfg.center // 2
    left_idx = np.clip(np.arange(t - half - cfg.left, t - half), 0, T - 1)
    center_idx = np.clip(np.arange(t - half, t + half + 1), 0, T - 1)
    right_idx = np.clip(np.arange(t + half + 1, t + half + 1 + cfg.right), 0, T - 1)
    return np.concatenate([
        dte[left_idx].reshape(-1),
        frames[center_idx].astype(np.float64).reshape(-1),
        dte[right_idx].reshape(-1),
    ])


def assemble_all(cfg: DteConfig, projection: Projection, net: dnn.NetParams,
                 features: FeatureMatrix) -> np.ndarray:
    """T x stage_two_dim matrix covering every frame of an utterance."""
    cfg.validate()
    if projection.output_dim != cfg.dim:
        raise ConfigError(
            f"projection dim {projection.output_dim} != configured embedding dim {cfg.dim}"
        )
    dte = embed_all(projection, net, features, cfg.stage1_radius)
    T = features.n_frames
    frames = features.frames.astype(np.float64)
    half = cfg.center // 2
    pos = np.arange(T)[:, None]
    left_idx = np.clip(pos + np.arange(-half - cfg.left, -half)[None, :], 0, T - 1)
    center_idx = np.clip(pos + np.arange(-half, half + 1)[None, :], 0, T - 1)
    right_idx = np.clip(pos + np.arange(half + 1, half + 1 + cfg.right)[None, :], 0, T - 1)
    return np.concatenate([
        dte[left_idx].reshape(T, -1),
        frames[center_idx].reshape(T, -1),
        dte[right_idx].reshape(T, -1),
    ], axis=1)


def save_projection(proj: Projection, path) -> None:
    with open(path, "wb") as f:
        binio.write_header(f, PROJ_MAGIC, PROJ_VERSION)
        binio.write_str(f, proj.kind)
        binio.write_u32(f, proj.input_dim)
        binio.write_u32(f, proj.output_dim)
        binio.write_array(f, proj.mean, "<f4")
        binio.write_array(f, proj.basis, "<f4")
        binio.write_array(f, proj.criterion, "<f4")


def load_projection(path) -> Projection:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(
            f"projection not found: {path} (run `dtekit fit-projection`)"
        )
    with open(path, "rb") as f:
        binio.read_header(f, PROJ_MAGIC, PROJ_VERSION)
        kind = binio.read_str(f)
        n_in = binio.read_u32(f)
        n_out = binio.read_u32(f)
        mean = binio.read_array(f, (n_in,), "<f4").astype(np.float64)
        basis = binio.read_array(f, (n_in, n_out), "<f4").astype(np.float64)
        criterion = binio.read_array(f, (n_out,), "<f4").astype(np.float64)
    return Projection(kind=kind, mean=mean, basis=basis, criterion=criterion)
