"""Projections (PCA/LDA), embedding extraction, and stage-two assembly."""

import numpy as np
import pytest

from helpers import power_iteration_eigs
from dtekit.dnn import NetSpec, init, last_hidden
from dtekit.embedding import (
    DteConfig,
    Projection,
    assemble_all,
    assemble_stage_two,
    embed,
    embed_all,
    fit_lda,
    fit_pca,
    load_projection,
    save_projection,
)
from dtekit.errors import ConfigError
from dtekit.features import FeatureMatrix


def fmatrix(frames, uid="u"):
    return FeatureMatrix(utterance_id=uid, frames=np.asarray(frames, np.float32),
                         frame_shift_ms=10.0, frame_length_ms=25.0)


class TestFitPca:
    def test_line_in_three_dims(self):
        rng = np.random.default_rng(0)
        direction = np.array([1.0, 2.0, -1.0])
        direction /= np.linalg.norm(direction)
        coords = rng.normal(0, 3.0, 200)
        X = coords[:, None] * direction[None, :] + np.array([5.0, -1.0, 0.5])
        proj = fit_pca(X, 1)
        cosine = abs(float(proj.basis[:, 0] @ direction))
        assert cosine > 1 - 1e-6
        assert proj.criterion[0] == pytest.approx(np.var(coords), rel=1e-6)

    def test_complete_basis_reconstructs(self):
        rng = np.random.default_rng(1)
        X = rng.normal(0, 2, (60, 6))
        proj = fit_pca(X, 6)
        projected = proj.apply(X)
        reconstructed = projected @ proj.basis.T + proj.mean
        np.testing.assert_allclose(reconstructed, X, rtol=1e-4, atol=1e-6)

    def test_matches_power_iteration_oracle(self):
        rng = np.random.default_rng(2)
        X = rng.normal(0, 1, (50, 8)) @ rng.normal(0, 1, (8, 8))
        proj = fit_pca(X, 3)
        centered = X - X.mean(axis=0)
        cov = centered.T @ centered / X.shape[0]
        oracle_vals, _ = power_iteration_eigs(cov, 3, iters=2000)
        np.testing.assert_allclose(proj.criterion, oracle_vals, atol=1e-6)
        # projected variance equals the eigenvalue, component by component
        variances = proj.apply(X).var(axis=0)
        np.testing.assert_allclose(variances, oracle_vals, atol=1e-6)

    def test_orthonormal_and_ordered(self):
        rng = np.random.default_rng(3)
        X = rng.normal(0, 1, (80, 7))
        proj = fit_pca(X, 5)
        gram = proj.basis.T @ proj.basis
        np.testing.assert_allclose(gram, np.eye(5), atol=1e-5)
        assert np.all(np.diff(proj.criterion) <= 1e-12)

    def test_sign_canonicalization_is_deterministic(self):
        rng = np.random.default_rng(4)
        X = rng.normal(0, 1, (40, 5))
        a = fit_pca(X, 3)
        b = fit_pca(X.copy(), 3)
        np.testing.assert_array_equal(a.basis, b.basis)
        for j in range(3):
            k = int(np.argmax(np.abs(a.basis[:, j])))
            assert a.basis[k, j] > 0

    def test_rank_deficient_reports_rank(self):
        rng = np.random.default_rng(5)
        X = np.tile(rng.normal(size=(1, 4)), (30, 1)) + rng.normal(
            0, 1, (30, 1)) * np.array([1.0, 0.0, 0.0, 0.0])
        with pytest.raises(ConfigError, match="rank is 1"):
            fit_pca(X, 3)

    def test_too_few_samples(self):
        with pytest.raises(ConfigError):
            fit_pca(np.zeros((3, 5)), 3)


class TestFitLda:
    def test_two_class_direction(self):
        rng = np.random.default_rng(6)
        mu1 = np.array([3.0, 0.0, 0.0, 0.0, 0.0])
        mu2 = np.array([-3.0, 0.0, 0.0, 0.0, 0.0])
        X = np.vstack([
            rng.normal(0, 1, (100, 5)) + mu1,
            rng.normal(0, 1, (100, 5)) + mu2,
        ])
        y = np.array([0] * 100 + [1] * 100)
        proj = fit_lda(X, y, 1)
        direction = (mu1 - mu2) / np.linalg.norm(mu1 - mu2)
        v = proj.basis[:, 0] / np.linalg.norm(proj.basis[:, 0])
        assert abs(float(v @ direction)) > 0.99

    def test_single_class_rejected(self):
        rng = np.random.default_rng(7)
        with pytest.raises(ConfigError, match="2 classes"):
            fit_lda(rng.normal(size=(20, 3)), np.zeros(20, int), 1)

    def test_output_dim_bounded_by_classes(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(30, 4))
        y = np.array([0, 1, 2] * 10)
        with pytest.raises(ConfigError, match="out of range"):
            fit_lda(X, y, 3)

    def test_separable_classes_beat_random_projection(self):
        """1-NN accuracy in LDA space >= Monte-Carlo random 2-D projections."""
        rng = np.random.default_rng(9)
        centers = np.array([
            [4.0, 0, 0, 0, 0], [0, 4.0, 0, 0, 0], [0, 0, 4.0, 0, 0],
        ])
        X = np.vstack([rng.normal(0, 1.0, (30, 5)) + c for c in centers])
        y = np.repeat(np.arange(3), 30)
        proj = fit_lda(X, y, 2)

        def one_nn_accuracy(Z):
            d = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=2)
            np.fill_diagonal(d, np.inf)
            return float(np.mean(y[d.argmin(axis=1)] == y))

        lda_acc = one_nn_accuracy(proj.apply(X))
        random_accs = []
        for _ in range(20):
            R = rng.normal(size=(5, 2))
            random_accs.append(one_nn_accuracy((X - X.mean(axis=0)) @ R))
        assert lda_acc >= np.mean(random_accs)


def make_net(input_dim, hidden, seed=0):
    spec = NetSpec(input_dim=input_dim, hidden=list(hidden), classes=3, seed=seed)
    return init(spec)


class TestEmbed:
    def test_complete_basis_round_trip(self):
        rng = np.random.default_rng(10)
        net = make_net(input_dim=4 * 3, hidden=[6], seed=11)
        fm = fmatrix(rng.normal(size=(20, 4)))
        acts = last_hidden(net, np.stack([
            np.concatenate([fm.frames[max(0, min(19, t + k))] for k in (-1, 0, 1)])
            for t in range(20)
        ]))
        proj = fit_pca(acts, 6)
        dte = embed(proj, net, fm, 5, radius=1)
        recovered = dte @ proj.basis.T + proj.mean
        np.testing.assert_allclose(recovered, acts[5], rtol=1e-4, atol=1e-6)

    def test_identical_windows_identical_embeddings(self):
        net = make_net(input_dim=3 * 3, hidden=[5], seed=12)
        frames = np.zeros((8, 3), np.float32)
        frames[:] = [1.0, -2.0, 0.5]
        fm = fmatrix(frames)
        proj = Projection(kind="pca", mean=np.zeros(5),
                          basis=np.eye(5)[:, :2], criterion=np.ones(2))
        np.testing.assert_array_equal(
            embed(proj, net, fm, 3, radius=1), embed(proj, net, fm, 4, radius=1))

    def test_locality(self):
        """Embedding of frame t ignores features outside t-P1..t+P1."""
        rng = np.random.default_rng(13)
        net = make_net(input_dim=3 * 3, hidden=[5], seed=14)
        proj = Projection(kind="pca", mean=np.zeros(5),
                          basis=np.eye(5)[:, :3], criterion=np.ones(3))
        base = rng.normal(size=(12, 3)).astype(np.float32)
        changed = base.copy()
        changed[9:] += 10.0
        a = embed(proj, net, fmatrix(base), 4, radius=1)
        b = embed(proj, net, fmatrix(changed), 4, radius=1)
        np.testing.assert_array_equal(a, b)

    def test_embed_all_matches_per_frame(self):
        rng = np.random.default_rng(14)
        net = make_net(input_dim=2 * 5, hidden=[4], seed=15)
        proj = Projection(kind="pca", mean=np.zeros(4),
                          basis=np.eye(4)[:, :2], criterion=np.ones(2))
        fm = fmatrix(rng.normal(size=(9, 2)))
        stacked = embed_all(proj, net, fm, radius=2)
        for t in range(9):
            np.testing.assert_allclose(stacked[t], embed(proj, net, fm, t, radius=2),
                                        atol=1e-12)


class TestAssemble:
    def _setup(self, T=15, D=3, hidden=6, d=2, seed=16):
        rng = np.random.default_rng(seed)
        cfg = DteConfig(left=1, right=0, center=1, stage1_radius=1, dim=d)
        net = make_net(input_dim=D * 3, hidden=[hidden], seed=seed)
        proj = Projection(kind="pca", mean=np.zeros(hidden),
                          basis=np.eye(hidden)[:, :d], criterion=np.ones(d))
        fm = fmatrix(rng.normal(size=(T, D)))
        return cfg, proj, net, fm

    def test_minimal_length(self):
        """left=1, right=0, center=1, d=2 over 39-dim frames: 2 + 39 = 41."""
        rng = np.random.default_rng(17)
        cfg = DteConfig(left=1, right=0, center=1, stage1_radius=1, dim=2)
        net = make_net(input_dim=39 * 3, hidden=[5], seed=18)
        proj = Projection(kind="pca", mean=np.zeros(5),
                          basis=np.eye(5)[:, :2], criterion=np.ones(2))
        fm = fmatrix(rng.normal(size=(10, 39)))
        vec = assemble_stage_two(cfg, proj, net, fm, 4)
        assert vec.shape == (41,)
        assert cfg.stage_two_dim(39) == 41

    def test_paper_scale_length(self):
        """left=right=15, center=21, d=300: 30*300 + 21*39 = 9819."""
        cfg = DteConfig(left=15, right=15, center=21, stage1_radius=1, dim=300)
        assert cfg.stage_two_dim(39) == 9819
        net = make_net(input_dim=39 * 3, hidden=[300], seed=19)
        proj = Projection(kind="pca", mean=np.zeros(300),
                          basis=np.eye(300), criterion=np.ones(300))
        fm = fmatrix(np.random.default_rng(20).normal(size=(40, 39)))
        vec = assemble_stage_two(cfg, proj, net, fm, 20)
        assert vec.shape == (9819,)

    def test_both_contexts_zero_rejected(self):
        with pytest.raises(ConfigError):
            DteConfig(left=0, right=0, center=1, dim=2).validate()

    def test_even_center_rejected(self):
        with pytest.raises(ConfigError):
            DteConfig(left=1, right=1, center=2, dim=2).validate()

    def test_layout_order(self):
        """Left embeddings leftmost-first, center frames, right nearest-first."""
        cfg = DteConfig(left=2, right=2, center=3, stage1_radius=1, dim=2)
        rng = np.random.default_rng(21)
        net = make_net(input_dim=2 * 3, hidden=[4], seed=22)
        proj = Projection(kind="pca", mean=np.zeros(4),
                          basis=np.eye(4)[:, :2], criterion=np.ones(2))
        fm = fmatrix(rng.normal(size=(20, 2)))
        t = 10
        vec = assemble_stage_two(cfg, proj, net, fm, t)
        dte = embed_all(proj, net, fm, radius=1)
        half = 1  # center // 2
        expected = np.concatenate([
            dte[t - half - 2], dte[t - half - 1],                    # left block
            fm.frames[t - 1].astype(np.float64),
            fm.frames[t].astype(np.float64),
            fm.frames[t + 1].astype(np.float64),                     # center block
            dte[t + half + 1], dte[t + half + 2],                    # right block
        ])
        np.testing.assert_allclose(vec, expected, atol=1e-12)

    def test_edge_replication_left_slots(self):
        cfg = DteConfig(left=3, right=1, center=3, stage1_radius=1, dim=2)
        rng = np.random.default_rng(23)
        net = make_net(input_dim=2 * 3, hidden=[4], seed=24)
        proj = Projection(kind="pca", mean=np.zeros(4),
                          basis=np.eye(4)[:, :2], criterion=np.ones(2))
        fm = fmatrix(rng.normal(size=(12, 2)))
        vec = assemble_stage_two(cfg, proj, net, fm, 0)
        dte0 = embed(proj, net, fm, 0, radius=1)
        for k in range(3):
            np.testing.assert_allclose(vec[k * 2:(k + 1) * 2], dte0, atol=1e-12)

    def test_assemble_all_matches_per_frame(self):
        cfg, proj, net, fm = self._setup()
        rows = assemble_all(cfg, proj, net, fm)
        assert rows.shape == (fm.n_frames, cfg.stage_two_dim(fm.dim))
        for t in (0, 3, 14):
            np.testing.assert_allclose(rows[t],
                                       assemble_stage_two(cfg, proj, net, fm, t),
                                       atol=1e-12)

    def test_assembly_locality(self):
        """Row t only sees frames within center//2 + left/right + radius."""
        cfg = DteConfig(left=2, right=2, center=3, stage1_radius=1, dim=2)
        rng = np.random.default_rng(25)
        net = make_net(input_dim=2 * 3, hidden=[4], seed=26)
        proj = Projection(kind="pca", mean=np.zeros(4),
                          basis=np.eye(4)[:, :2], criterion=np.ones(2))
        base = rng.normal(size=(30, 2)).astype(np.float32)
        changed = base.copy()
        changed[25:] += 5.0  # beyond t + 1 + 2 + 1 = frame 19 for t = 15... keep margin
        t = 15
        a = assemble_stage_two(cfg, proj, net, fmatrix(base), t)
        b = assemble_stage_two(cfg, proj, net, fmatrix(changed), t)
        np.testing.assert_array_equal(a, b)

    def test_pipeline_count_preservation(self):
        """Assembled rows feed a stage-two net one posterior row per frame."""
        from dtekit.dnn import NetSpec, init as net_init, posteriors

        cfg, proj, net, fm = self._setup(T=12)
        rows = assemble_all(cfg, proj, net, fm)
        spec2 = NetSpec(input_dim=rows.shape[1], hidden=[5], classes=4, seed=27)
        post = posteriors(net_init(spec2), rows)
        assert post.shape == (12, 4)


class TestProjectionFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(28)
        X = rng.normal(size=(40, 6))
        proj = fit_pca(X, 3)
        save_projection(proj, tmp_path / "p.proj")
        back = load_projection(tmp_path / "p.proj")
        assert back.kind == "pca"
        np.testing.assert_allclose(back.basis, proj.basis, atol=1e-6)
        np.testing.assert_allclose(back.criterion, proj.criterion, atol=1e-5)
        save_projection(back, tmp_path / "p2.proj")
        assert (tmp_path / "p.proj").read_bytes() == (tmp_path / "p2.proj").read_bytes()
