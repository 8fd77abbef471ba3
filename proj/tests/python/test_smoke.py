import math

import numpy as np
import pytest

import resinsort as rs


def test_layer_shapes():
    x = np.ones((7, 7, 3))
    out = rs.conv2d(x, np.zeros((2, 3, 3, 3)), np.zeros(2))
    assert out.shape == (5, 5, 2)
    assert rs.maxpool(np.arange(16.0).reshape(4, 4, 1), 2, 2).shape == (2, 2, 1)
    assert np.array_equal(rs.relu(np.array([-1.0, 2.0])), [0.0, 2.0])
    assert rs.fc(np.ones(3), np.eye(3), np.zeros(3)).tolist() == [1.0, 1.0, 1.0]
    with pytest.raises(rs.DimensionError):
        rs.conv2d(np.ones((2, 2, 3)), np.zeros((1, 3, 3, 3)), np.zeros(1))


def test_conv_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 6, 2))
    w = rng.normal(size=(1, 3, 3, 2))
    expected = np.array([[np.sum(x[i:i + 3, j:j + 3, :] * w[0]) for j in range(4)] for i in range(4)])
    assert np.allclose(rs.conv2d(x, w, np.zeros(1))[:, :, 0], expected, atol=1e-12)


def test_loss_values():
    assert rs.triplet_loss([0.0, 0.0], [0.0, 0.0], [0.0, 0.0]) == 0.4
    assert abs(rs.siamese_loss(0.5, 0) - math.log(2.0)) < 1e-12


def test_pca_and_lda():
    rng = np.random.default_rng(1)
    rows = rng.normal(size=(50, 8))
    p = rs.fit_pca(rows, 8)
    ref = np.sort(np.linalg.eigvalsh(np.cov(rows, rowvar=False)))[::-1]
    assert np.allclose(p.eigenvalues, ref, atol=1e-8)
    assert p.project(rows).shape == (50, 8)
    labels = [0] * 25 + [1] * 25
    rows[25:] += 3.0
    assert rs.fit_lda(rows, labels, 1).directions.shape == (1, 8)
    with pytest.raises(ValueError):
        rs.fit_lda(rows, labels, 2)


def test_outliers_and_knn():
    ref = np.array([[0.0], [0.1], [0.2], [5.0]])
    assert rs.detect_outliers(np.array([[0.05], [3.0]]), ref, 0.2, 2) == [False, True]
    assert rs.knn_classify(ref, [0, 0, 0, 1], [0.15], 3) == 0


def test_end_to_end(tmp_path):
    manifest = rs.synth(tmp_path / "data", classes=3, per_class=20, seed=3, image_size=16)
    assert len(manifest["records"]) == 60
    model, history = rs.train(tmp_path / "data", epochs=2, samples_per_epoch=20, batch_size=10, val_samples=10,
                              seed=1)
    assert [h[0] for h in history] == [1, 2]
    assert all(math.isfinite(h[1]) for h in history)
    model.save(tmp_path / "m.rsrt")
    again = rs.load_model(tmp_path / "m.rsrt")
    assert again.kind == "triplet" and again.embedding_width == 128
    emb = again.embed_dataset(tmp_path / "data")
    assert emb["rows"].shape == (60, 128)
    assert np.array_equal(emb["rows"], model.embed_dataset(tmp_path / "data")["rows"])
    with pytest.raises(rs.DataError):
        rs.load_model(tmp_path / "missing.rsrt")
