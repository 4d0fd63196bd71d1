import json

import numpy as np
import pytest

import protolayer as pl


def test_efficient_matches_direct_distances():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 6))
    w = rng.normal(size=(5, 6))
    expected = ((x[:, None, :] - w[None, :, :]) ** 2).sum(-1)
    np.testing.assert_allclose(pl.response_efficient(x, w), expected, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pl.response_naive(x, w), expected, rtol=1e-12, atol=1e-12)


def test_omega_kind():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(2, 4))
    omega = rng.normal(size=(2, 4))
    diff = x[:, None, :] - w[None, :, :]
    expected = ((diff @ omega.T) ** 2).sum(-1)
    got = pl.response_efficient(x, w, kind="omega", omega=omega)
    np.testing.assert_allclose(got, expected, rtol=1e-10, atol=1e-10)


def test_proto_conv_against_numpy_windows():
    rng = np.random.default_rng(2)
    img = rng.normal(size=(5, 6, 2))
    kernels = rng.normal(size=(3, 2, 2, 2))
    out = np.asarray(pl.proto_conv(img, kernels))
    assert out.shape == (4, 5, 3)
    for i in range(4):
        for j in range(5):
            win = img[i : i + 2, j : j + 2, :]
            for k in range(3):
                assert out[i, j, k] == pytest.approx(((win - kernels[k]) ** 2).sum(), abs=1e-10)


def test_wta_tie_goes_to_lowest_index():
    assert pl.wta([2.0, 1.0, 1.0, 3.0]) == 1


def test_glvq_and_rslvq():
    assert pl.glvq_loss([1.0, 3.0], [0, 1], 0) == pytest.approx(-0.5)
    p = np.asarray(pl.rslvq_probs([0.0, 0.0, 5.0], [0, 1, 1]))
    assert p.sum() == pytest.approx(1.0)
    # class 1 owns a second prototype, so it carries more mass
    assert p[1] > p[0]


def test_shape_error_is_raised():
    with pytest.raises(pl.ShapeError):
        pl.response_efficient(np.zeros((2, 3)), np.zeros((2, 4)))
    assert issubclass(pl.ShapeError, pl.Error)


def test_blobs_are_deterministic():
    x1, y1 = pl.gen_blobs(3, 10, 2, 1.0, 5)
    x2, y2 = pl.gen_blobs(3, 10, 2, 1.0, 5)
    assert x1.shape == (30, 2)
    np.testing.assert_array_equal(x1, x2)
    np.testing.assert_array_equal(y1, y2)


def test_train_small_config(tmp_path):
    cfg = {
        "seed": 3,
        "dataset": {"kind": "synthetic_blobs", "n_classes": 3, "dim": 2,
                    "train_per_class": 50, "test_per_class": 20, "spread": 1.0},
        "model": [{"type": "lvq_head", "per_class": 1, "dissimilarity": "euclidean"}],
        "loss": "glvq",
        "optimizer": {"learning_rate": 0.05},
        "epochs": 3,
        "batch_size": 16,
        "output_dir": str(tmp_path / "run"),
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    records = pl.train(str(path))
    assert (tmp_path / "run" / "checkpoint.bin").exists()
    final_test = [r for r in records if r["split"] == "test"][-1]
    assert final_test["accuracy"] > 0.9


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"epochz": 1}))
    with pytest.raises(pl.ConfigError):
        pl.train(str(path))
