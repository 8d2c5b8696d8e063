import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmfvi import benchmarks as bm
from dmfvi.bpca import BpcaModelConfig, fit_centralized
from dmfvi.missing import (MaskSpec, generate_mar_mask, generate_mnar_occlusion_mask, generate_mnar_threshold_mask,
                           load_mask_csv, reconstruction_rmse, save_mask_csv)
from dmfvi.network import ConfigurationError


def test_mar_zero_ratio_all_observed():
    assert generate_mar_mask(7, 9, 0.0, seed=1).all()


def test_mar_fraction_concentrates():
    for seed in range(10):
        frac = generate_mar_mask(100, 100, 0.2, seed).mean()
        assert 0.78 <= frac <= 0.82


def test_mar_deterministic():
    np.testing.assert_array_equal(generate_mar_mask(20, 30, 0.4, 5), generate_mar_mask(20, 30, 0.4, 5))
    assert not np.array_equal(generate_mar_mask(20, 30, 0.4, 5), generate_mar_mask(20, 30, 0.4, 6))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 40), st.floats(0.0, 0.95), st.integers(0, 1000))
def test_mar_never_leaves_empty_columns(D, N, ratio, seed):
    assert generate_mar_mask(D, N, ratio, seed).any(axis=0).all()


@pytest.mark.parametrize("ratio", [1.0, -0.1, 1.5])
def test_mar_ratio_validated(ratio):
    with pytest.raises(ConfigurationError):
        generate_mar_mask(3, 3, ratio)


def test_threshold_median_split_exact():
    data = np.random.default_rng(0).normal(size=(7, 13))
    mask = generate_mnar_threshold_mask(data, 0.5)
    assert (~mask).sum() == (7 * 13) // 2
    assert data[~mask].max() < data[mask].min()


def test_threshold_small_quantile_all_observed():
    data = np.random.default_rng(1).normal(size=(4, 5))
    assert generate_mnar_threshold_mask(data, 0.01).all()


def test_threshold_missingness_tracks_value():
    data = np.random.default_rng(2).normal(size=(50, 200))
    missing = (~generate_mnar_threshold_mask(data, 0.5)).astype(float)
    # point-biserial correlation is the Pearson correlation with the binary indicator
    assert np.corrcoef(missing.ravel(), data.ravel())[0, 1] < -0.5


def test_threshold_rejects_constant_data():
    with pytest.raises(ConfigurationError):
        generate_mnar_threshold_mask(np.ones((3, 3)), 0.5)
    with pytest.raises(ConfigurationError):
        generate_mnar_threshold_mask(np.arange(4.0), 1.0)


def test_mask_spec_validation():
    assert MaskSpec("mnar_threshold", quantile=0.3).quantile == 0.3
    with pytest.raises(ConfigurationError):
        MaskSpec("mcar")
    with pytest.raises(ConfigurationError):
        MaskSpec("mar", missing_ratio=1.0)


# ---------------------------------------------------------------- occlusion

def test_occlusion_head_on_face():
    # one camera on the +x axis at zero elevation, cube not rotated: only the +x face looks at it
    scene = bm.generate_cube_sequence(60, seed=0, camera_count=1, frames_per_camera=1, elevation_deg=0.0)
    vis = scene.visibility()[0, 0]
    np.testing.assert_array_equal(vis, scene.faces[:, 1])
    assert scene.faces[:, 0].any() and not vis[scene.faces[:, 0]].any()


def test_occlusion_covers_every_point_and_pairs_rows():
    scene = bm.generate_cube_sequence(88, seed=3)
    mask = generate_mnar_occlusion_mask(scene)
    assert mask.shape == (88, 500)
    np.testing.assert_array_equal(mask[:, 0::2], mask[:, 1::2])
    assert mask.any(axis=1).all()
    assert 0.2 < mask.mean() < 0.9


def test_occlusion_follows_measurement_layout():
    scene = bm.generate_cube_sequence(20, seed=1, frames_per_camera=12)
    mm = bm.assemble_measurement(scene, frames=6)
    mask = generate_mnar_occlusion_mask(scene, frames=6)
    assert mask.shape == mm.values.shape
    vis = scene.visibility()
    for col, (c, f, _) in enumerate(mm.provenance):
        np.testing.assert_array_equal(mask[:, col], vis[c, f])


# ---------------------------------------------------------------- rmse

def test_rmse_perfect_factors():
    rng = np.random.default_rng(4)
    W, Z, mu = rng.normal(size=(8, 2)), rng.normal(size=(30, 2)), rng.normal(size=8)
    X = W @ Z.T + mu[:, None]
    post, _ = fit_centralized(X, None, BpcaModelConfig(8, 2), tol=1e-8, max_iter=3000)
    assert reconstruction_rmse(X, np.ones_like(X, bool), post) <= 1e-3


def test_rmse_dense_definition_and_subset():
    rng = np.random.default_rng(5)
    X, Y = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    full = np.ones_like(X, bool)
    assert reconstruction_rmse(X, full, Y) == pytest.approx(np.sqrt(np.mean((X - Y) ** 2)))
    sub = np.zeros_like(full)
    sub[1, 2] = True
    assert reconstruction_rmse(X, sub, Y) == pytest.approx(abs(X[1, 2] - Y[1, 2]))
    with pytest.raises(ConfigurationError):
        reconstruction_rmse(X, ~full, Y)


def test_trained_model_beats_constant_predictor():
    X = np.random.default_rng(6).normal(5.0, np.sqrt(0.8), size=(50, 250))
    mask = generate_mar_mask(50, 250, 0.2, seed=0)
    post, _ = fit_centralized(X, mask, BpcaModelConfig(50, 5))
    const = np.full_like(X, X[mask].mean())
    assert reconstruction_rmse(X, mask, post) < reconstruction_rmse(X, mask, const)


def test_mask_csv_round_trip(tmp_path):
    mask = generate_mar_mask(5, 7, 0.3, seed=2)
    save_mask_csv(tmp_path / "m.csv", mask)
    np.testing.assert_array_equal(load_mask_csv(tmp_path / "m.csv", (5, 7)), mask)
    with pytest.raises(ConfigurationError):
        load_mask_csv(tmp_path / "m.csv", (7, 5))
    (tmp_path / "bad.csv").write_text("0,2\n1,1\n")
    with pytest.raises(ConfigurationError):
        load_mask_csv(tmp_path / "bad.csv")
