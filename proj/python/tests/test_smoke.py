import json
from pathlib import Path

import numpy as np
import pytest

import conmo

ROOT = Path(__file__).resolve().parents[2]


@pytest.fixture(scope="module")
def scene():
    spec = (ROOT / "configs" / "two_blob_scene.json").read_text()
    return conmo.render_scene(spec)


def test_render_shapes(scene):
    assert scene["latents"].shape == (8, 4, 32, 32)
    ids = [sid for sid, _ in scene["masks"]]
    assert ids == ["A", "B"]
    assert scene["masks"][0][1].shape == (8, 32, 32)
    start = scene["trajectories"][0][0]
    assert start == pytest.approx((8.0, 6.0), abs=0.5)


def test_tensor_round_trip(tmp_path, scene):
    path = tmp_path / "z.cmt"
    conmo.save_tensor(scene["latents"], path)
    back = conmo.load_tensor(path)
    np.testing.assert_array_equal(back, scene["latents"].astype(np.float32).astype(np.float64))
    bad = scene["latents"].copy()
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(conmo.ConmoError, match="NonFinite"):
        conmo.save_tensor(bad, tmp_path / "bad.cmt")


def test_mask_algebra():
    a = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    b = np.array([[0, 1], [0, 1]], dtype=np.uint8)
    np.testing.assert_array_equal(conmo.mask_union(a, b), [[1, 1], [0, 1]])
    np.testing.assert_array_equal(conmo.set_difference(a, b), [[1, 0], [0, 0]])
    np.testing.assert_array_equal(conmo.complement(a), [[0, 0], [1, 1]])


def test_descriptors_antisymmetric(scene):
    ds = conmo.extract_descriptors(scene["latents"], scene["masks"])
    assert [d.source_id for d in ds] == ["A", "B", "background"]
    for d in ds:
        for (i, j), delta in d.deltas.items():
            np.testing.assert_allclose(d.deltas[(j, i)], -np.asarray(delta))


def test_reproduction_has_zero_loss(scene):
    ds = conmo.extract_descriptors(scene["latents"], scene["masks"])
    assert conmo.guidance_loss(scene["latents"], ds, scene["masks"]) == pytest.approx(0.0, abs=1e-20)
    grad = conmo.guidance_gradient(scene["latents"], ds, scene["masks"])
    assert not grad.any()


def test_zero_noise_inversion(scene):
    z0 = scene["latents"]
    traj = conmo.ddim_invert(z0, n_steps=10)
    alpha = conmo.noise_schedule(10)
    assert len(traj) == 11
    np.testing.assert_allclose(traj[-1], np.sqrt(alpha[-1]) * z0, atol=1e-12)
    np.testing.assert_allclose(conmo.ddim_sample(traj[-1], n_steps=10), z0, atol=1e-10)


def test_refined_round_trip(scene):
    z0 = scene["latents"]
    still = z0[:1].repeat(8, axis=0)
    atlas = [z0, still]
    traj = conmo.ddim_invert(z0, n_steps=20, atlas=atlas, bandwidth=1.0, refinements=10)
    back = conmo.ddim_sample(traj[-1], n_steps=20, atlas=atlas, bandwidth=1.0)
    assert np.abs(back - z0).max() < 1e-3


def test_soft_blend_endpoints():
    assert conmo.soft_blend([1.0, 2.0], [5.0, 6.0], 0.0) == [1.0, 2.0]
    far = conmo.soft_blend([1.0, 2.0], [5.0, 6.0], 1e6)
    np.testing.assert_allclose(far, [5.0, 6.0], rtol=1e-5)


def test_gradcheck():
    r = conmo.gradcheck(instances=3)
    assert r["passed"] and r["max_relative_error"] < 1e-4
    assert not conmo.gradcheck(instances=3, inject_sign_flip=True)["passed"]


def test_edit_self_transfer(scene):
    z0 = scene["latents"]
    traj = conmo.ddim_invert(z0, n_steps=8, atlas=[z0], bandwidth=0.5)
    out, trace = conmo.edit(traj, scene["masks"], conmo.EditPlan(), atlas=[z0], bandwidth=0.5,
                            config=conmo.GuidanceConfig.with_default_window(8))
    assert out.shape == z0.shape
    assert trace and all(len(rec) == 3 for rec in trace)
    a = conmo.detect_subject_track(out, [2.0, 0.0, 0.0, 0.0])
    r = conmo.compare_trajectories(conmo.centroid_trajectory(a), scene["trajectories"][0])
    assert r["rmse_px"] <= 1.0


def test_scene_spec_errors():
    with pytest.raises(Exception):
        conmo.render_scene(json.dumps({"frames": 0}))
