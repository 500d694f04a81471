import numpy as np
import pytest

import groupreg as gr


def random_probs(shape, k, seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.01, 1.0, size=shape + (k,))
    return p / p.sum(axis=-1, keepdims=True)


def test_warp_zero_is_identity():
    rng = np.random.default_rng(0)
    img = rng.normal(size=(12, 10))
    t = np.zeros((12, 10, 2))
    out = gr.warp_image(img, t)
    np.testing.assert_array_equal(out, img)


def test_exponentiate_and_compose():
    t = np.zeros((16, 16, 2))
    np.testing.assert_array_equal(gr.exponentiate(t), t)
    a = np.full((16, 16, 2), 0.5)
    b = np.full((16, 16, 2), 0.25)
    c = gr.compose(a, b)
    np.testing.assert_allclose(c, 0.75)


def test_jacobian_of_identity_is_one():
    det = gr.jacobian_determinant(np.zeros((8, 8, 2)))
    np.testing.assert_allclose(det, 1.0)


def test_fusion_matches_numpy_oracle():
    views = [random_probs((4, 4), 3, s) for s in (1, 2, 3)]
    fused = gr.geometric_mean(views)
    logs = sum(np.log(np.maximum(v, 1e-6)) for v in views) / 3.0
    ref = np.exp(logs)
    ref /= ref.sum(axis=-1, keepdims=True)
    np.testing.assert_allclose(fused, ref, atol=1e-12)
    mean = gr.arithmetic_mean(views)
    np.testing.assert_allclose(mean, sum(views) / 3.0, atol=1e-12)
    assert gr.intrinsic_distance(views) > 0.0
    assert gr.intrinsic_distance([views[0], views[0]]) == pytest.approx(0.0, abs=1e-10)


def test_metrics():
    rng = np.random.default_rng(5)
    a = rng.integers(0, 2, size=(10, 10)).astype(np.int32)
    assert gr.groupwise_dice([a, a.copy()], 1) == pytest.approx(1.0)
    fg = np.ones((10, 10), dtype=np.int32)
    zero = np.zeros((10, 10, 2))
    assert gr.groupwise_warping_index([zero, zero], [zero, zero], fg) == pytest.approx(
        0.0
    )
    disk = np.zeros((12, 12), dtype=np.int32)
    disk[4:8, 4:8] = 1
    shifted = np.roll(disk, 1, axis=0)
    assert gr.groupwise_assd([disk, shifted], 1) > 0.0


def test_random_ffd_deterministic_and_bounded():
    a = gr.random_ffd([24, 24], 8.0, 3.0, 7)
    b = gr.random_ffd([24, 24], 8.0, 3.0, 7)
    np.testing.assert_array_equal(a, b)
    assert np.abs(a).max() <= 3.0 + 1e-9


def test_gumbel_bindings():
    s = gr.gumbel_max_sample([0.1, 0.9, -0.3], 3)
    assert sorted(s) == [0.0, 0.0, 1.0]
    sample, grad = gr.gumbel_rao_gradient([1.0, -1.0, 0.5], [0.2, 0.1, -0.4], 0.5, 4, 9)
    assert len(sample) == 3 and len(grad) == 3
    assert sum(grad) == pytest.approx(0.0, abs=1e-10)


def test_register_group_runs_end_to_end():
    rng = np.random.default_rng(11)
    yy, xx = np.mgrid[0:32, 0:32]
    blob = np.exp(-((xx - 16.0) ** 2 + (yy - 16.0) ** 2) / 40.0)
    images = []
    for j in range(3):
        shift = gr.random_ffd([32, 32], 8.0, 2.0, 100 + j)
        moved = gr.warp_image(blob + 0.05 * j, shift)
        images.append(moved + rng.normal(0, 0.01, size=moved.shape))
    out = gr.register_group(images, ["m0", "m1", "m2"], levels=1, K=2,
                            iters_per_level=5, seed=1)
    assert len(out["forward"]) == 3
    assert out["fused"].shape == (32, 32, 2)
    trace = out["trace"]
    assert trace and trace[-1]["objective"] <= trace[0]["objective"]
    # velocities remain centered
    total = sum(np.asarray(v) for v in out["velocity_totals"])
    np.testing.assert_allclose(total, 0.0, atol=1e-9)
