import math

import numpy as np
import pytest

import hazemeta as hm


def test_transmission_map_hand_value():
    depth = np.full((4, 4), math.log(2.0), dtype=np.float32)
    t = hm.transmission_map(depth, 1.0)
    assert t.shape == (4, 4)
    assert np.allclose(t, 0.5, atol=1e-6)


def test_synthesize_and_invert_round_trip():
    rng = np.random.default_rng(0)
    clear = rng.uniform(0.2, 0.8, size=(3, 8, 8)).astype(np.float32)
    depth = rng.uniform(0.5, 1.5, size=(8, 8)).astype(np.float32)
    hazy = hm.synthesize_hazy(clear, depth, 0.6, 0.9)
    assert hazy.min() >= 0.0 and hazy.max() <= 1.0
    back = hm.invert_hazy(hazy, depth, 0.6, 0.9)
    assert np.allclose(back, clear, atol=1e-4)


def test_distance_aware_aggregate_hand_value():
    prelims = np.array([[0.0, 0.0], [2.0, 2.0], [4.0, 4.0]], dtype=np.float32)
    d = hm.pairwise_mean_distance(prelims)
    assert np.allclose(d, [3.0, 2.0, 3.0], atol=1e-5)
    phi, w = hm.distance_aware_aggregate(prelims)
    assert np.allclose(w, [0.2119, 0.5761, 0.2119], atol=1e-3)
    assert np.allclose(phi, [2.0, 2.0], atol=1e-5)
    assert math.isclose(w.sum(), 1.0, abs_tol=1e-6)


def test_average_equals_distance_aware_for_two():
    rng = np.random.default_rng(1)
    prelims = rng.normal(size=(2, 5, 3, 3)).astype(np.float32)
    phi_avg, _ = hm.average_aggregate(prelims)
    phi_daa, _ = hm.distance_aware_aggregate(prelims)
    assert np.allclose(phi_avg, phi_daa, atol=1e-5)


def test_losses_and_metrics():
    rng = np.random.default_rng(2)
    a = rng.uniform(size=(1, 3, 16, 16)).astype(np.float32)
    assert hm.pixel_loss(a, a) == pytest.approx(0.0)
    assert hm.ssim_loss(a, a) == pytest.approx(0.0, abs=1e-6)
    assert hm.psnr(a[0], a[0]) == pytest.approx(100.0)
    assert hm.ssim_metric(a[0], a[0]) == pytest.approx(1.0, abs=1e-6)
    assert hm.dark_channel_mean(np.zeros((3, 16, 16), np.float32)) == pytest.approx(0.0)

    probs = np.full((3, 2), 0.5, dtype=np.float32)
    assert hm.ce_loss(probs, [0, 1, 0]) == pytest.approx(math.log(2.0), abs=1e-6)


def test_contextual_and_dcr_losses():
    rng = np.random.default_rng(3)
    phi = (3.0 * rng.normal(size=(8, 5, 5))).astype(np.float32)
    other = (3.0 * rng.normal(size=(8, 5, 5))).astype(np.float32)
    self_loss = hm.contextual_loss(phi, phi, bandwidth=0.1)
    cross_loss = hm.contextual_loss(phi, other, bandwidth=0.1)
    assert 0.0 <= self_loss < cross_loss

    v = hm.dcr_loss(0, 1, [2], [phi, phi, other], bandwidth=0.1)
    assert 0.0 <= v <= 1.0


def test_gradient_check_suite():
    results = hm.run_gradient_checks()
    assert len(results) >= 5
    for name, err, passed in results:
        assert passed, f"{name}: max rel error {err}"
