import math

import numpy as np
import pytest

from pcal.errors import CheckpointFormatError, InvalidParameterError
from pcal.geom import PointCloud, normalize_cloud
from pcal.labels import LabelMap, Provenance
from pcal.nnet import (SIGMA_MIN, LossWeights, ModelParams, estimate_sigma,
                       forward, init_or_resize_head, load_checkpoint,
                       save_checkpoint, segment_loss, smoothness_loss,
                       smoothness_loss_exact, softmax, total_loss,
                       transform_reg)


def _labels(values, num_classes=3):
    arr = np.asarray(values, dtype=np.int32)
    prov = np.where(arr != -1, np.int8(Provenance.SEED), np.int8(0))
    return LabelMap(arr, prov, num_classes)


# --- init / resize ---

def test_resize_preserves_backbone_bitwise():
    m2 = init_or_resize_head(None, 2, rng_seed=7)
    m3 = init_or_resize_head(m2, 3, rng_seed=7)
    for name, v in m2.params.items():
        if not name.startswith("head."):
            assert (m3.params[name] == v).all()
    assert m3.params["head.W2"].shape == (128, 3)
    assert m3.num_classes == 3


def test_resize_deterministic():
    a = init_or_resize_head(None, 3, rng_seed=11)
    b = init_or_resize_head(None, 3, rng_seed=11)
    for name in a.params:
        assert (a.params[name] == b.params[name]).all()


def test_init_rejects_small_c():
    with pytest.raises(InvalidParameterError):
        init_or_resize_head(None, 1, rng_seed=0)


def test_forward_reproducible(random_cloud):
    m = init_or_resize_head(None, 3, rng_seed=5)
    l1, a1 = forward(m, random_cloud)
    l2, a2 = forward(init_or_resize_head(None, 3, rng_seed=5), random_cloud)
    np.testing.assert_array_equal(l1, l2)
    np.testing.assert_array_equal(a1, a2)


# --- forward ---

def test_forward_single_point():
    m = init_or_resize_head(None, 4, rng_seed=0)
    logits, A = forward(m, np.zeros((1, 3)))
    assert logits.shape == (1, 4)
    assert np.isfinite(logits).all()
    assert A.shape == (3, 3)


def test_forward_duplicate_points(random_cloud):
    m = init_or_resize_head(None, 3, rng_seed=1)
    pts = random_cloud.positions
    dup = np.vstack([pts, pts])
    logits, _ = forward(m, dup)
    np.testing.assert_allclose(logits[:len(pts)], logits[len(pts):], atol=1e-5)


def test_forward_permutation_equivariant(random_cloud):
    m = init_or_resize_head(None, 3, rng_seed=1)
    perm = np.random.default_rng(0).permutation(len(random_cloud))
    base, A0 = forward(m, random_cloud.positions)
    permuted, A1 = forward(m, random_cloud.positions[perm])
    np.testing.assert_allclose(permuted, base[perm], atol=1e-5)
    np.testing.assert_allclose(A0, A1, atol=1e-6)


def test_forward_rejects_nonfinite():
    m = init_or_resize_head(None, 2, rng_seed=0)
    with pytest.raises(InvalidParameterError):
        forward(m, np.array([[np.nan, 0, 0]]))


def test_softmax_rows_sum_to_one(random_cloud):
    m = init_or_resize_head(None, 3, rng_seed=2)
    logits, _ = forward(m, random_cloud)
    np.testing.assert_allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-5)


# --- segment loss ---

def test_segment_loss_uniform():
    logits = np.zeros((4, 3))
    assert segment_loss(logits, _labels([0, -1, -1, -1])) == pytest.approx(math.log(3))


def test_segment_loss_saturated():
    logits = np.zeros((3, 3))
    logits[np.arange(3), [0, 1, 2]] = 20.0
    assert segment_loss(logits, _labels([0, 1, 2])) < 1e-6


def test_segment_loss_two_point_hand_value():
    logits = np.array([[1.0, 0.0], [0.0, 1.0]])
    want = (-math.log(math.exp(1) / (math.exp(1) + 1))
            - math.log(1 / (1 + math.exp(1)))) / 2
    got = segment_loss(logits, _labels([0, 0], num_classes=2))
    assert got == pytest.approx(want, abs=1e-6)
    assert got == pytest.approx(0.8133, abs=5e-5)


def test_segment_loss_requires_labels():
    with pytest.raises(InvalidParameterError):
        segment_loss(np.zeros((2, 3)), _labels([-1, -1]))


def test_segment_loss_gradient_matches_fd():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(6, 3))
    labels = _labels([0, 2, -1, 1, -1, 0])
    loss, grad = segment_loss(logits, labels, with_grad=True)
    h = 1e-6
    for i in range(6):
        for c in range(3):
            lp, lm = logits.copy(), logits.copy()
            lp[i, c] += h
            lm[i, c] -= h
            fd = (segment_loss(lp, labels) - segment_loss(lm, labels)) / (2 * h)
            assert grad[i, c] == pytest.approx(fd, abs=1e-6)


# --- transform regularizer ---

def test_transform_reg_values():
    assert transform_reg(np.eye(3)) == 0.0
    th = 0.7
    rot = np.array([[math.cos(th), -math.sin(th), 0],
                    [math.sin(th), math.cos(th), 0], [0, 0, 1.0]])
    assert transform_reg(rot) == pytest.approx(0.0, abs=1e-6)
    assert transform_reg(2 * np.eye(3)) == pytest.approx(27.0)


def test_transform_reg_gradient_matches_fd():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(3, 3))
    _, g = transform_reg(A, with_grad=True)
    h = 1e-6
    for i in range(3):
        for j in range(3):
            ap, am = A.copy(), A.copy()
            ap[i, j] += h
            am[i, j] -= h
            fd = (transform_reg(ap) - transform_reg(am)) / (2 * h)
            assert g[i, j] == pytest.approx(fd, abs=1e-5)


# --- sigma ---

def test_sigma_degenerate_clamped():
    c = PointCloud(positions=[[0, 0, 0], [3, 0, 0]])
    assert estimate_sigma(c) == SIGMA_MIN


def test_sigma_collinear_hand_value():
    c = PointCloud(positions=[[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    assert estimate_sigma(c) == pytest.approx(2 / 9)


def test_sigma_sampled_close_to_exact(rng):
    pts = rng.normal(size=(300, 3))
    c = PointCloud(positions=pts)
    exact = estimate_sigma(c, sample_pairs=300 * 299 // 2)
    sampled = estimate_sigma(c, sample_pairs=20000, rng_seed=1)
    assert abs(sampled - exact) / exact < 0.05


def test_sigma_errors():
    with pytest.raises(InvalidParameterError):
        estimate_sigma(PointCloud(positions=[[0, 0, 0]]))
    with pytest.raises(InvalidParameterError):
        estimate_sigma(PointCloud(positions=np.eye(3)), sample_pairs=0)


# --- smoothness ---

def test_smoothness_identical_rows_zero():
    logits = np.tile([0.3, -1.2, 2.0], (5, 1))
    pts = np.random.default_rng(0).normal(size=(5, 3))
    pairs = np.array([[0, 1], [2, 4], [3, 3]])
    assert smoothness_loss(logits, pts, 0.5, pairs) == pytest.approx(0.0, abs=1e-12)


def test_smoothness_two_point_hand_value():
    sigma = 0.37
    pts = np.array([[0.0, 0, 0], [sigma, 0, 0]])
    logits = np.array([[1.0, 0.0], [0.0, 1.0]])
    got = smoothness_loss(logits, pts, sigma, np.array([[0, 1]]))
    p = 1 / (1 + math.exp(-1))
    kl = p * 1 + (1 - p) * (-1)  # log-prob gaps are +1 and -1
    assert got == pytest.approx(kl * math.exp(-1), abs=1e-9)
    assert got == pytest.approx(0.17002, abs=5e-5)


def test_smoothness_self_pair_zero():
    logits = np.random.default_rng(1).normal(size=(4, 3))
    pts = np.random.default_rng(2).normal(size=(4, 3))
    assert smoothness_loss(logits, pts, 1.0, np.array([[2, 2]])) == pytest.approx(0.0, abs=1e-12)


def test_smoothness_decreasing_in_distance():
    logits = np.array([[1.0, 0.0], [0.0, 1.0]])
    vals = [smoothness_loss(logits, np.array([[0.0, 0, 0], [d, 0, 0]]), 1.0,
                            np.array([[0, 1]]))
            for d in (0.1, 0.5, 1.0, 2.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_smoothness_nonnegative(rng):
    logits = rng.normal(size=(32, 3))
    pts = rng.normal(size=(32, 3))
    pairs = rng.integers(0, 32, size=(200, 2))
    assert smoothness_loss(logits, pts, 0.3, pairs) >= 0.0


def test_smoothness_sampled_close_to_exact(rng):
    n = 128
    pts = rng.normal(size=(n, 3))
    logits = 0.5 * rng.normal(size=(n, 3))
    exact = smoothness_loss_exact(logits, pts, 0.8)
    i = rng.integers(0, n, size=8192)
    j = rng.integers(0, n, size=8192)
    i, j = np.minimum(i, j), np.maximum(i, j)
    keep = i != j
    sampled = smoothness_loss(logits, pts, 0.8, np.stack([i[keep], j[keep]], axis=1))
    assert abs(sampled - exact) / exact < 0.05


def test_smoothness_errors():
    logits = np.zeros((2, 2))
    pts = np.zeros((2, 3))
    with pytest.raises(InvalidParameterError):
        smoothness_loss(logits, pts, 0.0, np.array([[0, 1]]))
    with pytest.raises(InvalidParameterError):
        smoothness_loss(logits, pts, 1.0, np.zeros((0, 2)))


def test_smoothness_gradient_matches_fd(rng):
    logits = rng.normal(size=(5, 3))
    pts = rng.normal(size=(5, 3))
    pairs = np.array([[0, 1], [1, 2], [3, 4], [2, 2], [4, 0]])
    _, grad = smoothness_loss(logits, pts, 0.6, pairs, with_grad=True)
    h = 1e-6
    for i in range(5):
        for c in range(3):
            lp, lm = logits.copy(), logits.copy()
            lp[i, c] += h
            lm[i, c] -= h
            fd = (smoothness_loss(lp, pts, 0.6, pairs)
                  - smoothness_loss(lm, pts, 0.6, pairs)) / (2 * h)
            assert grad[i, c] == pytest.approx(fd, abs=1e-6)


# --- total loss ---

def _small_setup(seed=0, n=32, c=3):
    rng = np.random.default_rng(seed)
    cloud = normalize_cloud(PointCloud(positions=rng.normal(size=(n, 3))))
    m = init_or_resize_head(None, c, rng_seed=seed).astype(np.float64)
    lab = rng.integers(0, c, size=n).astype(np.int32)
    lab[rng.random(n) < 0.5] = -1
    lab[0] = 0
    labels = _labels(lab, num_classes=c)
    pairs = rng.integers(0, n, size=(64, 2))
    return cloud, m, labels, pairs


def test_total_loss_reduces_to_segment():
    cloud, m, labels, pairs = _small_setup()
    loss, _, logits = total_loss(m, cloud, labels, LossWeights(alpha=0.0, beta=0.0))
    assert loss == pytest.approx(segment_loss(logits, labels), rel=1e-6)


def test_total_loss_term_isolation():
    cloud, m, _, _ = _small_setup()
    n = len(cloud)
    labels = _labels(np.zeros(n, dtype=np.int32))
    # drive class-0 logits to saturation so the segment term vanishes
    m.params["head.b2"] = np.array([50.0, -50.0, -50.0])
    loss, _, _ = total_loss(m, cloud, labels, LossWeights(alpha=0.001, beta=0.0))
    _, A = forward(m, cloud)
    assert loss == pytest.approx(0.001 * transform_reg(A), abs=1e-6)


def _loss_only(m, cloud, labels, weights, sigma, pairs):
    logits, A = forward(m, cloud)
    loss = segment_loss(logits, labels)
    loss += weights.alpha * transform_reg(A)
    loss += weights.beta * smoothness_loss(logits, cloud.positions, sigma, pairs)
    return loss


def test_total_loss_gradient_finite_difference():
    cloud, m, labels, pairs = _small_setup(seed=4)
    # move weights off their init scale so fewer parameters sit on ReLU kinks
    for name, v in m.params.items():
        if v.ndim == 2:
            m.params[name] = v * 4.0
    sigma = estimate_sigma(cloud)
    weights = LossWeights(alpha=0.001, beta=1.0)
    _, grads, _ = total_loss(m, cloud, labels, weights, sigma, pairs)
    h = 1e-6
    rng = np.random.default_rng(0)
    bad = 0
    checked = 0
    for name, v in m.params.items():
        flat = v.reshape(-1)
        g = grads[name].reshape(-1)
        picks = rng.choice(flat.size, size=min(40, flat.size), replace=False)
        for k in picks:
            orig = flat[k]
            flat[k] = orig + h
            up = _loss_only(m, cloud, labels, weights, sigma, pairs)
            flat[k] = orig - h
            dn = _loss_only(m, cloud, labels, weights, sigma, pairs)
            flat[k] = orig
            fd = (up - dn) / (2 * h)
            diff = abs(g[k] - fd)
            rel = diff / max(abs(fd), abs(g[k]), 1e-8)
            checked += 1
            if rel > 1e-3 and diff > 1e-6:
                bad += 1
    assert checked >= 400
    assert bad == 0


# --- checkpoints ---

def test_checkpoint_roundtrip_bitwise():
    m = init_or_resize_head(None, 3, rng_seed=9)
    m2 = load_checkpoint(save_checkpoint(m))
    assert m2.num_classes == 3 and m2.rng_seed == 9
    for name, v in m.params.items():
        assert (m2.params[name] == v).all()


def test_checkpoint_bad_magic():
    data = save_checkpoint(init_or_resize_head(None, 2, rng_seed=0))
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(b"XXXXXXXX" + data[8:])


def test_checkpoint_truncated():
    data = save_checkpoint(init_or_resize_head(None, 2, rng_seed=0))
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(data[:-17])


def test_checkpoint_trailing_bytes():
    data = save_checkpoint(init_or_resize_head(None, 2, rng_seed=0))
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(data + b"\x00\x00\x00\x00")


def test_checkpoint_shape_vs_num_classes_mismatch():
    import json
    import struct
    m = init_or_resize_head(None, 2, rng_seed=0)
    data = save_checkpoint(m)
    (hlen,) = struct.unpack_from("<I", data, 8)
    header = json.loads(data[12:12 + hlen])
    header["num_classes"] = 5   # payload shapes still say C=2
    hj = json.dumps(header, separators=(",", ":")).encode()
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(data[:8] + struct.pack("<I", len(hj)) + hj + data[12 + hlen:])
