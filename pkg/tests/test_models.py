"""Tests for the models subpackage: handle, perceptual metric, classifier,
VAE (incl. total-correlation estimator), and vector quantization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from encyst.data import Dataset, SplitSpec, render_digits, synth_blobs
from encyst.models import (
    AccessViolation,
    Classifier,
    CountingHandle,
    EmptyCodebook,
    IdentityVae,
    ModelHandle,
    PerceptualMetric,
    TcBatchTooSmall,
    TrainConfig,
    VaeConfig,
    VqCodebook,
    perceptual_distance,
    predict_top1,
    tc_estimate,
    train_classifier,
    train_vae,
    vq_loss,
    vq_quantize,
    vq_straight_through,
)
import encyst.autodiff as ad


def _const_handle(probs, num_classes=None):
    probs = np.asarray(probs, dtype=np.float32)
    return ModelHandle(name="const", num_classes=num_classes or probs.shape[-1],
                       proba_fn=lambda imgs: np.tile(probs, (imgs.shape[0], 1)))


# ---------------------------------------------------------------------------
# ModelHandle


def test_predict_top1_argmax():
    h = _const_handle([0.1, 0.7, 0.2])
    assert predict_top1(h, np.zeros((1, 1, 4, 4))) == 1


def test_predict_top1_tie_breaks_low():
    h = _const_handle([0.5, 0.5])
    assert predict_top1(h, np.zeros((1, 1, 4, 4))) == 0


def test_predict_top1_in_range():
    rng = np.random.default_rng(0)
    h = ModelHandle(name="r", num_classes=5,
                    proba_fn=lambda imgs: rng.random((imgs.shape[0], 5)))
    for _ in range(20):
        lab = predict_top1(h, rng.random((1, 1, 4, 4)))
        assert 0 <= lab < 5


def test_black_box_blocks_proba_and_model():
    h = _const_handle([0.5, 0.5])
    with pytest.raises(AccessViolation):
        h.predict_proba(np.zeros((1, 1, 4, 4)))
    with pytest.raises(AccessViolation):
        h.require_model()


def test_white_box_view_and_black_box_restriction():
    probs = np.array([0.2, 0.8], dtype=np.float32)
    h = ModelHandle(name="w", num_classes=2,
                    proba_fn=lambda imgs: np.tile(probs, (imgs.shape[0], 1)),
                    access="white-box", model=object())
    assert h.predict_proba(np.zeros((3, 1, 4, 4))).shape == (3, 2)
    bb = h.as_black_box()
    with pytest.raises(AccessViolation):
        bb.predict_proba(np.zeros((1, 1, 4, 4)))


def test_counting_handle_counts_and_flags():
    ch = CountingHandle(_const_handle([0.9, 0.1]))
    ch.predict_top1(np.zeros((4, 1, 4, 4)))
    ch.predict_top1(np.zeros((1, 4, 4)))
    assert ch.label_queries == 5
    with pytest.raises(AccessViolation):
        ch.predict_proba(np.zeros((1, 1, 4, 4)))
    assert ch.whitebox_attempts == 1


def test_query_count_tracks_batch_sizes():
    h = _const_handle([1.0, 0.0])
    h.predict_top1(np.zeros((7, 1, 4, 4)))
    assert h.query_count == 7


# ---------------------------------------------------------------------------
# PerceptualMetric


@pytest.fixture(scope="module")
def metric():
    return PerceptualMetric((1, 28, 28), seed=0)


@pytest.fixture(scope="module")
def digit_images():
    return render_digits(120, seed=3).images


def test_perceptual_identity(metric, digit_images):
    assert metric.distance(digit_images[0], digit_images[0]) == pytest.approx(0.0)


def test_perceptual_symmetry(metric, digit_images):
    a, b = digit_images[0], digit_images[1]
    assert metric.distance(a, b) == pytest.approx(metric.distance(b, a), rel=1e-5)


def test_perceptual_nonnegative(metric, digit_images):
    d = metric.distance_pairs(digit_images[:20], digit_images[20:40])
    assert np.all(d >= 0)


def test_perceptual_deterministic_per_seed(digit_images):
    a = PerceptualMetric((1, 28, 28), seed=11)
    b = PerceptualMetric((1, 28, 28), seed=11)
    c = PerceptualMetric((1, 28, 28), seed=12)
    x, y = digit_images[0], digit_images[1]
    assert a.distance(x, y) == b.distance(x, y)
    assert a.distance(x, y) != c.distance(x, y)


def test_perceptual_monotone_in_pixel_flips(metric, digit_images):
    # distance must grow with the fraction of randomly flipped pixels on
    # at least 95% of 100 sampled triples
    rng = np.random.default_rng(7)
    hits = 0
    for _ in range(100):
        x = digit_images[rng.integers(len(digit_images))]
        d = []
        for frac in (0.0, 0.10, 0.30):
            y = x.copy()
            n = int(round(frac * x.size))
            idx = rng.choice(x.size, size=n, replace=False)
            flat = y.reshape(-1)
            flat[idx] = 1.0 - flat[idx]
            d.append(metric.distance(x, y))
        if d[0] < d[1] < d[2]:
            hits += 1
    assert hits >= 95


def test_perceptual_shape_mismatch(metric):
    with pytest.raises(ad.ShapeError):
        metric.distance_pairs(np.zeros((2, 1, 28, 28), np.float32),
                              np.zeros((3, 1, 28, 28), np.float32))


def test_perceptual_distance_helper(metric, digit_images):
    assert perceptual_distance(metric, digit_images[0], digit_images[1]) == \
        pytest.approx(metric.distance(digit_images[0], digit_images[1]))


# ---------------------------------------------------------------------------
# Classifier


def test_linear_model_separable_blobs():
    ds = synth_blobs(num_classes=3, dim=8, per_class=60, separation=10.0, seed=0)
    cfg = TrainConfig(epochs=30, lr=0.5, arch="linear", batch_size=32,
                      weight_decay=0.0)
    handle = train_classifier(ds, cfg)
    clf = handle.require_model()
    assert clf.accuracy(ds) == 1.0


def test_lr_zero_is_noop():
    ds = synth_blobs(num_classes=2, dim=4, per_class=20, separation=3.0, seed=1)
    clf = Classifier((1, 1, 4), 2, seed=5, arch="linear")
    before = clf.state_dict()
    acc0 = clf.accuracy(ds)
    clf.fit(ds, TrainConfig(epochs=2, lr=0.0, arch="linear", momentum=0.0,
                            weight_decay=0.0))
    for k, v in clf.state_dict().items():
        np.testing.assert_array_equal(v, before[k])
    assert clf.accuracy(ds) == acc0


def test_classifier_deterministic_per_seed():
    ds = synth_blobs(num_classes=2, dim=4, per_class=30, separation=3.0, seed=2)
    cfg = TrainConfig(epochs=3, lr=0.1, arch="linear", seed=9, batch_size=16)
    a = train_classifier(ds, cfg).require_model().state_dict()
    b = train_classifier(ds, cfg).require_model().state_dict()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_cnn_trains_on_digits():
    ds = render_digits(600, seed=0)
    cfg = TrainConfig(epochs=8, lr=0.05, batch_size=64, seed=0)
    handle = train_classifier(ds, cfg, test_set=ds)
    assert handle.metadata["test_accuracy"] >= 0.9


def test_classifier_clone_matches():
    ds = synth_blobs(num_classes=2, dim=4, per_class=20, separation=3.0, seed=3)
    clf = Classifier((1, 1, 4), 2, seed=0, arch="linear")
    clf.fit(ds, TrainConfig(epochs=2, lr=0.1, arch="linear"))
    clone = clf.clone()
    np.testing.assert_array_equal(clf.predict_proba(ds.images[:5]),
                                  clone.predict_proba(ds.images[:5]))


# ---------------------------------------------------------------------------
# Total correlation


def test_tc_one_dimensional_zero():
    z = np.random.default_rng(0).normal(size=(64, 1))
    assert tc_estimate(z) == 0.0


def test_tc_small_batch_rejected():
    with pytest.raises(TcBatchTooSmall):
        tc_estimate(np.zeros((8, 4)))


def test_tc_independent_near_zero():
    z = np.random.default_rng(1).normal(size=(1024, 4))
    assert abs(tc_estimate(z)) < 0.1


def test_tc_correlated_gaussian_matches_analytic():
    rho = 0.9
    cov = np.array([[1.0, rho], [rho, 1.0]])
    z = np.random.default_rng(2).multivariate_normal([0, 0], cov, size=4096)
    expected = -0.5 * np.log(1 - rho ** 2)  # ≈ 0.830
    assert tc_estimate(z) == pytest.approx(expected, rel=0.30)


def test_tc_mws_positive_for_correlated_posteriors():
    # posterior means drawn from a correlated Gaussian, tight posteriors:
    # the minibatch-weighted estimate should be clearly positive
    rng = np.random.default_rng(3)
    cov = np.array([[1.0, 0.9], [0.9, 1.0]])
    mu = rng.multivariate_normal([0, 0], cov, size=512)
    logvar = np.full_like(mu, -4.0)
    z = mu + np.exp(0.5 * logvar) * rng.standard_normal(mu.shape)
    assert tc_estimate(z, mu=mu, logvar=logvar) > 0.3


# ---------------------------------------------------------------------------
# VAE


def test_identity_vae_roundtrip():
    x = np.random.default_rng(0).random((5, 1, 6, 6)).astype(np.float32)
    vae = IdentityVae((1, 6, 6))
    np.testing.assert_array_equal(vae.decode(vae.encode(x)), x)


def test_vae_shapes_and_determinism():
    from encyst.models import VaeModel
    vae = VaeModel((1, 8, 8), VaeConfig(latent_dim=4, hidden=32))
    x = np.random.default_rng(0).random((3, 1, 8, 8)).astype(np.float32)
    z1, z2 = vae.encode(x), vae.encode(x)
    np.testing.assert_array_equal(z1, z2)  # mean path, no sampling
    rec = vae.decode(z1)
    assert rec.shape == x.shape
    assert rec.min() >= 0.0 and rec.max() <= 1.0
    single = vae.decode(vae.encode(x[0]))
    assert single.shape == (3, 1, 8, 8) or single.shape == (1, 1, 8, 8)


def test_decode_single_vector():
    from encyst.models import VaeModel
    vae = VaeModel((1, 8, 8), VaeConfig(latent_dim=4, hidden=32))
    img = vae.decode(np.zeros(4, np.float32))
    assert img.shape == (1, 8, 8)


@pytest.fixture(scope="module")
def trained_vae():
    ds = render_digits(400, seed=1)
    cfg = VaeConfig(latent_dim=8, hidden=64, epochs=4, batch_size=64,
                    reconstruction="mse", tc_weight=5.0, seed=0)
    vae = train_vae(ds, cfg)
    return vae, ds


def test_vae_training_reduces_reconstruction_error(trained_vae):
    from encyst.models import VaeModel
    vae, ds = trained_vae
    fresh = VaeModel(vae.image_shape, vae.config)
    probe = ds.images[:64]
    assert vae.reconstruction_mse(probe) < fresh.reconstruction_mse(probe)


def test_vae_restricted_data_degrades():
    # 5% of the data must reconstruct worse than 20% of the data
    full = render_digits(800, seed=2)
    big = full.subset(np.arange(160))     # 20%
    small = full.subset(np.arange(40))    # 5%
    cfg = VaeConfig(latent_dim=8, hidden=64, epochs=6, batch_size=32,
                    reconstruction="mse", tc_weight=0.0, seed=0)
    probe = full.images[640:]
    mse_big = train_vae(big, cfg).reconstruction_mse(probe)
    mse_small = train_vae(small, cfg).reconstruction_mse(probe)
    assert mse_small > mse_big


def test_vae_batch_larger_than_split_rejected():
    ds = render_digits(40, seed=4)
    with pytest.raises(ValueError):
        train_vae(ds, VaeConfig(batch_size=64, epochs=1))


# ---------------------------------------------------------------------------
# Vector quantization


def test_vq_exact_hit():
    cb = VqCodebook.random(8, 4, seed=0)
    idx, z_q = vq_quantize(cb.entries[3], cb)
    assert idx == 3
    np.testing.assert_array_equal(z_q, cb.entries[3])


def test_vq_idempotent():
    cb = VqCodebook.random(8, 4, seed=1)
    rng = np.random.default_rng(0)
    _, z_q = vq_quantize(rng.normal(size=(5, 4)).astype(np.float32), cb)
    idx2, z_q2 = vq_quantize(z_q, cb)
    np.testing.assert_array_equal(z_q, z_q2)


def test_vq_matches_brute_force_k16():
    cb = VqCodebook.random(16, 6, seed=2)
    rng = np.random.default_rng(1)
    z = rng.normal(size=(50, 6)).astype(np.float32)
    idx, _ = vq_quantize(z, cb)
    brute = np.array([np.argmin([np.sum((v - e) ** 2) for e in cb.entries])
                      for v in z])
    np.testing.assert_array_equal(idx, brute)


@settings(max_examples=30, deadline=None)
@given(k=st.integers(2, 64), d=st.integers(1, 8), seed=st.integers(0, 1000))
def test_vq_brute_force_property(k, d, seed):
    cb = VqCodebook.random(k, d, seed=seed)
    rng = np.random.default_rng(seed + 1)
    z = rng.normal(size=(10, d)).astype(np.float32)
    idx, z_q = vq_quantize(z, cb)
    d2 = ((z[:, None, :] - cb.entries[None]) ** 2).sum(axis=2)
    np.testing.assert_array_equal(idx, d2.argmin(axis=1))
    np.testing.assert_array_equal(z_q, cb.entries[idx])


def test_vq_empty_codebook():
    with pytest.raises(EmptyCodebook):
        VqCodebook(entries=np.zeros((1, 4), np.float32))


def test_vq_dim_mismatch():
    cb = VqCodebook.random(4, 3, seed=0)
    with pytest.raises(ValueError):
        vq_quantize(np.zeros(5, np.float32), cb)


def test_vq_ema_moves_entries_toward_data():
    cb = VqCodebook.random(4, 2, seed=3)
    target = cb.entries[0] + 0.5
    before = cb.entries[0].copy()
    for _ in range(50):
        vq_quantize(np.tile(target, (8, 1)), cb, training=True)
    after = cb.entries[0]
    assert np.linalg.norm(after - target) < np.linalg.norm(before - target)


def test_vq_no_update_without_training():
    cb = VqCodebook.random(4, 2, seed=4)
    before = cb.entries.copy()
    vq_quantize(np.random.default_rng(0).normal(size=(8, 2)).astype(np.float32), cb)
    np.testing.assert_array_equal(cb.entries, before)


def test_vq_straight_through_gradient():
    cb = VqCodebook.random(4, 3, seed=5)
    z = ad.parameter(np.random.default_rng(0).normal(size=(2, 3))
                     .astype(np.float32))
    out = ad.tsum(vq_straight_through(z, cb))
    g = ad.Graph(out)
    g.forward()
    g.backward()
    np.testing.assert_array_equal(z.grad, np.ones((2, 3), np.float32))


def test_vq_loss_zero_quantization_terms():
    cb = VqCodebook.random(4, 2, seed=6)
    z = cb.entries[1]
    x = np.zeros((1, 2), np.float32)
    loss = vq_loss(x, x, z, z, beta=0.25)
    assert loss == pytest.approx(0.0)


def test_vq_loss_hand_computed():
    # K=2 codebook in 2-D: z_e = (1, 0), nearest entry (0, 0)
    x = np.array([[0.5, 0.5]], np.float32)
    x_rec = np.array([[0.0, 0.5]], np.float32)
    z_e = np.array([[1.0, 0.0]], np.float32)
    z_q = np.array([[0.0, 0.0]], np.float32)
    # rec = mean((0.5, 0)^2) = 0.125 ; ||z_e - z_q||^2 = 1 ; beta term = 0.25
    assert vq_loss(x, x_rec, z_e, z_q, beta=0.25) == pytest.approx(1.375, abs=1e-6)


def test_vq_loss_beta_zero_drops_commitment():
    x = np.zeros((1, 2), np.float32)
    z_e = np.array([[1.0, 0.0]], np.float32)
    z_q = np.array([[0.0, 0.0]], np.float32)
    assert vq_loss(x, x, z_e, z_q, beta=0.0) == pytest.approx(1.0, abs=1e-6)


def test_vq_loss_rejects_negative_beta():
    x = np.zeros((1, 2), np.float32)
    with pytest.raises(ValueError):
        vq_loss(x, x, x, x, beta=-0.1)
