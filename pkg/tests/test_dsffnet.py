import numpy as np
import pytest

from wbsense.dsffnet import (
    Adam,
    AdaptiveAvgPool,
    AvgPool,
    ConvBlock,
    DsffModel,
    ModelConfig,
    TrainSettings,
    bce_grad,
    bce_loss,
    miniature_config,
    normalize_input,
    train_model,
)
from wbsense.dsffnet.model import GAMMA_CLIP
from wbsense.errors import ShapeError

TABLE_LENGTHS = [32768, 32768, 32768, 32768, 16382, 8191, 8191, 4094, 2047, 2047, 256]


def make_batch(rng, count, length, n_subbands):
    x_mtm = rng.standard_normal((count, length))
    x_pg = rng.standard_normal((count, length))
    labels = rng.integers(0, 2, (count, n_subbands)).astype(np.uint8)
    return x_mtm, x_pg, labels


def loss_of(model, x_mtm, x_pg, labels):
    gamma = model.forward(x_mtm, x_pg, training=True, update_stats=False)
    return bce_loss(gamma, labels)


def analytic_grads(model, x_mtm, x_pg, labels):
    gamma = model.forward(x_mtm, x_pg, training=True, update_stats=False)
    model.backward(bce_grad(gamma, labels))
    return dict(model.gradients())


def finite_difference_check(model, x_mtm, x_pg, labels, step=1e-4, tol=1e-4):
    """Central finite differences on every scalar parameter."""
    grads = analytic_grads(model, x_mtm, x_pg, labels)
    worst = 0.0
    for name, param in model.parameters():
        grad = grads[name]
        flat = param.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_of(model, x_mtm, x_pg, labels)
            flat[i] = orig - step
            lm = loss_of(model, x_mtm, x_pg, labels)
            flat[i] = orig
            fd = (lp - lm) / (2 * step)
            err = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6)
            worst = max(worst, err)
            assert err < tol, f"{name}[{i}]: fd={fd} analytic={gflat[i]}"
    return worst


# ------------------------------------------------------------ normalization


def test_normalize_constant_is_zero():
    assert np.allclose(normalize_input(np.full(64, 3.5)), 0.0)


def test_normalize_scale_invariant(rng):
    psd = rng.random(128) + 0.1
    assert np.allclose(normalize_input(psd), normalize_input(37.2 * psd))


def test_normalize_standardized(rng):
    out = normalize_input(rng.random(256) + 0.01)
    assert abs(out.mean()) < 1e-9
    assert out.var() == pytest.approx(1.0, abs=1e-6)


# ------------------------------------------------------------------- layers


def test_conv4_length_matches_table():
    rng = np.random.default_rng(0)
    layer = ConvBlock(8, 32, 5, 2, 0, rng=rng)
    out = layer.forward(np.zeros((1, 8, 32768), dtype=np.float32), training=False)
    assert out.shape == (1, 32, 16382)


def test_conv_hand_example():
    layer = ConvBlock(1, 1, 3, 1, 0, rng=np.random.default_rng(0))
    layer.weight = np.array([[[1.0, 0.0, -1.0]]], dtype=np.float32)
    layer.bias = np.zeros(1, dtype=np.float32)
    # BN bypassed: gamma=1, beta=0, running mu=0, var=1.
    out = layer.forward(
        np.array([[[1.0, 2.0, 3.0]]], dtype=np.float32), training=False
    )
    pre = -2.0 / np.sqrt(1.0 + layer.bn_eps)
    assert out[0, 0, 0] == pytest.approx(pre * layer.leaky_slope, rel=1e-5)


def test_conv_zero_weights_zero_out(rng):
    layer = ConvBlock(2, 3, 3, 1, 1, rng=np.random.default_rng(1))
    layer.weight[:] = 0
    layer.bias[:] = 0
    x = rng.standard_normal((2, 2, 16)).astype(np.float32)
    assert np.allclose(layer.forward(x, training=False), 0.0)


def test_conv_channel_mismatch():
    layer = ConvBlock(4, 8, 3, 1, 0, rng=np.random.default_rng(0))
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((1, 3, 32), dtype=np.float32), training=False)


def test_avg_pool_table_row():
    pool = AvgPool(2, 2)
    out = pool.forward(np.zeros((1, 32, 16382), dtype=np.float32))
    assert out.shape[2] == 8191


def test_avg_pool_values():
    pool = AvgPool(2, 2)
    out = pool.forward(np.array([[[1.0, 3.0, 5.0, 7.0]]]))
    assert np.allclose(out, [[[2.0, 6.0]]])


def test_avg_pool_constant_input():
    pool = AvgPool(3, 2)
    out = pool.forward(np.full((1, 2, 9), 4.2))
    assert np.allclose(out, 4.2)


def test_avg_pool_kernel_too_large():
    with pytest.raises(ShapeError):
        AvgPool(8, 8).forward(np.zeros((1, 1, 4)))


def test_adaptive_pool_flatten_8192(rng):
    pool = AdaptiveAvgPool(256)
    out = pool.forward(rng.standard_normal((1, 32, 2047)))
    assert out.shape == (1, 32, 256)
    assert out.size == 8192


def test_adaptive_pool_identity(rng):
    x = rng.standard_normal((1, 2, 16))
    assert np.allclose(AdaptiveAvgPool(16).forward(x), x)


def test_adaptive_pool_preserves_global_mean(rng):
    x = rng.standard_normal((1, 3, 64))
    out = AdaptiveAvgPool(16).forward(x)
    assert out.mean() == pytest.approx(x.mean())


def test_adaptive_pool_upsamples_short_input(rng):
    # Length 255 (the M=4096 case) must still pool to 256.
    out = AdaptiveAvgPool(256).forward(rng.standard_normal((1, 32, 255)))
    assert out.shape == (1, 32, 256)


# ------------------------------------------------------------------ forward


def test_reference_forward_lengths_match_table():
    model = DsffModel(ModelConfig(num_subbands=16))
    x = np.zeros((1, 32768), dtype=np.float32)
    gamma = model.forward(x, x, training=False)
    assert model.last_stream_lengths == TABLE_LENGTHS
    assert gamma.shape == (1, 16)


def test_sum_fusion_doubles_identical_streams(rng):
    model = DsffModel(miniature_config(seed=3))
    # Copy mtm-stream parameters into the pg stream.
    for la, lb in zip(model.stream_mtm, model.stream_pg):
        if hasattr(la, "weight"):
            lb.weight = la.weight.copy()
            lb.bias = la.bias.copy()
            lb.bn_gamma = la.bn_gamma.copy()
            lb.bn_beta = la.bn_beta.copy()
            lb.bn_running_mean = la.bn_running_mean.copy()
            lb.bn_running_var = la.bn_running_var.copy()
    x = rng.standard_normal((2, 64)).astype(np.float32)
    a = x.copy()
    for layer in model.stream_mtm:
        a = layer.forward(a[:, None, :] if a.ndim == 2 else a, training=False)
    model.forward(x, x, training=False)
    fused_len = model.last_stream_lengths[-1]
    assert fused_len == model.config.adaptive_out


def test_zero_head_gives_half(rng):
    model = DsffModel(miniature_config(seed=1))
    model.fc2.weight[:] = 0
    model.fc2.bias[:] = 0
    x = rng.standard_normal((3, 64)).astype(np.float32)
    gamma = model.forward(x, rng.standard_normal((3, 64)).astype(np.float32),
                          training=False)
    assert np.allclose(gamma, 0.5)


def test_gamma_in_open_interval(rng):
    model = DsffModel(miniature_config(seed=2))
    x, y, _ = make_batch(rng, 4, 64, 4)
    gamma = model.forward(x.astype(np.float32), y.astype(np.float32), training=False)
    assert np.all((gamma > 0) & (gamma < 1))


def test_inference_deterministic(rng):
    model = DsffModel(miniature_config(seed=4))
    x, y, _ = make_batch(rng, 2, 64, 4)
    a = model.forward(x, y, training=False)
    b = model.forward(x, y, training=False)
    assert np.array_equal(a, b)


def test_input_scale_invariance_through_normalize(rng):
    model = DsffModel(miniature_config(seed=5))
    psd_mtm = rng.random((2, 64)) + 0.01
    psd_pg = rng.random((2, 64)) + 0.01
    a = model.forward(normalize_input(psd_mtm), normalize_input(psd_pg),
                      training=False)
    b = model.forward(normalize_input(7.3 * psd_mtm), normalize_input(7.3 * psd_pg),
                      training=False)
    assert np.allclose(a, b)


# --------------------------------------------------------------------- loss


def test_bce_perfect_prediction_tiny():
    labels = np.array([[1, 0, 1, 1]], dtype=np.uint8)
    gamma = labels.astype(np.float64)
    assert bce_loss(gamma, labels) <= 1.2e-7


def test_bce_half_everywhere():
    gamma = np.full((3, 4), 0.5)
    labels = np.random.default_rng(0).integers(0, 2, (3, 4)).astype(np.uint8)
    assert bce_loss(gamma, labels) == pytest.approx(np.log(2), rel=1e-9)


def test_bce_hand_value():
    gamma = np.array([[0.9, 0.2]])
    labels = np.array([[1, 0]], dtype=np.uint8)
    expected = -(np.log(0.9) + np.log(0.8)) / 2
    assert bce_loss(gamma, labels) == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(0.164252, abs=1e-6)


def test_bce_shape_mismatch():
    with pytest.raises(ShapeError):
        bce_loss(np.zeros((1, 3)), np.zeros((1, 4)))


# ----------------------------------------------------------------- backward


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    model = DsffModel(miniature_config(seed=7), dtype=np.float64)
    x_mtm, x_pg, labels = make_batch(rng, 3, 64, 4)
    worst = finite_difference_check(model, x_mtm, x_pg, labels)
    assert worst < 1e-4


def test_zero_loss_gradient_vanishes():
    rng = np.random.default_rng(8)
    model = DsffModel(miniature_config(seed=8), dtype=np.float64)
    x_mtm, x_pg, labels = make_batch(rng, 2, 64, 4)
    gamma = model.forward(x_mtm, x_pg, training=True, update_stats=False)
    # Gradient through a clipped-perfect prediction is exactly zero.
    clipped = np.where(labels == 1, 1.0, 0.0)
    grad = bce_grad(np.clip(clipped, -1, 2), labels)
    model.backward(grad)
    norm = np.sqrt(sum((g**2).sum() for _, g in model.gradients()))
    assert norm < 1e-5


def test_duplicated_batch_same_gradients():
    rng = np.random.default_rng(9)
    model = DsffModel(miniature_config(seed=9), dtype=np.float64)
    x_mtm, x_pg, labels = make_batch(rng, 2, 64, 4)
    g1 = analytic_grads(model, x_mtm, x_pg, labels)
    dup = lambda a: np.concatenate([a, a], axis=0)
    g2 = analytic_grads(model, dup(x_mtm), dup(x_pg), dup(labels))
    for name in g1:
        assert np.allclose(g1[name], g2[name], atol=1e-10), name


# --------------------------------------------------------------------- Adam


def test_adam_first_step_magnitude():
    opt = Adam(lr=0.001)
    p = np.zeros(5)
    opt.step([("p", p)], [("p", np.ones(5))])
    assert np.allclose(p, -0.001, atol=1e-6)
    assert opt.t == 1


def test_adam_zero_gradient_no_change():
    opt = Adam()
    p = np.full(3, 2.0)
    opt.step([("p", p)], [("p", np.zeros(3))])
    assert np.array_equal(p, np.full(3, 2.0))
    assert opt.t == 1


def test_adam_deterministic_runs():
    def run():
        rng = np.random.default_rng(12)
        opt = Adam(lr=0.01)
        p = np.ones(4)
        for _ in range(10):
            opt.step([("p", p)], [("p", rng.standard_normal(4))])
        return p

    assert np.array_equal(run(), run())


# ----------------------------------------------------------------- training


def fast_training_data(rng, count=40, length=64, n=4):
    """Separable toy task: occupied subbands carry extra power."""
    labels = rng.integers(0, 2, (count, n)).astype(np.uint8)
    labels[labels.sum(axis=1) == 0, 0] = 1
    base = rng.random((count, length)) * 0.1 + 0.05
    for i in range(count):
        for sb in np.nonzero(labels[i])[0]:
            base[i, sb * (length // n) : (sb + 1) * (length // n)] += 2.0
    x = normalize_input(base).astype(np.float32)
    return x, x.copy(), labels


def test_patience_stop_zero_runs_one_epoch(rng):
    model = DsffModel(miniature_config(seed=11))
    x_mtm, x_pg, labels = fast_training_data(rng)
    settings = TrainSettings(max_epochs=50, patience_stop=0, shuffle_seed=1)
    result = train_model(model, x_mtm, x_pg, labels, x_mtm, x_pg, labels, settings)
    assert len(result.history) == 1


def test_lr_schedule_drops_by_tenth(rng):
    model = DsffModel(miniature_config(seed=12))
    x_mtm, x_pg, labels = fast_training_data(rng, count=16)
    # Constant validation set the model saturates instantly: accuracy stalls.
    settings = TrainSettings(max_epochs=30, patience_lr=2, patience_stop=8,
                             shuffle_seed=2)
    result = train_model(model, x_mtm, x_pg, labels, x_mtm, x_pg, labels, settings)
    lrs = [rec.lr for rec in result.history]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    drops = {round(a / b) for a, b in zip(lrs, lrs[1:]) if b < a}
    assert drops <= {10}


def test_training_learns_separable_task(rng):
    model = DsffModel(miniature_config(seed=13))
    x_mtm, x_pg, labels = fast_training_data(rng, count=60)
    settings = TrainSettings(lr=3e-3, max_epochs=80, patience_stop=80,
                             shuffle_seed=3)
    result = train_model(model, x_mtm, x_pg, labels, x_mtm, x_pg, labels, settings)
    assert result.best_val_accuracy >= 0.9


def test_single_gradient_step_reduces_loss(rng):
    model = DsffModel(miniature_config(seed=14), dtype=np.float64)
    x_mtm, x_pg, labels = make_batch(rng, 4, 64, 4)
    before = loss_of(model, x_mtm, x_pg, labels)
    gamma = model.forward(x_mtm, x_pg, training=True, update_stats=False)
    model.backward(bce_grad(gamma, labels))
    lr = 1e-4
    for (_, p), (_, g) in zip(model.parameters(), model.gradients()):
        p -= lr * g
    after = loss_of(model, x_mtm, x_pg, labels)
    assert after <= before
