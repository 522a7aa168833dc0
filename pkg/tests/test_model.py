import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dancegen.exceptions import InvalidInputError, ShapeError, StateError
from dancegen.model import (Batch, DanceNet, ModelConfig, combined_loss, contrastive_loss,
                            mse_loss)
from dancegen.selfcheck import SMALL_CONFIG, network_check

SMALL = ModelConfig(**SMALL_CONFIG)


def features_with_distance(dist, dim=4):
    """Two feature vectors whose squared distance is ``dist``."""
    a = np.zeros(dim)
    b = np.zeros(dim)
    b[0] = np.sqrt(dist)
    return a, b


def small_batch(rng, cfg=SMALL, B=2, T=4):
    return Batch(rng.uniform(-0.9, 0.9, (B, T, cfg.n_bins, cfg.n_frames)),
                 rng.uniform(-0.9, 0.9, (B, T + 1, cfg.motion_dim)),
                 rng.integers(0, 2, (B, T - 1)))


# -- losses ------------------------------------------------------------------

def test_mse_values():
    y = np.zeros((2, 3, 71))
    assert mse_loss(y, y) == 0.0
    assert abs(mse_loss(y + 0.5, y) - 0.25) < 1e-12
    assert abs(mse_loss(y + 1.0, y) - 4 * mse_loss(y + 0.5, y)) < 1e-12
    with pytest.raises(ShapeError):
        mse_loss(np.zeros(3), np.zeros(4))


def test_contrastive_values():
    a, b = features_with_distance(0.25)
    assert abs(contrastive_loss(a, b, 0) - 0.28125) < 1e-9
    assert abs(contrastive_loss(a, b, 1) - 0.5 * 0.25 ** 2) < 1e-12
    assert contrastive_loss(a, a, 1) == 0.0
    for dist in (1.0, 2.5):
        assert contrastive_loss(*features_with_distance(dist), 0) == 0.0
    with pytest.raises(InvalidInputError):
        contrastive_loss(a, b, 2)


def test_combined_loss():
    assert combined_loss(0.25, 0.28125) == 0.53125
    assert combined_loss(0.25, 0.0) == 0.25
    assert combined_loss(0.25, 0.28125, use_contrastive=False) == 0.25


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.sampled_from([0, 1]))
def test_contrastive_nonnegative_and_zero_cases(a, b, d):
    a, b = np.array(a), np.array(b)
    loss = contrastive_loss(a, b, d)
    assert loss >= 0
    dist = float(np.sum((a - b) ** 2))
    if (d == 1 and dist == 0) or (d == 0 and dist >= 1):
        assert loss == 0
    assert combined_loss(0.1, loss) == 0.1 + loss


# -- configuration -----------------------------------------------------------

def test_default_topology():
    cfg = ModelConfig()
    assert cfg.conv_output_shape == (73, 1)
    assert cfg.flat_dim == 65 * 73
    assert cfg.dec_in == 65 + 71
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_config_validation():
    with pytest.raises(InvalidInputError):
        ModelConfig(feedback="sometimes")
    with pytest.raises(ShapeError):
        ModelConfig(n_bins=5, n_frames=5)
    with pytest.raises(InvalidInputError):
        ModelConfig(lstm_width=0)


def test_batch_shape_checks():
    rng = np.random.default_rng(0)
    b = small_batch(rng)
    with pytest.raises(ShapeError):
        Batch(b.blocks, b.motion[:, :-1], b.labels)
    with pytest.raises(ShapeError):
        Batch(b.blocks, b.motion, b.labels[:, :-1])


# -- network behaviour -------------------------------------------------------

def test_same_seed_same_weights():
    a, b = DanceNet(SMALL, seed=3), DanceNet(SMALL, seed=3)
    for k, v in a.parameters().items():
        assert np.array_equal(v, b.parameters()[k])
    c = DanceNet(SMALL, seed=4)
    assert not np.array_equal(a.parameters()["out.weight"], c.parameters()["out.weight"])


def test_output_shapes():
    net = DanceNet(SMALL, seed=0)
    rng = np.random.default_rng(0)
    batch = small_batch(rng)
    g = net.encode(batch.blocks)
    assert g.shape == (4, 2, SMALL.enc_out)
    m = net.decode(g, batch.motion[:, 0])
    assert m.shape == (4, 2, SMALL.motion_dim)
    gen = net.generate(batch.blocks[0])
    assert gen.motion.shape == (4, SMALL.motion_dim)
    assert gen.latency_report["frames"] == 4


def test_zero_parameters_generate_zero_motion():
    net = DanceNet(SMALL, seed=0)
    for p in net.parameters().values():
        p[...] = 0.0
    blocks = np.random.default_rng(1).uniform(-0.9, 0.9, (6, SMALL.n_bins, SMALL.n_frames))
    assert np.all(net.generate(blocks).motion == 0.0)


def test_streaming_matches_sequence_decode():
    net = DanceNet(SMALL, seed=1)
    net.set_mode("infer")
    blocks = np.random.default_rng(2).uniform(-0.9, 0.9, (7, SMALL.n_bins, SMALL.n_frames))
    g = net.encode(blocks[None])
    m = net.decode(g, np.zeros((1, SMALL.motion_dim)))[:, 0]
    np.testing.assert_allclose(net.generate(blocks).motion, m, atol=1e-12)


def test_auto_mode_ignores_ground_truth_after_first_step():
    net = DanceNet(SMALL, seed=2)
    rng = np.random.default_rng(3)
    batch = small_batch(rng)
    g = net.encode(batch.blocks)
    Y = batch.motion.transpose(1, 0, 2)
    m1 = net.decode(g, Y[0], teacher=Y)
    Y2 = Y.copy()
    Y2[1:] += rng.standard_normal(Y2[1:].shape)
    m2 = net.decode(g, Y2[0], teacher=Y2)
    assert np.array_equal(m1, m2)
    Y3 = Y.copy()
    Y3[0] += 1.0
    assert not np.allclose(net.decode(g, Y3[0], teacher=Y3), m1)


def test_teacher_mode_follows_ground_truth():
    net = DanceNet(ModelConfig(**{**SMALL_CONFIG, "feedback": "teacher"}), seed=2)
    rng = np.random.default_rng(3)
    batch = small_batch(rng)
    g = net.encode(batch.blocks)
    Y = batch.motion.transpose(1, 0, 2)
    Y2 = Y.copy()
    Y2[2] += 1.0
    m1, m2 = net.decode(g, Y[0], Y), net.decode(g, Y2[0], Y2)
    assert np.array_equal(m1[:2], m2[:2]) and not np.allclose(m1[2], m2[2])


def test_none_mode_ignores_all_feedback():
    net = DanceNet(ModelConfig(**{**SMALL_CONFIG, "feedback": "none"}), seed=2)
    rng = np.random.default_rng(3)
    g = net.encode(small_batch(rng).blocks)
    a = net.decode(g, rng.standard_normal((2, SMALL.motion_dim)))
    b = net.decode(g, None)
    assert np.array_equal(a, b)


def test_decode_step_rejects_late_ground_truth():
    net = DanceNet(SMALL, seed=0)
    dec = net.init_decoder_state()
    g = np.zeros(SMALL.enc_out)
    _, dec = net.decode_step(g, dec, teacher=np.zeros(SMALL.motion_dim))
    with pytest.raises(StateError):
        net.decode_step(g, dec, teacher=np.zeros(SMALL.motion_dim))


def test_encode_step_shape_check():
    net = DanceNet(SMALL, seed=0)
    with pytest.raises(ShapeError):
        net.encode_step(np.zeros((SMALL.n_bins + 1, SMALL.n_frames)), net.init_encoder_state())


def test_forward_loss_terms_and_label_mask():
    net = DanceNet(SMALL, seed=0)
    rng = np.random.default_rng(4)
    batch = small_batch(rng)
    terms = net.forward_loss(batch)
    assert terms.total == pytest.approx(terms.mse + terms.contrastive)
    net._tape = None
    masked = Batch(batch.blocks, batch.motion, np.full_like(batch.labels, -1))
    t2 = net.forward_loss(masked)
    assert t2.contrastive == 0.0 and t2.mse == pytest.approx(terms.mse)
    assert net.forward_loss(batch, use_contrastive=False).total == pytest.approx(terms.mse)


def test_backward_requires_forward():
    with pytest.raises(StateError):
        DanceNet(SMALL, seed=0).backward()


def test_load_state_checks_shapes():
    net = DanceNet(SMALL, seed=0)
    params = {k: v.copy() for k, v in net.parameters().items()}
    params["out.weight"] = np.zeros((3, 3))
    with pytest.raises(ShapeError):
        net.load_state(params)
    del params["out.weight"]
    with pytest.raises(StateError):
        net.load_state(params)


@pytest.mark.parametrize("feedback", ["teacher", "none"])
def test_gradients_in_other_feedback_modes(feedback):
    assert network_check(feedback).passed


def test_float32_network_runs():
    net = DanceNet(SMALL, seed=0, dtype=np.float32)
    batch = small_batch(np.random.default_rng(0))
    net.forward_loss(batch)
    net.backward()
    assert all(g.dtype == np.float32 for g in net.gradients().values())
