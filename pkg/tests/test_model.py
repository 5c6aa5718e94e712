import numpy as np
import pytest

from ropeflow import (
    ConfigError,
    EmptyInputError,
    InvalidDimensionError,
    ModelConfig,
    ShapeError,
    SuspiciousInputWarning,
    init_parameters,
    layer_norm,
    model_forward,
    parameter_shapes,
    physics_block_forward,
)

TINY = dict(num_blocks=2, num_heads=2, latent_dim=8, per_axis_dim=4,
            encoder_hidden=16, decoder_hidden=16, out_channels=2)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(variant="bogus")
    with pytest.raises(InvalidDimensionError):
        ModelConfig(latent_dim=10, num_heads=3)  # not divisible
    with pytest.raises(InvalidDimensionError):
        ModelConfig(latent_dim=12, num_heads=6)  # head dim 2 ok; 12/6=2 even
        ModelConfig(latent_dim=12, num_heads=4)  # head dim 3 odd
    with pytest.raises(InvalidDimensionError):
        ModelConfig(per_axis_dim=5)
    with pytest.raises(InvalidDimensionError):
        ModelConfig(out_channels=0)
    with pytest.raises(InvalidDimensionError):
        ModelConfig(ffn_hidden_ratio=0.001)


def test_variant_gates():
    assert ModelConfig(variant="full").use_rope
    assert ModelConfig(variant="full").use_sincos
    assert not ModelConfig(variant="no_rope").use_rope
    assert ModelConfig(variant="no_rope").use_sincos
    assert ModelConfig(variant="no_sincos").use_rope
    assert not ModelConfig(variant="no_sincos").use_sincos
    assert not ModelConfig(variant="neither").use_rope
    assert not ModelConfig(variant="neither").use_sincos


def test_derived_dimensions():
    cfg = ModelConfig()
    assert cfg.head_dim == 32
    assert cfg.in_features == 252  # 3 * 84
    assert cfg.ffn_width == 512
    assert ModelConfig(variant="no_sincos").in_features == 3
    assert ModelConfig(ffn_hidden_ratio=1.5, latent_dim=256).ffn_width == 384


def test_parameter_shapes_layout():
    cfg = ModelConfig(**TINY)
    shapes = parameter_shapes(cfg)
    assert shapes["encoder.l1.w"] == (12, 16)
    assert shapes["encoder.l2.w"] == (16, 8)
    assert shapes["block0.head0.q.w"] == (8, 4)
    assert shapes["block0.attn.out.w"] == (8, 8)
    assert shapes["block1.ffn.l1.w"] == (8, 16)
    assert shapes["decoder.l2.w"] == (16, 2)
    assert "block0.head0.q.b" not in shapes  # attention projections biasless
    # two blocks present, no third
    assert "block1.ln1.gain" in shapes and "block2.ln1.gain" not in shapes


def test_init_matches_shape_map_and_special_values():
    cfg = ModelConfig(**TINY)
    params = init_parameters(cfg, seed=0)
    shapes = parameter_shapes(cfg)
    assert params.names() == list(shapes)
    for name, shape in shapes.items():
        assert params[name].shape == shape
        if name.endswith(".gain"):
            np.testing.assert_array_equal(params[name], 1.0)
        elif name.endswith((".b", ".bias")):
            np.testing.assert_array_equal(params[name], 0.0)


def test_init_uniform_moments():
    """Weights are U(-b, b) with b = sqrt(1/fan_in): check bound, mean,
    and variance b^2/3 on a large draw."""
    cfg = ModelConfig(num_blocks=1, num_heads=2, latent_dim=64,
                      per_axis_dim=12, encoder_hidden=400, decoder_hidden=16)
    params = init_parameters(cfg, seed=123)
    w = params["encoder.l2.w"]  # fan_in 400, 25600 entries
    b = np.sqrt(1.0 / 400)
    assert np.max(np.abs(w)) <= b
    assert abs(w.mean()) < 4 * b / np.sqrt(3 * w.size)
    assert np.isclose(w.var(), b * b / 3.0, rtol=0.05)


def test_init_seed_determinism():
    cfg = ModelConfig(**TINY)
    a = init_parameters(cfg, seed=9)
    b = init_parameters(cfg, seed=9)
    c = init_parameters(cfg, seed=10)
    for name in a.names():
        np.testing.assert_array_equal(a[name], b[name])
    assert any(not np.array_equal(a[n], c[n]) for n in a.names())


def test_parameter_store_guards():
    cfg = ModelConfig(**TINY)
    params = init_parameters(cfg, seed=0)
    with pytest.raises(KeyError):
        params["nope"]
    with pytest.raises(KeyError):
        params["nope"] = np.zeros(3)
    with pytest.raises(ShapeError):
        params["encoder.l1.b"] = np.zeros(5)
    assert params.num_parameters() == sum(
        np.prod(s, dtype=int) for s in parameter_shapes(cfg).values())


def test_layer_norm_hand_case():
    x = np.array([[1.0, 2.0, 3.0, 6.0]])
    gain = np.array([1.0, 1.0, 2.0, 1.0])
    bias = np.array([0.0, 0.5, 0.0, 0.0])
    out, _ = layer_norm(x, gain, bias)
    mean = 3.0
    var = np.mean((x[0] - mean) ** 2)
    xhat = (x[0] - mean) / np.sqrt(var + 1e-5)
    np.testing.assert_allclose(out[0], xhat * gain + bias, atol=1e-14)


def test_layer_norm_standardizes_rows():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(30, 16)) * 7 + 3
    out, _ = layer_norm(x, np.ones(16), np.zeros(16))
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-4)  # eps bias


def test_zeroed_block_is_identity():
    """With attn out, FFN weights and biases zeroed the residual wiring
    passes the input through untouched."""
    cfg = ModelConfig(**TINY)
    params = init_parameters(cfg, seed=1)
    for name in params.names():
        if name.startswith("block0.") and (".attn.out" in name or ".ffn." in name):
            if not name.endswith((".gain",)):
                params[name] = np.zeros_like(params[name])
    rng = np.random.default_rng(2)
    latent = rng.normal(size=(6, 8))
    coords = rng.uniform(-1, 1, size=(6, 3))
    out, _, _ = physics_block_forward(latent, coords, params, cfg, 0)
    np.testing.assert_array_equal(out, latent)


def test_single_point_attention_is_trivial():
    cfg = ModelConfig(**TINY)
    params = init_parameters(cfg, seed=3)
    coords = np.array([[0.2, -0.1, 0.4]])
    pred, _, attention = model_forward(coords, params, cfg, retain_attention=True)
    assert pred.shape == (1, 2)
    for block in attention:
        for head in block:
            np.testing.assert_allclose(head, [[1.0]], atol=1e-15)


def test_model_forward_shapes_and_guards():
    cfg = ModelConfig(**TINY)
    params = init_parameters(cfg, seed=0)
    rng = np.random.default_rng(0)
    pred, cache, attention = model_forward(rng.uniform(-1, 1, (11, 3)), params, cfg)
    assert pred.shape == (11, 2)
    assert cache is None and attention is None
    with pytest.raises(EmptyInputError):
        model_forward(np.zeros((0, 3)), params, cfg)
    with pytest.raises(ShapeError):
        model_forward(np.zeros((4, 2)), params, cfg)


def test_model_normalizer_equivalence():
    from ropeflow import apply_normalizer, fit_normalizer
    cfg = ModelConfig(**TINY)
    params = init_parameters(cfg, seed=5)
    rng = np.random.default_rng(6)
    raw = rng.uniform(-3, 8, size=(20, 3))
    norm = fit_normalizer(raw)
    a, _, _ = model_forward(raw, params, cfg, normalizer=norm)
    b, _, _ = model_forward(apply_normalizer(raw, norm), params, cfg)
    np.testing.assert_array_equal(a, b)


def test_unnormalized_coordinates_warn():
    cfg = ModelConfig(**TINY)
    params = init_parameters(cfg, seed=0)
    coords = np.array([[120.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    with pytest.warns(SuspiciousInputWarning):
        model_forward(coords, params, cfg)


def test_model_permutation_equivariance():
    cfg = ModelConfig(**TINY)
    params = init_parameters(cfg, seed=8)
    rng = np.random.default_rng(9)
    coords = rng.uniform(-1, 1, size=(17, 3))
    pred, _, _ = model_forward(coords, params, cfg)
    perm = rng.permutation(17)
    pred_p, _, _ = model_forward(coords[perm], params, cfg)
    np.testing.assert_allclose(pred_p, pred[perm], rtol=1e-10, atol=1e-12)


def test_variants_change_the_function():
    rng = np.random.default_rng(10)
    coords = rng.uniform(-1, 1, size=(9, 3))
    preds = {}
    for variant in ("full", "no_rope"):
        cfg = ModelConfig(**{**TINY, "variant": variant})
        params = init_parameters(cfg, seed=0)  # same shapes, same draws
        preds[variant], _, _ = model_forward(coords, params, cfg)
    assert np.max(np.abs(preds["full"] - preds["no_rope"])) > 1e-8


def test_attention_rows_stochastic():
    cfg = ModelConfig(**TINY)
    params = init_parameters(cfg, seed=11)
    coords = np.random.default_rng(12).uniform(-1, 1, size=(13, 3))
    _, _, attention = model_forward(coords, params, cfg, retain_attention=True)
    assert len(attention) == cfg.num_blocks
    for block in attention:
        assert len(block) == cfg.num_heads
        for head in block:
            assert head.shape == (13, 13)
            assert head.min() >= 0
            np.testing.assert_allclose(head.sum(axis=1), 1.0, atol=1e-12)
