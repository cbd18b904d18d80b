import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oommix.autodiff import Tensor, gradients, ops, parameter
from oommix.encoder import ContextualEmbedding, EncoderConfig, TokenBatch
from oommix.layers import TransformerLayer
from oommix.mixup import (
    DISC,
    ENC_ABOVE,
    ENC_BELOW,
    GEN,
    HEAD,
    OOMMIX_ROUTES,
    Discriminator,
    Generator,
    MixupModel,
    WeightController,
    apply_gradients,
    compute_losses,
    discriminate,
    discrimination_loss,
    generator_interval,
    mix_embeddings,
    mix_labels,
    sample_lambda,
    sentence_embed,
)


def make_model(m_g=1, m_d=3, layers=3, dropout=0.1, seed=0, classes=3):
    cfg = EncoderConfig(layers=layers, dim=8, heads=2, max_len=6, vocab=13, classes=classes, dropout=dropout, ffn=16)
    return MixupModel(cfg, m_g, m_d, np.random.default_rng(seed))


def make_batch(rng, b=4, n=6):
    lengths = rng.integers(2, n + 1, size=b)
    mask = (np.arange(n)[None, :] < lengths[:, None]).astype(np.int8)
    ids = np.where(mask > 0, rng.integers(2, 13, size=(b, n)), 0)
    return TokenBatch(ids, mask), rng.integers(0, 3, size=b)


def ce(layer, rng, b=2, n=4, d=8, lengths=None):
    mask = np.ones((b, n), dtype=np.int8)
    if lengths is not None:
        mask = (np.arange(n)[None, :] < np.asarray(lengths)[:, None]).astype(np.int8)
    return ContextualEmbedding(layer, Tensor(rng.standard_normal((b, n, d))), mask)


# --------------------------------------------------------------- sentence vectors
def test_sentence_embed_single_row(rng):
    tower = TransformerLayer(8, 2, 16, 0.0, rng)
    h = ce(1, rng, b=1, lengths=[1])
    s = sentence_embed(tower, h).data
    row = tower(h.values, h.mask).data[0, 0]
    assert s.shape == (1, 8)
    np.testing.assert_allclose(s[0], row, rtol=1e-6)


def test_sentence_embed_permutation_invariant(rng, f64):
    tower = TransformerLayer(8, 2, 16, 0.0, rng)
    h = ce(1, rng, b=1, lengths=[3])
    v = h.values.data.copy()
    v[0, [0, 1, 2]] = v[0, [2, 0, 1]]
    a = sentence_embed(tower, h).data
    b = sentence_embed(tower, ContextualEmbedding(1, Tensor(v), h.mask)).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_sentence_embed_rejects_all_masked(rng):
    tower = TransformerLayer(8, 2, 16, 0.0, rng)
    h = ce(1, rng, b=1)
    h.mask[:] = 0
    with pytest.raises(ValueError, match="all-masked"):
        sentence_embed(tower, h)


# ------------------------------------------------------------------ generator
def test_uniform_head_gives_thirds(rng):
    gen = Generator(8, 2, 16, 0.0, 1, rng)
    gen.fc2.weight.data[:] = 0
    alpha, delta = generator_interval(gen, ce(1, rng), ce(1, rng))
    np.testing.assert_allclose(alpha.data, 1 / 3, atol=1e-7)
    np.testing.assert_allclose(delta.data, 1 / 3, atol=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 30))
def test_interval_stays_inside_unit(seed, scale):
    r = np.random.default_rng(seed)
    gen = Generator(8, 2, 16, 0.0, 1, r)
    for p in gen.parameters():
        p.data *= scale
    a, d = generator_interval(gen, ce(1, r, b=3), ce(1, r, b=3))
    a, d = a.data, d.data
    assert np.all(a >= 0) and np.all(d >= 0) and np.all(a + d <= 1 + 1e-6)


def test_generator_is_not_symmetric(rng):
    gen = Generator(8, 2, 16, 0.0, 1, rng)
    for p in gen.parameters():
        p.data *= 20
    h1, h2 = ce(1, rng), ce(1, rng)
    a12, _ = generator_interval(gen, h1, h2)
    a21, _ = generator_interval(gen, h2, h1)
    assert not np.allclose(a12.data, a21.data)


def test_generator_checks_layers(rng):
    gen = Generator(8, 2, 16, 0.0, 1, rng)
    with pytest.raises(ValueError, match="layer"):
        generator_interval(gen, ce(1, rng), ce(2, rng))
    with pytest.raises(ValueError, match="layer 1"):
        generator_interval(gen, ce(2, rng), ce(2, rng))


# ------------------------------------------------------------------- sampling
def test_lambda_endpoints():
    _, lam0 = sample_lambda(np.array([0.2]), np.array([0.5]), gamma=np.array([0.0]))
    _, lam1 = sample_lambda(np.array([0.2]), np.array([0.5]), gamma=np.array([1.0]))
    assert float(lam0.data[0]) == pytest.approx(0.2)
    assert float(lam1.data[0]) == pytest.approx(0.7)


def test_lambda_monte_carlo_mean():
    n = 100_000
    gamma, lam = sample_lambda(np.full(n, 0.2), np.full(n, 0.5), np.random.default_rng(0))
    assert abs(lam.data.mean() - 0.45) < 0.01
    assert lam.data.min() >= 0.2 - 1e-7 and lam.data.max() <= 0.7 + 1e-7
    assert 0.0 <= gamma.min() and gamma.max() < 1.0


def test_reparameterization_gradients(f64):
    alpha, delta = parameter(np.array([0.1, 0.3])), parameter(np.array([0.4, 0.2]))
    gamma, lam = sample_lambda(alpha, delta, np.random.default_rng(3))
    g = gradients(ops.sum(lam), [alpha, delta])
    np.testing.assert_array_equal(g[alpha.id], [1.0, 1.0])
    np.testing.assert_array_equal(g[delta.id], gamma)


# --------------------------------------------------------------------- mixing
def test_mix_embeddings_identities(rng, f64):
    h1, h2 = ce(1, rng), ce(1, rng)
    np.testing.assert_array_equal(mix_embeddings(h1, h2, np.ones(2)).values.data, h1.values.data)
    np.testing.assert_allclose(mix_embeddings(h1, h1, np.array([0.3, 0.8])).values.data, h1.values.data, atol=1e-15)
    neg = ContextualEmbedding(1, Tensor(-h1.values.data), h1.mask)
    np.testing.assert_array_equal(mix_embeddings(h1, neg, np.full(2, 0.5)).values.data, 0.0)


def test_mix_embeddings_union_mask(rng):
    h1, h2 = ce(1, rng, lengths=[2, 4]), ce(1, rng, lengths=[3, 1])
    out = mix_embeddings(h1, h2, np.array([0.5, 0.5]))
    np.testing.assert_array_equal(out.mask.sum(axis=1), [3, 4])


def test_mix_embeddings_errors(rng):
    with pytest.raises(ValueError, match="mix_embeddings"):
        mix_embeddings(ce(1, rng, n=4), ce(1, rng, n=5), np.ones(2))
    with pytest.raises(ValueError, match="layer"):
        mix_embeddings(ce(1, rng), ce(2, rng), np.ones(2))


def test_mix_labels_examples():
    np.testing.assert_allclose(mix_labels([0], [2], np.array([0.7]), 3).data, [[0.7, 0, 0.3]], atol=1e-7)
    np.testing.assert_allclose(mix_labels([1], [1], np.array([0.2]), 3).data, [[0, 1, 0]], atol=1e-7)
    with pytest.raises(ValueError, match="range"):
        mix_labels([0], [3], np.array([0.5]), 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.lists(st.floats(0, 1), min_size=1, max_size=6), st.integers(0, 2**31))
def test_mixed_labels_are_distributions(c, lams, seed):
    r = np.random.default_rng(seed)
    y1, y2 = r.integers(c, size=len(lams)), r.integers(c, size=len(lams))
    out = mix_labels(y1, y2, np.array(lams), c).data
    assert np.all(out >= -1e-7)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)


# --------------------------------------------------------------- discriminator
def test_discriminator_zero_head_scores_half(rng):
    disc = Discriminator(8, 2, 16, 0.0, 2, rng)
    disc.fc2.weight.data[:] = 0
    np.testing.assert_allclose(discriminate(disc, ce(2, rng)).data, 0.5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 50))
def test_discriminator_scores_are_probabilities(seed, scale):
    r = np.random.default_rng(seed)
    disc = Discriminator(8, 2, 16, 0.0, 2, r)
    for p in disc.parameters():
        p.data *= scale
    s = disc(ce(2, r, b=3)).data
    assert np.all((s >= 0) & (s <= 1))


def test_discriminator_checks_layer(rng):
    disc = Discriminator(8, 2, 16, 0.0, 2, rng)
    with pytest.raises(ValueError, match="layer 2"):
        disc(ce(1, rng))


def test_discrimination_loss_at_half():
    half = Tensor(np.full(5, 0.5))
    assert float(discrimination_loss(half, half).data) == pytest.approx(math.log(2), abs=1e-6)
    assert float(discrimination_loss(half, half, "sum").data) == pytest.approx(2 * math.log(2), abs=1e-6)
    with pytest.raises(ValueError):
        discrimination_loss(half, half, "max")


# ----------------------------------------------------------------- full bundle
def test_total_is_sum_of_parts(rng):
    model = make_model()
    batch, labels = make_batch(rng)
    for e in (0.0, 1.0, 2.5):
        b = compute_losses(model, batch, labels, rng.permutation(4), e, np.random.default_rng(1),
                           dropout_rng=np.random.default_rng(2))
        v = b.values()
        assert abs(v["total"] - (v["l_c"] + v["l_g"] + e * v["l_d"])) < 1e-6
        if e == 0.0:
            assert v["total"] == np.float32(np.float32(v["l_c"]) + np.float32(v["l_g"]))


def test_untrained_discriminator_scores_ln2(rng):
    model = make_model()
    model.discriminator.fc2.weight.data[:] = 0
    batch, labels = make_batch(rng)
    b = compute_losses(model, batch, labels, rng.permutation(4), 1.0, rng, train=False)
    assert b.values()["l_d"] == pytest.approx(math.log(2), abs=1e-6)


def test_self_pairs_at_lambda_one_reproduce_classification_loss(rng):
    model = make_model()
    batch, labels = make_batch(rng)
    b = compute_losses(model, batch, labels, np.arange(4), 1.0, rng, train=False, force_lambda=1.0)
    v = b.values()
    assert abs(v["l_g"] - v["l_c"]) < 1e-5


def test_batch_of_one_is_rejected(rng):
    model = make_model()
    batch, labels = make_batch(rng, b=1)
    with pytest.raises(ValueError, match="at least 2"):
        compute_losses(model, batch, labels, np.arange(1), 1.0, rng)


def test_perm_must_be_a_permutation(rng):
    model = make_model()
    batch, labels = make_batch(rng)
    with pytest.raises(ValueError, match="permutation"):
        compute_losses(model, batch, labels, np.array([0, 0, 1, 2]), 1.0, rng)


def test_mix_output_invariants(rng):
    model = make_model()
    batch, labels = make_batch(rng)
    b = compute_losses(model, batch, labels, rng.permutation(4), 1.0, rng, dropout_rng=rng)
    m = b.mix
    np.testing.assert_allclose(m.lam, m.alpha + m.gamma * m.delta, atol=1e-6)
    assert np.all(m.alpha >= 0) and np.all(m.alpha + m.delta <= 1 + 1e-6)
    np.testing.assert_allclose(m.mixed_label.sum(axis=1), 1.0, atol=1e-6)


# ------------------------------------------------------------------- scoping
def _grads_for(model, bundle, only):
    groups = model.param_groups()
    bundle.routes = {k: v for k, v in OOMMIX_ROUTES.items() if k in only}
    return groups, apply_gradients(bundle, groups)


def test_discrimination_loss_never_reaches_the_encoder(rng):
    model = make_model(m_g=1, m_d=3)
    batch, labels = make_batch(rng)
    bundle = compute_losses(model, batch, labels, rng.permutation(4), 2.0, rng, dropout_rng=rng)
    groups, grads = _grads_for(model, bundle, {"l_d"})
    for name in (ENC_BELOW, ENC_ABOVE, HEAD):
        for p in groups[name]:
            assert not np.any(grads[p.id]), p.name
    assert any(np.any(grads[p.id]) for p in groups[GEN])
    assert any(np.any(grads[p.id]) for p in groups[DISC])


def test_generation_loss_skips_layers_below_the_generator(rng):
    model = make_model(m_g=2, m_d=3)
    batch, labels = make_batch(rng)
    bundle = compute_losses(model, batch, labels, rng.permutation(4), 1.0, rng, dropout_rng=rng)
    groups, grads = _grads_for(model, bundle, {"l_g"})
    for p in model.encoder.layer_parameters(1) + model.encoder.layer_parameters(0):
        assert not np.any(grads[p.id]), p.name
    assert any(np.any(grads[p.id]) for p in model.encoder.layer_parameters(3))
    assert not any(np.any(grads[p.id]) for p in groups[DISC])


def test_joint_gradient_equals_three_scoped_passes(rng, f64):
    model = make_model(m_g=1, m_d=3, dropout=0.0)
    batch, labels = make_batch(rng)
    e = 1.5
    bundle = compute_losses(model, batch, labels, rng.permutation(4), e, rng, train=False)
    groups = model.param_groups()
    joint = apply_gradients(bundle, groups)
    separate = {}
    for key, names in OOMMIX_ROUTES.items():
        params = [p for n in names for p in groups[n]]
        scale = e if key == "l_d" else 1.0
        for pid, g in gradients(getattr(bundle, key), params, scale).items():
            separate[pid] = separate.get(pid, 0) + g
    for p in model.parameters():
        np.testing.assert_allclose(joint[p.id], separate.get(p.id, np.zeros(p.shape)), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("group", [GEN, DISC])
def test_discrimination_loss_descends_for_generator_and_discriminator(f64, group):
    rng = np.random.default_rng(9)
    model = make_model(m_g=1, m_d=3, dropout=0.0)
    batch, labels = make_batch(rng)
    perm = rng.permutation(4)
    params = list(model.param_groups()[group])

    def l_d():
        return compute_losses(model, batch, labels, perm, 1.0, np.random.default_rng(5), train=False).l_d

    loss = l_d()
    g = gradients(loss, params)
    assert sum(float(np.sum(g[p.id] ** 2)) for p in params) > 0
    for p in params:
        p.data -= 1e-3 * g[p.id]
    assert float(l_d().data) < float(loss.data)


# ------------------------------------------------------------------- weights
def test_weight_controller_rule():
    c = WeightController(1.0, every=50, threshold=0.6, factor=1.5, cap=8.0)
    for _ in range(49):
        c.update(0.7)
    assert c.e == 1.0
    c.update(0.7)
    assert c.e == 1.5
    for _ in range(50):
        c.update(0.3)
    assert c.e == 1.5
    for _ in range(50 * 10):
        c.update(0.9)
    assert c.e == 8.0


def test_weight_controller_stays_off_at_zero():
    c = WeightController(0.0)
    for _ in range(200):
        c.update(5.0)
    assert c.e == 0.0


# --------------------------------------------------------------------- model
def test_groups_partition_parameters():
    model = make_model(m_g=1, m_d=3)
    groups = model.param_groups()
    total = sum(len(g) for g in groups.values())
    assert total == len(model.parameters())
    below = {p.id for p in groups[ENC_BELOW]}
    assert {p.id for p in model.encoder.layer_parameters(1)} <= below
    assert not {p.id for p in model.encoder.layer_parameters(2)} & below


def test_state_dict_round_trip(rng):
    a, b = make_model(seed=0), make_model(seed=1)
    b.load_state_dict(a.state_dict())
    for (n1, p1), (n2, p2) in zip(a.named_parameters(), b.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p1.data, p2.data)
    with pytest.raises(KeyError):
        b.load_state_dict({})


def test_invalid_placement():
    with pytest.raises(ValueError):
        make_model(m_g=3, m_d=2)
