import numpy as np
import pytest

from oommix.autodiff import Tensor
from oommix.baselines import MixStrategy, beta_hidden_mixup, fixed_sentence_mixup, sample_beta, strategy_dispatch
from oommix.encoder import ContextualEmbedding, EncoderConfig, TokenBatch
from oommix.mixup import MixupModel, compute_losses, mix_labels


def make_model():
    cfg = EncoderConfig(layers=3, dim=8, heads=2, max_len=6, vocab=13, classes=3, dropout=0.1, ffn=16)
    return MixupModel(cfg, 1, 3, np.random.default_rng(0))


def make_batch(seed=0, b=4):
    r = np.random.default_rng(seed)
    mask = (np.arange(6)[None, :] < r.integers(2, 7, size=b)[:, None]).astype(np.int8)
    return TokenBatch(np.where(mask > 0, r.integers(2, 13, size=(b, 6)), 0), mask), r.integers(0, 3, size=b)


def test_strategy_validation():
    with pytest.raises(ValueError, match="unknown"):
        MixStrategy("nonlinear")
    with pytest.raises(ValueError):
        MixStrategy("beta-hidden", beta_a=0.0)
    with pytest.raises(ValueError):
        MixStrategy("fixed-sentence", fixed_lambda=1.5)


def test_fixed_sentence_mixup(rng):
    s1, s2 = rng.standard_normal((2, 5)), rng.standard_normal((2, 5))
    np.testing.assert_allclose(fixed_sentence_mixup(s1, s1).data, s1, atol=1e-7)
    np.testing.assert_array_equal(fixed_sentence_mixup(s1, s2).data, fixed_sentence_mixup(s2, s1).data)
    np.testing.assert_allclose(mix_labels([0], [1], np.array([0.5]), 2).data, [[0.5, 0.5]])


def test_beta_draws_are_bimodal_at_small_shape():
    lam = sample_beta(0.05, np.random.default_rng(0), size=100_000)
    assert np.mean((lam < 0.1) | (lam > 0.9)) > 0.85
    assert np.all((lam >= 0) & (lam <= 1))


def test_beta_mean_is_one_half():
    for a in (0.05, 0.1, 2.0):
        assert abs(sample_beta(a, np.random.default_rng(1), size=100_000).mean() - 0.5) < 0.01


def test_beta_flip_variant():
    lam = sample_beta(0.1, np.random.default_rng(0), size=1000, flip=True)
    assert np.all(lam >= 0.5)


def test_beta_rejects_bad_shape():
    with pytest.raises(ValueError):
        sample_beta(-1.0, np.random.default_rng(0))


def test_beta_hidden_identical_inputs(rng):
    h = ContextualEmbedding(1, Tensor(rng.standard_normal((3, 4, 8))), np.ones((3, 4), dtype=np.int8))
    lam, mixed = beta_hidden_mixup(h, h, 0.1, rng)
    assert lam.shape == (3,)
    np.testing.assert_allclose(mixed.values.data, h.values.data, atol=1e-12)


def _dispatch(kind, seed=0, **kw):
    model = make_model()
    batch, labels = make_batch()
    perm = np.random.default_rng(7).permutation(4)
    return strategy_dispatch(MixStrategy(kind, **kw), model, batch, labels, perm, 1.0, np.random.default_rng(seed),
                             dropout_rng=np.random.default_rng(3))


def test_none_has_only_classification_loss():
    b = _dispatch("none")
    v = b.values()
    assert v["l_g"] == 0.0 and v["l_d"] == 0.0 and v["total"] == v["l_c"]
    assert b.mix is None


def test_fixed_sentence_has_no_discrimination_loss():
    b = _dispatch("fixed-sentence")
    assert b.values()["l_d"] == 0.0 and b.values()["l_g"] > 0
    np.testing.assert_array_equal(b.mix.lam, 0.5)


def test_beta_hidden_bundle():
    b = _dispatch("beta-hidden", beta_a=0.1)
    assert b.values()["l_d"] == 0.0 and b.values()["l_g"] > 0
    assert np.all((b.mix.lam >= 0) & (b.mix.lam <= 1))


def test_oommix_delegates_exactly():
    via = _dispatch("oommix")
    model = make_model()
    batch, labels = make_batch()
    perm = np.random.default_rng(7).permutation(4)
    direct = compute_losses(model, batch, labels, perm, 1.0, np.random.default_rng(0),
                            dropout_rng=np.random.default_rng(3))
    assert via.values() == direct.values()
    np.testing.assert_array_equal(via.mix.lam, direct.mix.lam)


def test_baselines_share_the_classification_loss():
    # same seeds -> same batch and same dropout mask for the unmixed pass
    vals = {k: _dispatch(k).values()["l_c"] for k in ("none", "fixed-sentence", "beta-hidden", "oommix")}
    assert len(set(vals.values())) == 1, vals
