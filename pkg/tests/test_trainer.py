import json

import numpy as np
import pytest

from oommix import trainer as tr
from oommix.autodiff import parameter
from oommix.corpus import DatasetSplit, LabeledExample, SynthConfig, synthetic_split
from oommix.trainer import (
    AdamState,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    build_model,
    clip_global_norm,
    encode_split,
    evaluate,
    load_model,
    lr_schedule,
    save_model,
    train,
)


def tiny(**kw):
    base = dict(layers=2, dim=16, heads=2, max_len=12, vocab=200, batch=8, warmup_steps=50, eval_every=25,
                patience=3, max_steps=100, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def tiny_data(classes=2, q=0.9, n=160, noise=0.0, seed=0):
    cfg = SynthConfig(classes=classes, keywords=4, q=q, vocab=60, length=10, noise=noise)
    return synthetic_split(cfg, n, 80, 80, seed=seed)


# --------------------------------------------------------------------- adam
def _advance(state):
    state.step += 1
    return state


def test_adam_zero_gradient_keeps_parameters():
    p = parameter(np.array([1.0, -2.0]))
    adam_step([p], {p.id: np.zeros(2)}, _advance(AdamState()), 0.1)
    np.testing.assert_array_equal(p.data, np.array([1.0, -2.0], dtype=p.dtype))


def test_adam_first_step_moves_by_lr(f64):
    p = parameter(np.array(0.0))
    adam_step([p], {p.id: np.array(1.0)}, _advance(AdamState()), 0.1)
    assert abs(float(p.data) + 0.1) < 1e-8


def _scalar_adam(theta, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
        out.append(theta)
    return out


def test_adam_matches_scalar_oracle_on_quadratic(f64):
    grad = lambda x: 2.0 * (x - 3.0)  # noqa: E731
    want = _scalar_adam(0.5, grad, 0.05, 5)
    p = parameter(np.array([0.5]))
    state = AdamState()
    for t in range(5):
        adam_step([p], {p.id: grad(p.data.copy())}, _advance(state), 0.05)
        assert abs(float(p.data[0]) - want[t]) < 1e-12


def test_adam_requires_step_advance():
    p = parameter(np.zeros(1))
    with pytest.raises(ValueError):
        adam_step([p], {p.id: np.ones(1)}, AdamState(), 0.1)


def test_per_group_rates_scale_the_update(f64):
    enc, head = parameter(np.zeros(3)), parameter(np.zeros(3))
    g = np.array([0.3, -1.0, 2.0])
    adam_step([enc, head], {enc.id: g, head.id: g.copy()}, _advance(AdamState()), {enc.id: 3e-4, head.id: 1e-3})
    ratio = head.data / enc.data
    np.testing.assert_allclose(ratio, 1e-3 / 3e-4, rtol=1e-6)


# ----------------------------------------------------------------- schedule
def test_warmup_schedule():
    assert lr_schedule(1, 1000, 1e-3) == pytest.approx(1e-6)
    assert lr_schedule(500, 1000, 1e-3) == pytest.approx(5e-4)
    assert lr_schedule(1000, 1000, 1e-3) == 1e-3
    assert lr_schedule(5000, 1000, 1e-3) == 1e-3
    assert lr_schedule(3, 0, 2.0) == 2.0
    with pytest.raises(ValueError):
        lr_schedule(0, 10, 1.0)


def test_global_norm_clipping():
    grads = {1: np.array([3.0, 0.0]), 2: np.array([4.0])}
    assert clip_global_norm(grads, 1.0) == pytest.approx(5.0)
    total = np.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
    assert total == pytest.approx(1.0, rel=1e-9)
    np.testing.assert_allclose(grads[1], [0.6, 0.0])
    small = {1: np.array([0.1])}
    clip_global_norm(small, 1.0)
    np.testing.assert_array_equal(small[1], [0.1])


# ----------------------------------------------------------------- config
def test_config_defaults_and_validation():
    cfg = TrainConfig(layers=4)
    assert (cfg.m_g, cfg.m_d) == (1, 4)
    assert TrainConfig(layers=12).m_g == 3
    with pytest.raises(ValueError):
        TrainConfig(layers=4, m_g=3, m_d=2)
    with pytest.raises(ValueError):
        TrainConfig(lr_encoder=0.0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


# --------------------------------------------------------------- evaluation
def test_evaluate_tie_break_and_errors(f64):
    data = tiny_data(classes=4, n=40)
    cfg = tiny()
    from oommix.corpus import build_vocab

    vocab = build_vocab(data.train, cfg.vocab)
    model = build_model(cfg, 4, len(vocab))
    model.encoder.head.weight.data[:] = 0
    model.encoder.head.bias.data[:] = 0
    valid = encode_split(data.valid, vocab, cfg.max_len)
    assert evaluate(model, valid) == pytest.approx(np.mean(valid.labels == 0))
    empty = encode_split([], vocab, cfg.max_len)
    with pytest.raises(ValueError, match="empty"):
        evaluate(model, empty)


# ----------------------------------------------------------------- training
def _scripted_validation(monkeypatch, data, scores):
    scores = iter(scores)
    seen = {}
    real = tr.encode_split

    def spy(examples, vocab, length):
        out = real(examples, vocab, length)
        if examples is data.valid:
            seen["valid"] = out
        return out

    def fake(model, split, batch_size=256):
        return next(scores) if split is seen.get("valid") else 0.0

    monkeypatch.setattr(tr, "encode_split", spy)
    monkeypatch.setattr(tr, "evaluate", fake)


def test_early_stopping_contract(monkeypatch):
    data = tiny_data()
    _scripted_validation(monkeypatch, data, [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3])
    report = train(tiny(strategy="none", patience=3, eval_every=5), data).report
    assert len(report.evals) == 3 + 1
    assert report.best_step == 5 and report.best_val_acc == 0.9 and report.stopped_early


def test_best_checkpoint_is_earliest_maximum(monkeypatch):
    data = tiny_data()
    _scripted_validation(monkeypatch, data, [0.5, 0.7, 0.7, 0.6, 0.6, 0.6])
    report = train(tiny(strategy="none", patience=3, eval_every=5), data).report
    assert report.best_step == 10 and report.best_val_acc == 0.7
    assert all(e["val_acc"] <= report.best_val_acc for e in report.evals)


def test_plain_training_learns_separable_task():
    data = tiny_data(classes=2, q=0.9, n=400)
    cfg = tiny(strategy="none", max_steps=2000, eval_every=50, patience=5, warmup_steps=100)
    report = train(cfg, data).report
    assert report.best_val_acc >= 0.95, report.summary()


def test_none_strategy_has_no_mixing_losses():
    report = train(tiny(strategy="none", max_steps=30, eval_every=10), tiny_data()).report
    assert all(e["l_g"] == 0.0 and e["l_d"] == 0.0 for e in report.evals)
    assert len(report.lambda_log) == 0 and report.final_e == 0.0


def test_training_is_deterministic(tmp_path):
    data = tiny_data()
    a = train(tiny(max_steps=40, eval_every=20), data, out_dir=tmp_path / "a")
    b = train(tiny(max_steps=40, eval_every=20), data, out_dir=tmp_path / "b")
    assert a.report.summary() == b.report.summary()
    for name in ("metrics.jsonl", "lambda_log.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for k, v in a.model.state_dict().items():
        np.testing.assert_array_equal(v, b.model.state_dict()[k])


def test_metrics_stream_format(tmp_path):
    train(tiny(max_steps=40, eval_every=20), tiny_data(), out_dir=tmp_path)
    lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2
    assert list(json.loads(lines[0])) == ["step", "val_acc", "l_c", "l_g", "l_d", "e"]


def test_lambda_log_records_every_mixing_step():
    report = train(tiny(max_steps=30, eval_every=10), tiny_data()).report
    assert len(report.lambda_log) == 30 * 8
    assert report.lambda_log.violations() == 0


def test_divergence_guard():
    with pytest.raises(TrainingDiverged, match="non-finite"):
        train(tiny(strategy="none", lr_encoder=1e30, lr_head=1e30, clip_norm=0.0, warmup_steps=0,
                   max_steps=50), tiny_data())


def test_mixup_needs_a_full_batch():
    data = DatasetSplit([LabeledExample("a", 0), LabeledExample("b", 1)], [LabeledExample("a", 0)], [])
    with pytest.raises(ValueError, match="batch"):
        train(tiny(), data)


def test_checkpoint_round_trip(tmp_path):
    data = tiny_data()
    result = train(tiny(max_steps=20, eval_every=10), data)
    save_model(tmp_path / "m.ckpt", result)
    model, vocab, cfg = load_model(tmp_path / "m.ckpt")
    assert cfg == result.config and vocab.to_list() == result.vocab.to_list()
    valid = encode_split(data.valid, vocab, cfg.max_len)
    assert evaluate(model, valid) == evaluate(result.model, valid)
