"""Training loop: Adam with per-group rates, linear warmup, early stopping."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import checkpoint
from .analysis.lambdas import LambdaLog
from .autodiff.tensor import Tensor, no_grad
from .baselines import MixStrategy, strategy_dispatch
from .corpus import DatasetSplit, Vocabulary, augment_dataset, batch_iter, build_vocab, encode
from .encoder import EncoderConfig, TokenBatch
from .mixup import ENC_ABOVE, ENC_BELOW, MixupModel, WeightController, apply_gradients

log = logging.getLogger(__name__)

ENCODER_GROUPS = (ENC_BELOW, ENC_ABOVE)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    # model
    layers: int = 4
    dim: int = 64
    heads: int = 4
    max_len: int = 64
    vocab: int = 5000
    dropout: float = 0.1
    ffn: int = 0
    # optimization
    lr_encoder: float = 3e-4
    lr_head: float = 1e-3
    batch: int = 12
    warmup_steps: int = 1000
    eval_every: int = 200
    patience: int = 10
    max_steps: int = 20000
    clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    eval_batch: int = 256
    # mixing
    strategy: str = "oommix"
    m_g: int | None = None  # default ceil(M / 4)
    m_d: int | None = None  # default M
    e_init: float = 1.0
    e_every: int = 50
    e_threshold: float = 0.6
    e_factor: float = 1.5
    e_max: float = 8.0
    ld_reduction: str = "mean"
    discriminator: bool = True
    fixed_lambda: float = 0.5
    beta_a: float = 0.1
    beta_layer: int | None = None
    beta_flip: bool = False
    # data
    eda: bool = False
    eda_insert: float = 0.1
    eda_delete: float = 0.1
    eda_swap: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.m_g is None:
            self.m_g = math.ceil(self.layers / 4)
        if self.m_d is None:
            self.m_d = self.layers
        if not 0 <= self.m_g <= self.m_d <= self.layers:
            raise ValueError(f"need 0 <= m_g <= m_d <= layers, got m_g={self.m_g}, m_d={self.m_d}")
        if self.lr_encoder <= 0 or self.lr_head <= 0:
            raise ValueError("learning rates must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.strategy != "none" and self.batch < 2:
            raise ValueError("mixup needs batch >= 2")

    def encoder_config(self, classes: int, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(self.layers, self.dim, self.heads, self.max_len, vocab_size, classes, self.dropout, self.ffn)

    def mix_strategy(self) -> MixStrategy:
        return MixStrategy(self.strategy, self.fixed_lambda, self.beta_a, self.beta_layer, self.beta_flip)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# ---------------------------------------------------------------- optimizer
def lr_schedule(step: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warmup to ``base_lr`` over ``warmup_steps``, constant afterwards."""
    if step < 1:
        raise ValueError("steps are 1-based")
    if warmup_steps <= 0:
        return base_lr
    return base_lr * min(1.0, step / warmup_steps)


@dataclass
class AdamState:
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: list[Tensor], grads: dict[int, np.ndarray], state: AdamState, lr,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update in place.

    ``lr`` is a float or a map param id -> rate (per-group rates).  The
    caller advances ``state.step`` once per optimization step before calling.
    """
    t = state.step
    if t < 1:
        raise ValueError("advance state.step before calling adam_step")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p in params:
        g = grads.get(p.id)
        if g is None:
            continue
        m = state.m.get(p.id)
        if m is None:
            m = state.m[p.id] = np.zeros_like(p.data)
            state.v[p.id] = np.zeros_like(p.data)
        v = state.v[p.id]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        rate = lr[p.id] if isinstance(lr, dict) else lr
        p.data -= (rate * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype, copy=False)


def clip_global_norm(grads: dict[int, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * np.asarray(scale, dtype=grads[k].dtype)
    return total


# ----------------------------------------------------------------- data
@dataclass
class EncodedSplit:
    ids: np.ndarray
    mask: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    def batch(self, idx) -> tuple[TokenBatch, np.ndarray]:
        n = max(1, int(self.mask[idx].sum(axis=1).max()))
        return TokenBatch(self.ids[idx, :n], self.mask[idx, :n]), self.labels[idx]


def encode_split(examples, vocab: Vocabulary, length: int) -> EncodedSplit:
    return EncodedSplit(*encode(examples, vocab, length))


def evaluate(model: MixupModel, data: EncodedSplit, batch_size: int = 256) -> float:
    """Argmax accuracy in evaluation mode (ties go to the lowest class index)."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty split")
    return float(np.mean(predict(model, data, batch_size) == data.labels))


def predict(model: MixupModel, data: EncodedSplit, batch_size: int = 256) -> np.ndarray:
    preds = []
    lengths = data.mask.sum(axis=1)
    order = np.argsort(lengths, kind="stable")
    with no_grad():
        for start in range(0, len(data), batch_size):
            idx = order[start : start + batch_size]
            tokens, _ = data.batch(idx)
            probs = model.encoder(tokens, train=False)
            preds.append(np.argmax(probs.data, axis=1))
    out = np.empty(len(data), dtype=np.int64)
    out[order] = np.concatenate(preds)
    return out


# ----------------------------------------------------------------- training
@dataclass
class TrainReport:
    evals: list[dict]
    best_step: int
    best_val_acc: float
    test_acc: float | None
    steps: int
    stopped_early: bool
    final_e: float
    loss_curve: list[dict] = field(repr=False, default_factory=list)
    l_d_trace: list[float] = field(repr=False, default_factory=list)
    lambda_log: LambdaLog = field(repr=False, default_factory=LambdaLog)

    def summary(self) -> dict:
        return {
            "best_step": self.best_step,
            "best_val_acc": self.best_val_acc,
            "test_acc": self.test_acc,
            "steps": self.steps,
            "stopped_early": self.stopped_early,
            "final_e": self.final_e,
            "evals": self.evals,
        }

    def running_l_d(self, window: int = 20) -> float:
        tail = self.l_d_trace[-window:]
        return float(np.mean(tail)) if tail else float("nan")


@dataclass
class TrainResult:
    report: TrainReport
    model: MixupModel
    vocab: Vocabulary
    config: TrainConfig


def _rngs(seed: int):
    ss = np.random.SeedSequence(seed)
    init, dropout, gamma, perm, data, aug = ss.spawn(6)
    return (np.random.default_rng(init), np.random.default_rng(dropout), np.random.default_rng(gamma),
            np.random.default_rng(perm), int(data.generate_state(1)[0]), int(aug.generate_state(1)[0]))


def build_model(config: TrainConfig, classes: int, vocab_size: int, rng=None) -> MixupModel:
    rng = rng if rng is not None else _rngs(config.seed)[0]
    return MixupModel(config.encoder_config(classes, vocab_size), config.m_g, config.m_d, rng)


def train(config: TrainConfig, dataset: DatasetSplit, out_dir=None, vocab: Vocabulary | None = None) -> TrainResult:
    """Fine-tune with the configured mixup strategy and early stopping.

    With ``out_dir`` the metrics stream (``metrics.jsonl``) and coefficient
    log (``lambda_log.csv``) are written there.
    """
    strategy = config.mix_strategy()
    init_rng, drop_rng, gamma_rng, perm_rng, data_seed, aug_seed = _rngs(config.seed)
    train_examples = dataset.train
    if vocab is None:
        vocab = build_vocab(train_examples, config.vocab)
    if config.eda:
        train_examples = augment_dataset(train_examples, aug_seed, vocabulary=vocab.tokens(),
                                         p_insert=config.eda_insert, p_delete=config.eda_delete,
                                         p_swap=config.eda_swap)
    train_data = encode_split(train_examples, vocab, config.max_len)
    valid_data = encode_split(dataset.valid, vocab, config.max_len)
    test_data = encode_split(dataset.test, vocab, config.max_len) if dataset.test else None
    model = build_model(config, dataset.classes, len(vocab), init_rng)
    groups = model.param_groups()
    params = model.parameters()
    rates = {}
    for name, group in groups.items():
        for p in group:
            rates[p.id] = name
    state = AdamState()
    mixing = strategy.kind != "none"
    controller = WeightController(config.e_init if (config.discriminator and strategy.kind == "oommix") else 0.0,
                                  config.e_every, config.e_threshold, config.e_factor, config.e_max)
    use_disc = config.discriminator and strategy.kind == "oommix"
    if mixing and len(train_data) < config.batch:
        raise ValueError("training set smaller than one batch")

    lam_log = LambdaLog()
    evals: list[dict] = []
    curve: list[dict] = []
    ld_trace: list[float] = []
    best_acc, best_step, best_state, bad_evals = -1.0, 0, None, 0
    window = {"l_c": [], "l_g": [], "l_d": []}
    step, epoch, stopped = 0, 0, False

    while step < config.max_steps and not stopped:
        for idx in batch_iter(len(train_data), config.batch, data_seed, epoch, drop_last=mixing):
            if step >= config.max_steps:
                break
            step += 1
            tokens, labels = train_data.batch(idx)
            perm = perm_rng.permutation(len(labels))
            bundle = strategy_dispatch(strategy, model, tokens, labels, perm, controller.e, gamma_rng,
                                       train=True, dropout_rng=drop_rng, ld_reduction=config.ld_reduction,
                                       use_discriminator=use_disc)
            vals = bundle.values()
            if not all(math.isfinite(vals[k]) for k in ("l_c", "l_g", "l_d", "total")):
                raise TrainingDiverged(f"non-finite loss at step {step}: {vals}")
            grads = apply_gradients(bundle, groups)
            clip_global_norm(grads, config.clip_norm)
            state.step += 1
            lrs = {}
            for pid, gname in rates.items():
                base = config.lr_encoder if gname in ENCODER_GROUPS else config.lr_head
                lrs[pid] = lr_schedule(step, config.warmup_steps, base)
            adam_step(params, grads, state, lrs, config.beta1, config.beta2, config.epsilon)

            if bundle.mix is not None:
                mx = bundle.mix
                lam_log.append(step, mx.alpha, mx.delta, mx.gamma, mx.lam, vals["l_c"], vals["l_g"], vals["l_d"], vals["e"])
            for k in window:
                window[k].append(vals[k])
            if use_disc:
                ld_trace.append(vals["l_d"])
            controller.update(vals["l_d"])

            if step % config.eval_every == 0:
                acc = evaluate(model, valid_data, config.eval_batch)
                rec = {"step": step, "val_acc": acc,
                       **{k: float(np.mean(v)) for k, v in window.items()}, "e": controller.e}
                evals.append(rec)
                curve.append(rec)
                window = {k: [] for k in window}
                log.info("step %d val_acc %.4f l_c %.4f l_g %.4f l_d %.4f e %.3g",
                         step, acc, rec["l_c"], rec["l_g"], rec["l_d"], controller.e)
                if acc > best_acc:
                    best_acc, best_step, best_state, bad_evals = acc, step, model.state_dict(), 0
                else:
                    bad_evals += 1
                    if bad_evals >= config.patience:
                        stopped = True
                        break
        epoch += 1

    if best_state is None:  # never evaluated: score the final weights
        acc = evaluate(model, valid_data, config.eval_batch)
        evals.append({"step": step, "val_acc": acc, **{k: float(np.mean(v)) if v else 0.0 for k, v in window.items()},
                      "e": controller.e})
        best_acc, best_step, best_state = acc, step, model.state_dict()
    model.load_state_dict(best_state)
    test_acc = evaluate(model, test_data, config.eval_batch) if test_data is not None and len(test_data) else None
    report = TrainReport(evals, best_step, best_acc, test_acc, step, stopped, controller.e, curve, ld_trace, lam_log)
    if out_dir is not None:
        write_run_logs(out_dir, report)
    return TrainResult(report, model, vocab, config)


def metrics_lines(report: TrainReport) -> str:
    keys = ("step", "val_acc", "l_c", "l_g", "l_d", "e")
    return "".join(json.dumps({k: rec[k] for k in keys}) + "\n" for rec in report.evals)


def write_run_logs(out_dir, report: TrainReport) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.atomic_write_text(out / "metrics.jsonl", metrics_lines(report))
    tmp = out / ".lambda_log.csv.tmp"
    report.lambda_log.write_csv(tmp)
    os.replace(tmp, out / "lambda_log.csv")


def save_model(path, result: TrainResult) -> None:
    checkpoint.save(path, result.model.state_dict(), result.config.to_dict(),
                    {"vocab": result.vocab.to_list(), "classes": result.model.config.classes})


def load_model(path) -> tuple[MixupModel, Vocabulary, TrainConfig]:
    state, header = checkpoint.load(path)
    config = TrainConfig.from_dict(header["config"])
    vocab = Vocabulary.from_list(header["extra"]["vocab"])
    dtype = next(iter(state.values())).dtype if state else np.float32
    from .autodiff.tensor import precision

    with precision(dtype):
        model = build_model(config, header["extra"]["classes"], len(vocab), np.random.default_rng(0))
    model.load_state_dict(state)
    return model, vocab, config
