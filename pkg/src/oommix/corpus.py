"""Text ingestion: CSV loading, vocabulary, tokenization, sampling, EDA, batching."""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .encoder import TokenBatch, TokenSequence

PAD, UNK = 0, 1
_WORD = re.compile(r"\w+")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: int


def load_csv(path, label_column: int = 0, text_columns: Sequence[int] | None = None,
             one_based: bool = True) -> list[LabeledExample]:
    """Read ``"label","text",...`` rows; labels become 0-based, text fields are space-joined."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            cols = text_columns if text_columns is not None else [i for i in range(len(row)) if i != label_column]
            if label_column >= len(row) or any(c >= len(row) for c in cols):
                raise CorpusError(f"{path}:{lineno}: expected columns {label_column} and {list(cols)}, got {len(row)} fields")
            try:
                label = int(row[label_column].strip())
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: label {row[label_column]!r} is not an integer") from None
            if one_based:
                if label < 1:
                    raise CorpusError(f"{path}:{lineno}: label {label} invalid in a 1-based file")
                label -= 1
            elif label < 0:
                raise CorpusError(f"{path}:{lineno}: negative label {label}")
            out.append(LabeledExample(" ".join(row[c] for c in cols), label))
    return out


def write_csv(examples: Sequence[LabeledExample], path) -> None:
    """Write examples in the 1-based, fully quoted layout that :func:`load_csv` reads."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_ALL, lineterminator="\n")
        for ex in examples:
            w.writerow([ex.label + 1, ex.text])


def words(text: str) -> list[str]:
    """Lowercased tokens split on whitespace and punctuation."""
    return _WORD.findall(text.lower())


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]

    def __len__(self):
        return len(self.token_to_id)

    def __contains__(self, token):
        return token in self.token_to_id

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def tokens(self) -> list[str]:
        """Regular tokens in id order (specials excluded)."""
        return [t for t, _ in sorted(self.token_to_id.items(), key=lambda kv: kv[1]) if _ >= 2]

    def to_list(self) -> list[str]:
        return [t for t, _ in sorted(self.token_to_id.items(), key=lambda kv: kv[1])]

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocabulary":
        return cls({t: i for i, t in enumerate(tokens)})


def build_vocab(examples, max_size: int) -> Vocabulary:
    """Keep the ``max_size - 2`` most frequent tokens; ties go to lexical order."""
    if max_size < 3:
        raise ValueError("vocabulary needs room for pad, unk and one token")
    counts: Counter[str] = Counter()
    for ex in examples:
        counts.update(words(ex.text if isinstance(ex, LabeledExample) else ex))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: max_size - 2]
    mapping = {"<pad>": PAD, "<unk>": UNK}
    for i, (tok, _) in enumerate(ranked, start=2):
        mapping[tok] = i
    return Vocabulary(mapping)


def tokenize(text: str, vocab: Vocabulary, length: int) -> TokenSequence:
    """Pad or truncate to ``length``; empty text becomes a single unknown token."""
    ids = [vocab.id(w) for w in words(text)][:length] or [UNK]
    n = len(ids)
    arr = np.full(length, PAD, dtype=np.int64)
    arr[:n] = ids
    mask = np.zeros(length, dtype=np.int8)
    mask[:n] = 1
    return TokenSequence(arr, mask, n)


def encode(examples: Sequence[LabeledExample], vocab: Vocabulary, length: int):
    """Stack tokenized examples into ``(ids, mask, labels)`` arrays."""
    seqs = [tokenize(ex.text, vocab, length) for ex in examples]
    if not seqs:
        return (np.zeros((0, length), np.int64), np.zeros((0, length), np.int8), np.zeros(0, np.int64))
    batch = TokenBatch.stack(seqs)
    return batch.ids, batch.mask, np.array([ex.label for ex in examples], dtype=np.int64)


def class_counts(examples: Sequence[LabeledExample]) -> dict[int, int]:
    return dict(sorted(Counter(ex.label for ex in examples).items()))


def stratified_sample(examples: Sequence[LabeledExample], n: int, seed: int) -> list[LabeledExample]:
    """Class-balanced subset of size ``n``: every class gets floor(n/C) or ceil(n/C)."""
    if n > len(examples):
        raise ValueError(f"cannot draw {n} from {len(examples)} examples")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = {}
    for i, ex in enumerate(examples):
        by_class.setdefault(ex.label, []).append(i)
    classes = sorted(by_class)
    base, extra = divmod(n, len(classes))
    bonus = set(rng.choice(len(classes), size=extra, replace=False).tolist()) if extra else set()
    chosen = []
    for k, c in enumerate(classes):
        quota = base + (k in bonus)
        pool = by_class[c]
        if quota > len(pool):
            raise ValueError(f"class {c} has {len(pool)} examples, quota is {quota}")
        picked = rng.permutation(len(pool))[:quota]
        chosen.extend(pool[j] for j in picked)
    return [examples[i] for i in sorted(chosen)]


@dataclass
class DatasetSplit:
    train: list[LabeledExample]
    valid: list[LabeledExample]
    test: list[LabeledExample]
    classes: int = 0

    def __post_init__(self):
        if not self.classes:
            labels = {ex.label for part in (self.train, self.valid, self.test) for ex in part}
            self.classes = max(labels) + 1 if labels else 0

    def counts(self) -> dict[str, dict[int, int]]:
        return {name: class_counts(getattr(self, name)) for name in ("train", "valid", "test")}


def stratified_split(examples: Sequence[LabeledExample], n_train: int, n_valid: int, seed: int,
                     test: Sequence[LabeledExample] | None = None) -> DatasetSplit:
    """Draw disjoint stratified train and validation sets; the rest (or ``test``) is the test set."""
    idx = {id(ex): i for i, ex in enumerate(examples)}
    train = stratified_sample(examples, n_train, seed)
    taken = {idx[id(ex)] for ex in train}
    rest = [ex for i, ex in enumerate(examples) if i not in taken]
    valid = stratified_sample(rest, n_valid, seed + 1)
    taken_v = {id(ex) for ex in valid}
    remaining = [ex for ex in rest if id(ex) not in taken_v]
    return DatasetSplit(train, valid, list(test) if test is not None else remaining)


# ---------------------------------------------------------------------- EDA
def eda_augment(text: str, rng: np.random.Generator, p_insert: float = 0.1, p_delete: float = 0.1,
                p_swap: float = 0.1, vocabulary: Sequence[str] | None = None) -> str:
    """Random deletion, insertion and swap of words.

    Deletion drops each word with ``p_delete`` (never all of them); then
    ``ceil(p_insert * n)`` words are inserted at random positions, drawn from
    ``vocabulary`` or, if omitted, from the sentence itself; then
    ``ceil(p_swap * n)`` random transpositions.
    """
    for p in (p_insert, p_delete, p_swap):
        if not 0.0 <= p <= 1.0:
            raise ValueError("EDA probabilities must lie in [0, 1]")
    toks = text.split()
    n = len(toks)
    if n <= 1 or (p_insert == 0 and p_delete == 0 and p_swap == 0):
        return text
    if p_delete > 0:
        keep = rng.random(n) >= p_delete
        if not keep.any():
            keep[rng.integers(n)] = True
        toks = [t for t, k in zip(toks, keep) if k]
    pool = list(vocabulary) if vocabulary else list(toks)
    for _ in range(math.ceil(p_insert * n)):
        toks.insert(int(rng.integers(len(toks) + 1)), pool[int(rng.integers(len(pool)))])
    if len(toks) > 1:
        for _ in range(math.ceil(p_swap * n)):
            i, j = rng.choice(len(toks), size=2, replace=False)
            toks[i], toks[j] = toks[j], toks[i]
    return " ".join(toks)


def augment_dataset(examples: Sequence[LabeledExample], seed: int, vocabulary: Sequence[str] | None = None,
                    **probs) -> list[LabeledExample]:
    """Originals followed by one EDA copy of each (labels preserved)."""
    rng = np.random.default_rng(seed)
    copies = [LabeledExample(eda_augment(ex.text, rng, vocabulary=vocabulary, **probs), ex.label) for ex in examples]
    return list(examples) + copies


# ------------------------------------------------------------------ batching
def batch_iter(n: int, batch_size: int, seed: int, epoch: int, drop_last: bool) -> Iterator[np.ndarray]:
    """Index batches over ``range(n)`` in a (seed, epoch)-determined order."""
    order = np.random.default_rng([seed, epoch]).permutation(n)
    stop = n - n % batch_size if drop_last else n
    for start in range(0, stop, batch_size):
        yield order[start : start + batch_size]


# ----------------------------------------------------------------- synthetic
@dataclass
class SynthConfig:
    classes: int = 4
    keywords: int = 8
    q: float = 0.2
    vocab: int = 400
    length: int = 16
    noise: float = 0.0
    seed: int = 0


def synthesize(cfg: SynthConfig, n: int, seed: int | None = None) -> list[LabeledExample]:
    """Class-conditional keyword mixtures over shared distractor words.

    Each token is, with probability ``q``, one of the ``keywords`` words of
    the example's class and otherwise a uniformly drawn distractor.  Lengths
    are uniform in ``[length // 2, length]``.  With ``noise > 0`` that
    fraction of labels is replaced by a different random class.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    kw = [[f"c{c}k{j}" for j in range(cfg.keywords)] for c in range(cfg.classes)]
    distractors = [f"w{i}" for i in range(cfg.vocab)]
    out = []
    labels = np.arange(n) % cfg.classes
    rng.shuffle(labels)
    for c in labels:
        c = int(c)
        length = int(rng.integers(max(1, cfg.length // 2), cfg.length + 1))
        is_kw = rng.random(length) < cfg.q
        toks = [kw[c][rng.integers(cfg.keywords)] if k else distractors[rng.integers(cfg.vocab)] for k in is_kw]
        label = c
        if cfg.noise > 0 and rng.random() < cfg.noise:
            label = int((c + rng.integers(1, cfg.classes)) % cfg.classes)
        out.append(LabeledExample(" ".join(toks), label))
    return out


def synthetic_split(cfg: SynthConfig, n_train: int, n_valid: int, n_test: int, seed: int) -> DatasetSplit:
    """Independent draws for each split; label noise only on the training part."""
    clean = SynthConfig(**{**cfg.__dict__, "noise": 0.0})
    train = synthesize(cfg, n_train, seed=seed * 3 + 1)
    valid = synthesize(clean, n_valid, seed=seed * 3 + 2)
    test = synthesize(clean, n_test, seed=seed * 3 + 3)
    return DatasetSplit(train, valid, test, cfg.classes)
