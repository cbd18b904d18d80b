"""
Data handling
=============

Synthetic keyword data, CSV round trip, vocabulary, stratified sampling and
EDA-style augmentation.
"""

import tempfile
from pathlib import Path

import numpy as np

from oommix.corpus import (SynthConfig, build_vocab, class_counts, eda_augment, load_csv, stratified_sample,
                           synthetic_split, tokenize, write_csv)

split = synthetic_split(SynthConfig(classes=4, keywords=3, q=0.5, vocab=30, length=8, noise=0.1), 200, 40, 40, seed=0)
print("class counts:", split.counts())
print("example:", split.train[0])

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "train.csv"
    write_csv(split.train, path)
    print("first CSV line:", path.read_text().splitlines()[0])
    assert load_csv(path) == split.train

vocab = build_vocab(split.train, 20)
seq = tokenize(split.train[0].text + " unseenword", vocab, 12)
print("ids:", seq.ids, "length:", seq.length)

small = stratified_sample(split.train, 10, seed=1)
print("stratified 10:", class_counts(small))

rng = np.random.default_rng(0)
for _ in range(3):
    print("eda:", eda_augment(split.train[0].text, rng, 0.2, 0.2, 0.2, vocabulary=vocab.tokens()))
