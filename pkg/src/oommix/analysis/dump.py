"""Sentence-level embeddings of actual and generated examples."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..autodiff.tensor import no_grad
from ..encoder import ContextualEmbedding, TokenBatch
from ..mixup import MixupModel, mix_embeddings, sample_lambda

ACTUAL, GENERATED = "actual", "generated"


@dataclass
class EmbeddingDump:
    points: np.ndarray  # (N, D)
    tags: list[str]
    classes: np.ndarray  # true class for actual points, predicted class for generated ones

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.classes = np.asarray(self.classes, dtype=np.int64)
        if not len(self.points) == len(self.tags) == len(self.classes):
            raise ValueError("points, tags and classes must have equal length")

    def write_csv(self, path) -> None:
        d = self.points.shape[1] if self.points.ndim == 2 else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tag", "class"] + [f"v_{i + 1}" for i in range(d)])
            for tag, c, p in zip(self.tags, self.classes, self.points):
                w.writerow([tag, int(c)] + [repr(float(x)) for x in p])

    @classmethod
    def read_csv(cls, path) -> "EmbeddingDump":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = list(reader)
        return cls(np.array([[float(x) for x in r[2:]] for r in rows]), [r[0] for r in rows],
                   np.array([int(r[1]) for r in rows]))


def write_projection_csv(path, coords: np.ndarray, tags, classes) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tag", "class", "x", "y", "z"])
        for tag, c, xyz in zip(tags, classes, coords):
            xyz = list(xyz) + [0.0] * (3 - len(xyz))
            w.writerow([tag, int(c)] + [repr(float(v)) for v in xyz[:3]])


def dump_embeddings(model: MixupModel, ids: np.ndarray, mask: np.ndarray, labels: np.ndarray,
                    n_pairs: int, rng: np.random.Generator, batch_size: int = 256) -> EmbeddingDump:
    """Mean-pooled last-layer embeddings for every example plus ``n_pairs`` generated ones.

    Generated points mix two random examples at the generator layer with a
    coefficient drawn from the generator's range (noise from ``rng``) and are
    propagated to the last layer in evaluation mode.
    """
    enc, gen = model.encoder, model.generator
    M, m_g = model.config.layers, model.m_g
    pts, tags, classes = [], [], []
    with no_grad():
        for start in range(0, len(labels), batch_size):
            sl = slice(start, start + batch_size)
            h = enc.forward_layers(enc.embed(TokenBatch(ids[sl], mask[sl])), M)
            pts.append(enc.pool(h).data)
        tags += [ACTUAL] * len(labels)
        classes += [int(y) for y in labels]
        if n_pairs:
            first = rng.integers(len(labels), size=n_pairs)
            second = rng.integers(len(labels), size=n_pairs)
            gammas = rng.random(n_pairs)
            for start in range(0, n_pairs, batch_size):
                i, j = first[start : start + batch_size], second[start : start + batch_size]
                b = len(i)
                both = np.concatenate([i, j])
                e0 = enc.embed(TokenBatch(ids[both], mask[both]))
                hg = enc.forward_layers(e0, m_g) if m_g > 0 else e0
                h1 = ContextualEmbedding(m_g, hg.values[:b], hg.mask[:b])
                h2 = ContextualEmbedding(m_g, hg.values[b:], hg.mask[b:])
                s = gen.pooled(hg)
                p = gen.head(s[:b], s[b:])
                _, lam = sample_lambda(p[:, 0], p[:, 1], gamma=gammas[start : start + b])
                mixed = mix_embeddings(h1, h2, lam)
                top = enc.forward_layers(mixed, M) if m_g < M else mixed
                pooled = enc.pool(top)
                pts.append(pooled.data)
                tags += [GENERATED] * b
                classes += np.argmax(enc.classify_pooled(pooled).data, axis=1).tolist()
    points = np.concatenate(pts) if pts else np.zeros((0, model.config.dim))
    return EmbeddingDump(points, tags, np.array(classes))
