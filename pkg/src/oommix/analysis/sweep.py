"""Accuracy as a function of generator and discriminator placement."""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..corpus import DatasetSplit
from ..trainer import TrainConfig, train

log = logging.getLogger(__name__)


@dataclass
class SweepGrid:
    m_g: list[int]
    m_d: list[int]
    seeds: list[int]
    acc: np.ndarray  # (len(m_g), len(m_d), len(seeds)); nan for skipped cells

    @property
    def mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.nanmean(self.acc, axis=2) if self.acc.size else self.acc

    @property
    def std(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.nanstd(self.acc, axis=2) if self.acc.size else self.acc

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m_g", "m_d", "mean", "std", "runs"] + [f"seed_{s}" for s in self.seeds])
            for a, g in enumerate(self.m_g):
                for b, d in enumerate(self.m_d):
                    row = self.acc[a, b]
                    if np.all(np.isnan(row)):
                        continue
                    w.writerow([g, d, repr(float(np.nanmean(row))), repr(float(np.nanstd(row))),
                                int(np.sum(~np.isnan(row)))] + [repr(float(x)) for x in row])


def _cell(args) -> float:
    config, dataset = args
    report = train(config, dataset).report
    return report.test_acc if report.test_acc is not None else report.best_val_acc


def worker_count(default: int = 1) -> int:
    env = os.environ.get("OOMMIX_THREADS")
    cap = int(env) if env else default
    return max(1, min(cap, os.cpu_count() or 1))


def layer_sweep(config: TrainConfig, dataset: DatasetSplit, m_g_values, m_d_values, seeds=(0,),
                allow_equal: bool = False, workers: int | None = None) -> SweepGrid:
    """One training run per (m_g, m_d, seed); test accuracy per cell.

    Pairs with ``m_g >= m_d`` are skipped with a warning unless
    ``allow_equal`` and ``m_g == m_d``.
    """
    m_g_values, m_d_values, seeds = list(m_g_values), list(m_d_values), list(seeds)
    acc = np.full((len(m_g_values), len(m_d_values), len(seeds)), np.nan)
    jobs, where = [], []
    for a, g in enumerate(m_g_values):
        for b, d in enumerate(m_d_values):
            ok = g < d or (allow_equal and g == d)
            if not ok or d > config.layers or g < 0:
                log.warning("skipping invalid placement m_g=%d, m_d=%d", g, d)
                continue
            for c, s in enumerate(seeds):
                jobs.append((dataclasses.replace(config, m_g=g, m_d=d, seed=s), dataset))
                where.append((a, b, c))
    workers = workers or worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]
    for (a, b, c), r in zip(where, results):
        acc[a, b, c] = r
    return SweepGrid(m_g_values, m_d_values, seeds, acc)
