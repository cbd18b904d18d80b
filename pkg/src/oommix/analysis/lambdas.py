"""Mixing-coefficient logs, phase histograms and medians."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

COLUMNS = ("step", "alpha", "delta", "gamma", "lambda", "l_c", "l_g", "l_d", "e")


@dataclass
class LambdaLog:
    """Append-only table of per-pair generator outputs."""

    rows: list[tuple] = field(default_factory=list)

    def append(self, step: int, alpha, delta, gamma, lam, l_c: float, l_g: float, l_d: float, e: float) -> None:
        for a, d, g, x in zip(alpha, delta, gamma, lam):
            self.rows.append((int(step), float(a), float(d), float(g), float(x), l_c, l_g, l_d, e))

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        i = COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=np.float64)

    @property
    def steps(self) -> np.ndarray:
        return self.column("step").astype(np.int64)

    @property
    def lam(self) -> np.ndarray:
        return self.column("lambda")

    def violations(self, tol: float = 1e-6) -> int:
        """Records breaking ``lam = alpha + gamma * delta`` or ``[alpha, alpha + delta]`` within [0, 1]."""
        a, d, g, x = (self.column(c) for c in ("alpha", "delta", "gamma", "lambda"))
        bad = np.abs(x - (a + g * d)) > tol
        bad |= (x < a - tol) | (x > a + d + tol)
        bad |= (a < -tol) | (d < -tol) | (a + d > 1 + tol)
        bad |= (g < 0) | (g > 1)
        return int(bad.sum())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])

    @classmethod
    def read_csv(cls, path) -> "LambdaLog":
        log = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return log
            if tuple(header) != COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            for row in reader:
                log.rows.append((int(row[0]), *(float(v) for v in row[1:])))
        return log


def split_phases(log: LambdaLog, phases: int = 2) -> list[np.ndarray]:
    """Split coefficients into equal step ranges (first half / second half for two phases)."""
    if not len(log):
        raise ValueError("empty lambda log")
    steps, lam = log.steps, log.lam
    lo, hi = steps.min(), steps.max()
    edges = lo + (hi - lo + 1) * np.arange(1, phases) / phases
    which = np.searchsorted(edges, steps, side="right")
    return [lam[which == k] for k in range(phases)]


def lambda_histogram(log: LambdaLog, phases: int = 2, bins: int = 20):
    """Per-phase counts over equal bins on [0, 1]; returns (edges, counts[phases, bins])."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    parts = split_phases(log, phases)
    counts = np.stack([np.histogram(np.clip(p, 0.0, 1.0), bins=edges)[0] for p in parts])
    return edges, counts


def median_lambda(log: LambdaLog, phase: int, phases: int = 2) -> float:
    values = split_phases(log, phases)[phase]
    if values.size == 0:
        raise ValueError(f"phase {phase} holds no records")
    return float(np.median(values))


def write_histogram_csv(path, edges: np.ndarray, counts: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phase", "bin_low", "bin_high", "count"])
        for k, row in enumerate(counts):
            for b, c in enumerate(row):
                w.writerow([k, repr(float(edges[b])), repr(float(edges[b + 1])), int(c)])


def read_histogram_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    phases = sorted({int(r["phase"]) for r in rows})
    bins = sorted({(float(r["bin_low"]), float(r["bin_high"])) for r in rows})
    counts = np.zeros((len(phases), len(bins)), dtype=np.int64)
    for r in rows:
        counts[int(r["phase"]), bins.index((float(r["bin_low"]), float(r["bin_high"])))] = int(r["count"])
    edges = np.array([b[0] for b in bins] + [bins[-1][1]])
    return edges, counts
