"""Discrete-unit quantization: k-means codebooks, unit assignment, dedup, CTC collapse.

The fitting loop is plain Lloyd iteration over k-means++ seeds. All
randomness flows through ``numpy.random.default_rng(seed)`` (PCG64), and
assignment reduces distances in float64 with a fixed chunk layout, so a
fit is reproducible for any thread count given the same inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import embed
from .parallel import chunk_ranges, map_chunks


class QuantizeError(ValueError):
    pass


@dataclass(frozen=True)
class UnitSequence:
    """Sequence of discrete unit ids under a vocabulary of size ``vocab_size``."""

    vocab_size: int
    units: tuple[int, ...] = ()

    def __post_init__(self):
        if self.vocab_size < 1:
            raise QuantizeError(f"vocab_size must be positive, got {self.vocab_size}")
        units = tuple(int(u) for u in self.units)
        for u in units:
            if not 0 <= u < self.vocab_size:
                raise QuantizeError(f"unit {u} out of range [0, {self.vocab_size})")
        object.__setattr__(self, "units", units)

    def __len__(self) -> int:
        return len(self.units)

    def __iter__(self):
        return iter(self.units)


@dataclass(frozen=True)
class Codebook:
    """K centroids defining the unit quantizer.

    ``iters_run`` and ``inertia_history`` are fit metadata; they are not
    required to reconstruct the quantizer and are absent on codebooks
    loaded from disk (except for the values echoed in the sidecar).
    """

    k: int
    dim: int
    centroids: np.ndarray
    seed: int
    iters_run: int | None = None
    inertia_history: tuple[float, ...] | None = None

    def __post_init__(self):
        cents = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if cents.shape != (self.k, self.dim):
            raise QuantizeError(f"centroids shape {cents.shape} != ({self.k}, {self.dim})")
        if not np.isfinite(cents).all():
            raise QuantizeError("centroids contain non-finite values")
        object.__setattr__(self, "centroids", cents)

    @property
    def final_inertia(self) -> float | None:
        return self.inertia_history[-1] if self.inertia_history else None


def _nearest(features: np.ndarray, centroids: np.ndarray,
             threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Exact nearest centroid per row: (labels, squared distances).

    Distances are the float64 sum over the feature axis of (x - c)^2,
    ties broken toward the lowest centroid index.
    """
    feats = features.astype(np.float64, copy=False)
    cents = centroids.astype(np.float64, copy=False)

    def one_chunk(bounds: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = bounds
        diffs = feats[lo:hi, None, :] - cents[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diffs, diffs)
        labels = d2.argmin(axis=1)
        return labels, d2[np.arange(hi - lo), labels]

    # keep chunk * k * dim bounded so the difference cube stays in memory
    per_row = max(1, cents.shape[0] * cents.shape[1])
    chunk = max(1, min(256, (1 << 23) // per_row))
    parts = map_chunks(one_chunk, chunk_ranges(feats.shape[0], chunk), threads)
    if not parts:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    labels = np.concatenate([p[0] for p in parts])
    dists = np.concatenate([p[1] for p in parts])
    return labels, dists


def _kmeanspp_init(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = features.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(0, n)
    d2 = ((features - features[chosen[0]]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            chosen[i] = rng.choice(n, p=d2 / total)
        else:
            # all remaining mass at distance zero (duplicate points): uniform
            chosen[i] = rng.integers(0, n)
        d2 = np.minimum(d2, ((features - features[chosen[i]]) ** 2).sum(axis=1))
    return features[chosen].copy()


def kmeans_fit(features: np.ndarray, k: int, seed: int,
               max_iters: int = 100, tol: float = 1e-6,
               threads: int = 1) -> Codebook:
    """Fit a k-means codebook (k-means++ init, Lloyd iterations).

    Stops when the max centroid L2 displacement falls below ``tol`` or
    after ``max_iters`` iterations. The recorded inertia sequence (one
    entry per assignment step) is non-increasing.
    """
    feats = np.ascontiguousarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise QuantizeError(f"features must be 2-D, got shape {feats.shape}")
    if not np.isfinite(feats).all():
        raise QuantizeError("features contain non-finite values")
    n, dim = feats.shape
    if k < 1:
        raise QuantizeError(f"k must be >= 1, got {k}")
    if n < k:
        raise QuantizeError(f"insufficient data: {n} rows for k={k}")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(feats, k, rng)
    history: list[float] = []
    iters = 0
    for _ in range(max_iters):
        labels, d2 = _nearest(feats, centroids, threads)
        history.append(float(d2.sum()))
        iters += 1

        sums = np.zeros((k, dim))
        np.add.at(sums, labels, feats)
        counts = np.bincount(labels, minlength=k)
        new_centroids = centroids.copy()
        nonempty = counts > 0
        new_centroids[nonempty] = sums[nonempty] / counts[nonempty, None]

        # reseed empty clusters from the points currently worst served
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            d2_pick = d2.copy()
            for j in empty:
                far = int(d2_pick.argmax())
                new_centroids[j] = feats[far]
                d2_pick[far] = -np.inf

        movement = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if movement < tol:
            break

    _, d2 = _nearest(feats, centroids, threads)
    history.append(float(d2.sum()))
    return Codebook(k=k, dim=dim, centroids=centroids.astype(np.float32),
                    seed=seed, iters_run=iters, inertia_history=tuple(history))


def assign_units(codebook: Codebook, features: np.ndarray, threads: int = 1) -> UnitSequence:
    """Quantize each feature row to its nearest centroid (lowest index on ties)."""
    feats = np.ascontiguousarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise QuantizeError(f"features must be 2-D, got shape {feats.shape}")
    if feats.shape[0] == 0:
        return UnitSequence(vocab_size=codebook.k, units=())
    if feats.shape[1] != codebook.dim:
        raise QuantizeError(f"feature dim {feats.shape[1]} != codebook dim {codebook.dim}")
    labels, _ = _nearest(feats, codebook.centroids, threads)
    return UnitSequence(vocab_size=codebook.k, units=tuple(int(u) for u in labels))


def dedup_units(seq: UnitSequence) -> UnitSequence:
    """Collapse each run of equal adjacent units to its first element."""
    out = []
    prev = None
    for u in seq.units:
        if u != prev:
            out.append(u)
            prev = u
    return UnitSequence(vocab_size=seq.vocab_size, units=tuple(out))


def ctc_collapse(frame_labels: Sequence[int] | UnitSequence, blank: int,
                 vocab_size: int | None = None) -> UnitSequence:
    """Greedy CTC path collapse: merge repeats, then delete blank symbols."""
    if isinstance(frame_labels, UnitSequence):
        labels = frame_labels.units
        vocab_size = frame_labels.vocab_size if vocab_size is None else vocab_size
    else:
        labels = tuple(int(u) for u in frame_labels)
        if vocab_size is None:
            vocab_size = max(max(labels, default=0), blank) + 1
    if not 0 <= blank < vocab_size:
        raise QuantizeError(f"blank {blank} out of range [0, {vocab_size})")
    collapsed = dedup_units(UnitSequence(vocab_size=vocab_size, units=labels))
    return UnitSequence(vocab_size=vocab_size,
                        units=tuple(u for u in collapsed.units if u != blank))


def write_codebook(codebook: Codebook, path: str | Path) -> None:
    """EMB1 centroid matrix plus a one-line JSON sidecar at ``<path>.meta.jsonl``."""
    path = Path(path)
    embed.write_embeddings(embed.EmbeddingMatrix(data=codebook.centroids), path)
    meta = {
        "k": codebook.k,
        "dim": codebook.dim,
        "seed": codebook.seed,
        "iters_run": codebook.iters_run,
        "final_inertia": codebook.final_inertia,
    }
    Path(str(path) + ".meta.jsonl").write_text(
        json.dumps(meta) + "\n", encoding="utf-8")


def read_codebook(path: str | Path) -> Codebook:
    path = Path(path)
    matrix = embed.read_embeddings(path)
    meta_path = Path(str(path) + ".meta.jsonl")
    seed = 0
    iters_run = None
    final_inertia = None
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8").splitlines()[0])
        if meta.get("k") != matrix.rows or meta.get("dim") != matrix.dim:
            raise QuantizeError(
                f"sidecar k/dim {meta.get('k')}x{meta.get('dim')} does not match "
                f"matrix {matrix.rows}x{matrix.dim}")
        seed = int(meta.get("seed", 0))
        iters_run = meta.get("iters_run")
        final_inertia = meta.get("final_inertia")
    history = (float(final_inertia),) if final_inertia is not None else None
    return Codebook(k=matrix.rows, dim=matrix.dim, centroids=matrix.data,
                    seed=seed, iters_run=iters_run, inertia_history=history)


def read_unit_lines(path: str | Path, vocab_size: int | None = None) -> list[UnitSequence]:
    """Read one unit sequence per line (space-separated decimal ids)."""
    sequences = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    parsed = [tuple(int(tok) for tok in line.split()) for line in lines]
    if vocab_size is None:
        peak = max((max(units) for units in parsed if units), default=0)
        vocab_size = peak + 1
    for units in parsed:
        sequences.append(UnitSequence(vocab_size=vocab_size, units=units))
    return sequences


def write_unit_lines(sequences: Iterable[UnitSequence], path: str | Path) -> None:
    lines = [" ".join(str(u) for u in seq.units) for seq in sequences]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
