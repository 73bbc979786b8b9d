"""Embedding storage and similarity kernels.

Matrices are float32 in memory and on disk; dot products and norms
accumulate in float64 so that scores are stable across chunked or
parallel execution.

On-disk format (``EMB1``): magic bytes ``EMB1``, little-endian u32 row
count, u32 dimension, then rows*dim IEEE-754 binary32 values, row-major.
Row ids, when present, live in a sidecar text file at ``<path>.ids``,
one id per line. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
import numpy as np

EMB1_MAGIC = b"EMB1"


class EmbeddingError(ValueError):
    pass


class ZeroVectorError(EmbeddingError):
    """Cosine similarity is undefined for a zero vector."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense row-major matrix of sentence/utterance embeddings."""

    data: np.ndarray
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise EmbeddingError(f"embedding data must be 2-D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise EmbeddingError("embedding data contains non-finite values")
        object.__setattr__(self, "data", data)
        if self.ids is not None:
            ids = tuple(self.ids)
            if len(ids) != data.shape[0]:
                raise EmbeddingError(f"{len(ids)} ids for {data.shape[0]} rows")
            if len(set(ids)) != len(ids):
                raise EmbeddingError("embedding ids must be pairwise distinct")
            object.__setattr__(self, "ids", ids)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row_id(self, index: int) -> str:
        return self.ids[index] if self.ids is not None else str(index)


def write_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<II", matrix.rows, matrix.dim))
        fh.write(matrix.data.astype("<f4", copy=False).tobytes())
    if matrix.ids is not None:
        Path(str(path) + ".ids").write_text(
            "\n".join(matrix.ids) + ("\n" if matrix.ids else ""), encoding="utf-8")


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != EMB1_MAGIC:
        raise EmbeddingError(f"{path}: not an EMB1 file (bad magic)")
    if len(blob) < 12:
        raise EmbeddingError(f"{path}: truncated EMB1 header")
    rows, dim = struct.unpack("<II", blob[4:12])
    expected = 12 + rows * dim * 4
    if len(blob) != expected:
        raise EmbeddingError(f"{path}: expected {expected} bytes for {rows}x{dim}, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=12).reshape(rows, dim).copy()

    ids = None
    ids_path = Path(str(path) + ".ids")
    if ids_path.exists():
        text = ids_path.read_text(encoding="utf-8")
        ids = tuple(text.splitlines())
    return EmbeddingMatrix(data=data, ids=ids)


def max_pool(frames: np.ndarray) -> np.ndarray:
    """Elementwise maximum over the rows of a t x dim frame matrix."""
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise EmbeddingError("max_pool needs at least one frame row")
    return frames.max(axis=0)


def l2_normalize(matrix: EmbeddingMatrix) -> tuple[EmbeddingMatrix, int]:
    """Scale each row to unit L2 norm.

    Zero rows are passed through unchanged; their count is returned so
    callers can surface the data bug where it matters (similarity time).
    """
    norms = np.linalg.norm(matrix.data.astype(np.float64), axis=1)
    zero_rows = int(np.count_nonzero(norms == 0.0))
    safe = np.where(norms == 0.0, 1.0, norms)
    normalized = (matrix.data.astype(np.float64) / safe[:, None]).astype(np.float32)
    return EmbeddingMatrix(data=normalized, ids=matrix.ids), zero_rows


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def cosine_matrix(queries: EmbeddingMatrix | np.ndarray,
                  database: EmbeddingMatrix | np.ndarray) -> np.ndarray:
    """All-pairs cosine similarities as a float64 (n_queries x n_database) matrix."""
    q = queries.data if isinstance(queries, EmbeddingMatrix) else np.asarray(queries)
    d = database.data if isinstance(database, EmbeddingMatrix) else np.asarray(database)
    if q.ndim != 2 or d.ndim != 2:
        raise EmbeddingError("cosine_matrix expects 2-D inputs")
    if q.shape[1] != d.shape[1]:
        raise EmbeddingError(f"dimension mismatch: {q.shape[1]} vs {d.shape[1]}")
    q64 = q.astype(np.float64)
    d64 = d.astype(np.float64)
    qn = np.linalg.norm(q64, axis=1)
    dn = np.linalg.norm(d64, axis=1)
    if (qn == 0.0).any() or (dn == 0.0).any():
        row = int(np.flatnonzero(qn == 0.0)[0]) if (qn == 0.0).any() \
            else int(np.flatnonzero(dn == 0.0)[0])
        raise ZeroVectorError(f"zero embedding row {row}; cosine undefined")
    sims = (q64 @ d64.T) / np.outer(qn, dn)
    return np.clip(sims, -1.0, 1.0)
