"""Evaluation metrics: DTW alignment, onset F1, token-histogram EMD and Fréchet distance."""
from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .lmx import DURATION_TOKENS, PITCH_TOKENS
from .midi import Note, sort_notes

ONSET_TOLERANCES_MS = (50, 100, 200)
DURATION_SHIFTS = (-1, 0, 1)

# EMD histograms are compared as unit-mass distributions; flip to compare raw counts
NORMALIZE_HISTOGRAMS = True


# -- DTW ------------------------------------------------------------------------


@dataclass
class AlignmentPath:
    pairs: list[tuple[int, int]]  # (reference frame, estimate frame)
    cost: float


def dice_cost_matrix(ref: np.ndarray, est: np.ndarray) -> np.ndarray:
    """``1 - 2|A∩B| / (|A|+|B|)`` between the active-pitch sets of every frame pair."""
    a = np.asarray(ref, dtype=bool)
    b = np.asarray(est, dtype=bool)
    inter = a.astype(np.int64) @ b.astype(np.int64).T
    sizes = a.sum(axis=1)[:, None] + b.sum(axis=1)[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        cost = 1.0 - (2.0 * inter) / sizes
    cost[sizes == 0] = 0.0
    return cost


def _accumulate(cost: np.ndarray) -> np.ndarray:
    """Cumulative DTW cost, filled one anti-diagonal at a time."""
    R, E = cost.shape
    acc = np.full((R + 1, E + 1), np.inf)
    acc[0, 0] = 0.0
    for s in range(R + E - 1):
        i = np.arange(max(0, s - E + 1), min(R, s + 1))
        j = s - i
        prev = np.minimum(np.minimum(acc[i, j], acc[i, j + 1]), acc[i + 1, j])
        acc[i + 1, j + 1] = prev + cost[i, j]
    return acc


def dtw_align(ref_roll: np.ndarray, est_roll: np.ndarray) -> AlignmentPath:
    """Monotone alignment with steps (1,1), (1,0), (0,1) minimizing the summed Dice cost.

    Ties during backtracking prefer the diagonal, then a reference-only step.
    """
    if len(ref_roll) == 0 or len(est_roll) == 0:
        raise ValueError("both piano rolls need at least one frame")
    cost = dice_cost_matrix(ref_roll, est_roll)
    acc = _accumulate(cost)
    i, j = cost.shape[0], cost.shape[1]
    path = [(i - 1, j - 1)]
    while (i, j) != (1, 1):
        options = [(acc[i - 1, j - 1], i - 1, j - 1), (acc[i - 1, j], i - 1, j), (acc[i, j - 1], i, j - 1)]
        best = min(v for v, _, _ in options)
        _, i, j = next(o for o in options if o[0] == best)
        path.append((i - 1, j - 1))
    path.reverse()
    return AlignmentPath(path, float(acc[cost.shape[0], cost.shape[1]]))


def path_cost(cost: np.ndarray, pairs: Sequence[tuple[int, int]]) -> float:
    total = 0.0
    for r, e in pairs:
        total += cost[r, e]
    return float(total)


def warp_notes(notes: Sequence[Note], path: AlignmentPath, frame: float) -> list[Note]:
    """Move estimate notes onto the reference timeline through ``path``.

    A time in estimate frame ``e`` lands in the first reference frame paired
    with ``e``, keeping its offset within the frame. Times past the last
    estimate frame are extrapolated one-to-one.
    """
    if not notes:
        return []
    first_ref: dict[int, int] = {}
    for r, e in path.pairs:
        first_ref.setdefault(e, r)
    last_e = max(first_ref)

    def warp(t: float) -> float:
        e = max(math.floor(t / frame), 0)
        resid = t - e * frame
        r = first_ref[e] if e <= last_e else first_ref[last_e] + (e - last_e)
        return r * frame + resid

    out = []
    for n in notes:
        on, off = warp(n.onset), warp(n.offset)
        if off <= on:
            off = on + frame
        out.append(Note(on, off, n.pitch, n.program))
    return sort_notes(out)


# -- onset F1 -------------------------------------------------------------------


def match_onsets(reference: Sequence[Note], estimate: Sequence[Note], tolerance: float) -> int:
    """Size of a maximum matching between same-pitch notes with onsets within ``tolerance``."""
    if not reference or not estimate:
        return 0
    rows, cols = [], []
    for i, r in enumerate(reference):
        for j, e in enumerate(estimate):
            if r.pitch == e.pitch and abs(r.onset - e.onset) <= tolerance:
                rows.append(i)
                cols.append(j)
    if not rows:
        return 0
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(reference), len(estimate)))
    matching = maximum_bipartite_matching(graph, perm_type="column")
    return int(np.count_nonzero(matching >= 0))


def onset_f1(reference: Sequence[Note], estimate: Sequence[Note], tolerance: float) -> tuple[float, float, float]:
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    m = match_onsets(reference, estimate, tolerance)
    precision = m / len(estimate) if estimate else 0.0
    recall = m / len(reference) if reference else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


# -- histograms and EMD ---------------------------------------------------------


@dataclass
class Histogram:
    bins: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        self.bins = tuple(self.bins)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (len(self.bins),):
            raise ValueError("one count per bin required")
        if (self.counts < 0).any():
            raise ValueError("histogram counts must be non-negative")


def token_histograms(tokens: Sequence[str]) -> tuple[Histogram, Histogram]:
    counts = Counter(tokens)
    pitch = Histogram(PITCH_TOKENS, [counts.get(p, 0) for p in PITCH_TOKENS])
    duration = Histogram(DURATION_TOKENS, [counts.get(d, 0) for d in DURATION_TOKENS])
    return pitch, duration


def _mass(counts: np.ndarray) -> np.ndarray:
    total = counts.sum()
    if total == 0:
        return np.full(counts.shape, 1.0 / len(counts))
    return counts / total if NORMALIZE_HISTOGRAMS else counts


def emd_1d(a: Histogram, b: Histogram) -> float:
    """Earth mover's distance between two histograms on the same unit-spaced bins."""
    if a.bins != b.bins:
        raise ValueError("histograms have different bins")
    diff = np.cumsum(_mass(a.counts)) - np.cumsum(_mass(b.counts))
    return float(np.abs(diff).sum())


def shift_histogram(h: Histogram, shift: int) -> Histogram:
    """Move every count ``shift`` bins to the right, dropping what falls off either end."""
    out = np.zeros_like(h.counts)
    n = len(out)
    if abs(shift) >= n:
        pass
    elif shift >= 0:
        out[shift:] = h.counts[: n - shift]
    else:
        out[: n + shift] = h.counts[-shift:]
    return Histogram(h.bins, out)


def shifted_emds(reference: Histogram, predicted: Histogram, shifts: Sequence[int] = DURATION_SHIFTS) -> dict[int, float]:
    return {s: emd_1d(reference, shift_histogram(predicted, s)) for s in shifts}


def emd_with_shifts(reference: Histogram, predicted: Histogram, shifts: Sequence[int] = DURATION_SHIFTS) -> float:
    return min(shifted_emds(reference, predicted, shifts).values())


# -- Fréchet distance -----------------------------------------------------------


@dataclass
class EmbeddingStats:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        D = self.mean.shape[0]
        if self.cov.shape != (D, D):
            raise ValueError(f"covariance shape {self.cov.shape} does not match mean dimension {D}")


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def frechet_distance(a: EmbeddingStats, b: EmbeddingStats) -> float:
    """Fréchet distance between Gaussians fitted to two embedding sets."""
    if a.mean.shape != b.mean.shape:
        raise ValueError(f"dimension mismatch: {a.mean.shape[0]} vs {b.mean.shape[0]}")
    for arr in (a.mean, a.cov, b.mean, b.cov):
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding statistics contain non-finite values")
    # Tr((Sa Sb)^1/2) = Tr((Sa^1/2 Sb Sa^1/2)^1/2), whose argument is symmetric PSD
    root_a = _psd_sqrt(a.cov)
    inner = root_a @ b.cov @ root_a
    w = np.linalg.eigvalsh((inner + inner.T) / 2)
    tr_cross = float(np.sqrt(np.clip(w, 0, None)).sum())
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2 * tr_cross)
    return max(value, 0.0)


def fit_embedding_stats(rows: np.ndarray) -> EmbeddingStats:
    x = np.asarray(rows, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an N x D matrix with N >= 2")
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    return EmbeddingStats(x.mean(axis=0), (cov + cov.T) / 2)


_EMB_HEADER = struct.Struct("<4sII")


def dumps_embeddings(rows: np.ndarray) -> bytes:
    x = np.asarray(rows, dtype="<f4")
    if x.ndim != 2:
        raise ValueError("embeddings must be 2-D")
    return _EMB_HEADER.pack(b"EMB1", x.shape[0], x.shape[1]) + x.tobytes()


def loads_embeddings(data: bytes) -> np.ndarray:
    if len(data) < _EMB_HEADER.size:
        raise ValueError("truncated EMB1 header")
    magic, n, d = _EMB_HEADER.unpack_from(data)
    if magic != b"EMB1":
        raise ValueError(f"bad magic {magic!r}, expected b'EMB1'")
    body = data[_EMB_HEADER.size :]
    if len(body) != 4 * n * d:
        raise ValueError(f"EMB1 body has {len(body)} bytes, expected {4 * n * d}")
    return np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float64)


def read_embeddings(path: str | Path) -> np.ndarray:
    return loads_embeddings(Path(path).read_bytes())


def write_embeddings(path: str | Path, rows: np.ndarray) -> None:
    Path(path).write_bytes(dumps_embeddings(rows))
