"""Per-pair and aggregate evaluation of generated notes, LMX and embeddings."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lmx import symbol_error_rate
from .metrics import (
    ONSET_TOLERANCES_MS,
    AlignmentPath,
    dtw_align,
    emd_1d,
    fit_embedding_stats,
    frechet_distance,
    onset_f1,
    shifted_emds,
    token_histograms,
    warp_notes,
)
from .midi import Note, notes_from_rows, to_piano_roll


@dataclass
class EvalOptions:
    use_dtw: bool = True
    frame_ms: float = 10.0
    tolerances: tuple[int, ...] = ONSET_TOLERANCES_MS


@dataclass
class PairDetail:
    """Intermediate products kept around for plotting."""

    ref_notes: list[Note] | None = None
    est_notes: list[Note] | None = None
    aligned_notes: list[Note] | None = None
    path: AlignmentPath | None = None
    ref_lmx: list[str] | None = None
    hyp_lmx: list[str] | None = None


def evaluate_pair(ref: dict, hyp: dict, options: EvalOptions = EvalOptions()) -> tuple[dict, PairDetail]:
    result: dict = {"id": ref["id"]}
    detail = PairDetail()
    if "notes" in ref and "notes" in hyp:
        ref_notes = notes_from_rows(ref["notes"])
        est_notes = notes_from_rows(hyp["notes"])
        aligned = est_notes
        if options.use_dtw and ref_notes and est_notes:
            path = dtw_align(to_piano_roll(ref_notes, options.frame_ms), to_piano_roll(est_notes, options.frame_ms))
            aligned = warp_notes(est_notes, path, options.frame_ms)
            detail.path = path
            result["dtw_cost"] = path.cost
        result["onset_f1"] = {}
        for tol in options.tolerances:
            p, r, f = onset_f1(ref_notes, aligned, tol)
            result["onset_f1"][str(tol)] = {"precision": p, "recall": r, "f1": f}
        detail.ref_notes, detail.est_notes, detail.aligned_notes = ref_notes, est_notes, aligned
    if "lmx" in ref and "lmx" in hyp:
        ref_tokens, hyp_tokens = ref["lmx"].split(), hyp["lmx"].split()
        if ref_tokens:
            result["ser"] = symbol_error_rate(ref_tokens, hyp_tokens)
        ref_p, ref_d = token_histograms(ref_tokens)
        hyp_p, hyp_d = token_histograms(hyp_tokens)
        result["emd_pitch"] = emd_1d(ref_p, hyp_p)
        by_shift = shifted_emds(ref_d, hyp_d)
        best = min(by_shift, key=lambda s: (by_shift[s], abs(s)))
        result["emd_duration"] = by_shift[best]
        result["emd_duration_shift"] = best
        detail.ref_lmx, detail.hyp_lmx = ref_tokens, hyp_tokens
    return result, detail


def _mean(values: Sequence[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def aggregate(pairs: Sequence[dict], tolerances: Sequence[int] = ONSET_TOLERANCES_MS) -> dict:
    f1 = {}
    for tol in tolerances:
        vals = [p["onset_f1"][str(tol)]["f1"] for p in pairs if "onset_f1" in p]
        if vals:
            f1[str(tol)] = _mean(vals)
    return {
        "onset_f1": f1 or None,
        "ser": _mean([p["ser"] for p in pairs if "ser" in p]),
        "emd_pitch": _mean([p["emd_pitch"] for p in pairs if "emd_pitch" in p]),
        "emd_duration": _mean([p["emd_duration"] for p in pairs if "emd_duration" in p]),
    }


def fad_from_embeddings(reference: np.ndarray, generated: np.ndarray) -> float:
    return frechet_distance(fit_embedding_stats(reference), fit_embedding_stats(generated))


def pair_records(references: Sequence[dict], hypotheses: Sequence[dict]) -> list[tuple[dict, dict]]:
    """Match records by ``id``; any id present on one side only is an error."""
    if not hypotheses:
        raise ValueError("hypothesis set is empty")
    ref_by_id = {r["id"]: r for r in references}
    hyp_by_id = {h["id"]: h for h in hypotheses}
    unmatched = sorted(set(ref_by_id) ^ set(hyp_by_id))
    if unmatched:
        raise ValueError(f"unmatched pair ids: {', '.join(map(str, unmatched))}")
    return [(ref_by_id[k], hyp_by_id[k]) for k in sorted(ref_by_id)]
