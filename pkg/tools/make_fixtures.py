"""Regenerate the bundled fixture corpus under src/smtok/data/fixtures."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from smtok.metrics import write_embeddings

OUT = Path(__file__).resolve().parents[1] / "src" / "smtok" / "data" / "fixtures"


def _flags(runs):
    out = []
    for state, n in runs:
        out += [state] * n
    return out


def _segment(n_sys, median=232.0, mean=236.0, silent=False, heights=None, overlap=False):
    heights = heights or [110.0] * n_sys
    boxes, y = [], 40.0
    for h in heights:
        boxes.append([60.0, y, 1100.0, h])
        y += h + 30.0
    if overlap:
        # push the last system up into the one above it
        boxes[-1][1] = boxes[-2][1] + boxes[-2][3] - 4.0
    return {
        "silent": silent,
        "medians": [median + k for k in range(n_sys)],
        "means": [mean - k for k in range(n_sys)],
        "boxes": boxes,
        "staff_heights": [24.0] * n_sys,
    }


def videos():
    # 30 fps sampled every 3rd frame: one flag covers 0.1 s
    turns = {
        "video_id": "turns",
        "fps": 30.0,
        "diff_flags": _flags([(False, 50), (True, 2), (False, 80), (True, 3), (False, 60), (True, 2), (False, 100)]),
        "segments": [
            _segment(3),
            _segment(4, heights=[110.0, 112.0, 108.0, 180.0]),
            _segment(3, silent=True),
            _segment(3, overlap=True),
        ],
    }
    silent = {
        "video_id": "silent",
        "fps": 25.0,
        "diff_flags": _flags([(False, 60), (True, 4), (False, 70)]),
        "segments": [_segment(2, silent=True), _segment(2, silent=True)],
    }
    dark = {
        "video_id": "dark",
        "fps": 30.0,
        "diff_flags": _flags([(True, 3), (False, 90)]),
        "segments": [_segment(2, median=150.0, mean=160.0)],
    }
    short = {
        "video_id": "short",
        "fps": 30.0,
        "diff_flags": _flags([(False, 25), (True, 2), (False, 250)]),
        "segments": [_segment(2), _segment(2, heights=[60.0, 400.0])],
    }
    return [turns, silent, dark, short]


def pairs():
    rng = np.random.default_rng(7)
    refs, hyps = [], []
    # pair 1: identical
    notes = [[i * 250, i * 250 + 200, int(p)] for i, p in enumerate(rng.integers(55, 80, size=12))]
    lmx = "measure C4 quarter E4 quarter G4 half measure chord C4 whole"
    refs.append({"id": "p01", "notes": notes, "lmx": lmx})
    hyps.append({"id": "p01", "notes": notes, "lmx": lmx})
    # pair 2: one wrong pitch among 10 tokens, hypothesis played 1.5x slower
    ref_lmx = "measure C4 quarter D4 quarter measure E4 quarter F4 quarter"
    hyp_lmx = "measure C4 quarter D4 quarter measure E4 quarter G4 quarter"
    ref_notes = [[i * 400, i * 400 + 300, p] for i, p in enumerate([60, 62, 64, 65, 67, 69, 71, 72])]
    hyp_notes = [[i * 600, i * 600 + 450, p] for i, p in enumerate([60, 62, 64, 65, 67, 69, 71, 72])]
    refs.append({"id": "p02", "notes": ref_notes, "lmx": ref_lmx})
    hyps.append({"id": "p02", "notes": hyp_notes, "lmx": hyp_lmx})
    # pair 3: durations consistently one class longer
    refs.append({"id": "p03", "notes": [[0, 500, 48], [500, 1000, 52], [1000, 2000, 55]],
                 "lmx": "measure C3 eighth E3 eighth G3 quarter voice2 rest half"})
    hyps.append({"id": "p03", "notes": [[0, 480, 48], [530, 1000, 52], [1020, 2000, 56]],
                 "lmx": "measure C3 quarter E3 quarter G3 half voice2 rest whole"})
    return refs, hyps


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "videos.jsonl", "w") as fh:
        for rec in videos():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    refs, hyps = pairs()
    for name, recs in (("reference.jsonl", refs), ("hypothesis.jsonl", hyps)):
        with open(OUT / name, "w") as fh:
            for rec in recs:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    rng = np.random.default_rng(11)
    write_embeddings(OUT / "reference.emb", rng.normal(0.0, 1.0, size=(64, 8)).astype(np.float32))
    write_embeddings(OUT / "hypothesis.emb", rng.normal(0.3, 1.2, size=(64, 8)).astype(np.float32))


if __name__ == "__main__":
    main()
