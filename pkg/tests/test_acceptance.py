"""Acceptance criteria, one test each, with their tolerances and time limits.

Each test prints a PASS/FAIL line; the same lines are collected into an
"acceptance criteria" section of the pytest summary. Run this file directly
(``python3 tests/test_acceptance.py``) to get only those lines.
"""
from __future__ import annotations

import filecmp
import functools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_RESULTS, FIXTURES  # noqa: E402
from oracles import dtw_all_paths, max_matching_brute, transport_lp  # noqa: E402
from smtok.cli import main as cli_main  # noqa: E402
from smtok.grids import SystemGrid, audio_frame_count, flatten_system, unflatten_system  # noqa: E402
from smtok.lmx import DURATION_TOKENS, MAX_VOICE, PITCH_TOKENS, Measure, NoteElem, ScoreDoc, delinearize, linearize  # noqa: E402
from smtok.metrics import (  # noqa: E402
    EmbeddingStats,
    Histogram,
    dice_cost_matrix,
    dtw_align,
    emd_1d,
    emd_with_shifts,
    frechet_distance,
    match_onsets,
    shift_histogram,
)
from smtok.midi import MAX_TICK, Note, decode_midi_like, encode_midi_like, sort_notes  # noqa: E402
from smtok.sequences import (  # noqa: E402
    Direction,
    TaskKind,
    curriculum_active_tasks,
    default_schedule,
    sample_batch,
)
from smtok.vocab import ModalityTag, VocabSpec, build_vocab, default_spec, global_to_local, modality_mask, special_name  # noqa: E402
from smtok.ytsv import (  # noqa: E402
    FrameDiffSeq,
    PageSegment,
    SystemBox,
    height_filters,
    overlap_score,
    pair_segments,
    pixel_anomaly_score,
    video_intensity,
)


def criterion(name: str, limit_s: float):
    """Record PASS/FAIL for ``name``; a run over ``limit_s`` seconds fails too."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            try:
                detail = fn(*args, **kwargs) or ""
                elapsed = time.perf_counter() - start
                assert elapsed < limit_s, f"took {elapsed:.3f} s, limit {limit_s} s"
            except BaseException as exc:
                elapsed = time.perf_counter() - start
                line = (name, False, f"[{elapsed:.3f} s] {type(exc).__name__}: {exc}")
                ACCEPTANCE_RESULTS.append(line)
                print(f"FAIL  {name}  {line[2]}")
                raise
            line = (name, True, f"[{elapsed:.3f} s / {limit_s} s] {detail}")
            ACCEPTANCE_RESULTS.append(line)
            print(f"PASS  {name}  {line[2]}")

        return run

    return wrap


# 1 -----------------------------------------------------------------------------------


@criterion("audio_frame_count constants", 1e-3)
def test_audio_frame_count():
    assert audio_frame_count(20) == 1723
    assert audio_frame_count(1) == 87
    return "20 s -> 1723, 1 s -> 87"


# 2 -----------------------------------------------------------------------------------


@criterion("vocabulary layout and mask popcounts", 1.0)
def test_vocab_layout():
    spec = VocabSpec(notation_tokens=tuple(f"n{i}" for i in range(500)), midi_tokens=tuple(f"m{i}" for i in range(1000)))
    small = build_vocab(spec)
    codec = sum(hi - lo for (m, _), (lo, hi) in small.ranges.items() if m in (ModalityTag.IMAGE, ModalityTag.AUDIO))
    assert codec == 8192
    assert small.total == 9702
    assert modality_mask(small, ModalityTag.NOTATION).sum() == 502
    assert modality_mask(small, ModalityTag.IMAGE).sum() == 4098

    layout = build_vocab(default_spec())
    n_sym = {m: len(default_spec().symbols(m)) for m in (ModalityTag.NOTATION, ModalityTag.MIDI)}
    closed_form = {
        ModalityTag.IMAGE: 4 * 1024 + 2,
        ModalityTag.AUDIO: 4 * 1024 + 1,
        ModalityTag.NOTATION: n_sym[ModalityTag.NOTATION] + 2,
        ModalityTag.MIDI: n_sym[ModalityTag.MIDI] + 2,
    }
    masks = {m: modality_mask(layout, m) for m in ModalityTag}
    for m, expected in closed_form.items():
        assert int(masks[m].sum()) == expected, (m, int(masks[m].sum()), expected)
    # exhaustive: every id is either exactly one codebook slot or exactly one special
    for gid in range(layout.total):
        name = special_name(layout, gid)
        if name is None:
            m, _, _ = global_to_local(layout, gid)
            assert sum(masks[t][gid] for t in ModalityTag) == 1 and masks[m][gid]
        elif name.startswith("SOS"):
            assert not any(masks[t][gid] for t in ModalityTag)
    return f"|V|={layout.total}, popcounts {[int(masks[m].sum()) for m in ModalityTag]}"


# 3 -----------------------------------------------------------------------------------


def random_doc(rng: np.random.Generator) -> ScoreDoc:
    measures = []
    for _ in range(rng.integers(0, 6)):
        voices = {}
        for v in sorted(rng.choice(np.arange(1, MAX_VOICE + 1), size=rng.integers(0, 4), replace=False)):
            n = rng.integers(1 if v == 1 else 0, 6)
            voices[int(v)] = [
                NoteElem(
                    pitch=None if rng.random() < 0.15 else str(rng.choice(PITCH_TOKENS)),
                    duration=str(rng.choice(DURATION_TOKENS)),
                    dots=int(rng.integers(0, 3)),
                    chord=bool(rng.random() < 0.2),
                    tie=bool(rng.random() < 0.1),
                    staff=int(rng.integers(1, 3)),
                )
                for _ in range(n)
            ]
        measures.append(Measure(voices))
    return ScoreDoc(measures)


def random_notes(rng: np.random.Generator, on_grid: bool) -> list[Note]:
    notes = []
    for program in rng.choice([0, 1, 33, 40], size=rng.integers(1, 3), replace=False):
        for pitch in rng.choice(128, size=rng.integers(0, 6), replace=False):
            t = int(rng.integers(0, 100)) * 10
            for _ in range(rng.integers(0, 4)):
                length = int(rng.integers(1, 60)) * 10
                if t + length > MAX_TICK * 10 - 10:
                    break
                if on_grid:
                    notes.append(Note(t, t + length, int(pitch), int(program)))
                else:
                    j_on = rng.uniform(0 if t == 0 else -4.99, 4.99)
                    notes.append(Note(t + j_on, t + length + rng.uniform(-4.99, 4.99), int(pitch), int(program)))
                t += length + int(rng.integers(0, 5)) * 10
    return sort_notes(notes)


@criterion("round trips: LMX x1000, MIDI grid/off-grid, flatten <= 8x8", 30.0)
def test_round_trips():
    rng = np.random.default_rng(20240501)
    for _ in range(1000):
        doc = random_doc(rng)
        assert delinearize(linearize(doc)) == doc

    worst = 0.0
    for _ in range(1000):
        notes = random_notes(rng, on_grid=True)
        assert decode_midi_like(encode_midi_like(notes).tokens) == (notes, 0)
        off = random_notes(rng, on_grid=False)
        decoded, repairs = decode_midi_like(encode_midi_like(off).tokens)
        assert repairs == 0 and len(decoded) == len(off)
        pending = {}
        for n in off:
            pending.setdefault((n.program, n.pitch), []).append(n)
        for n in decoded:
            o = pending[(n.program, n.pitch)].pop(0)
            worst = max(worst, abs(n.onset - o.onset), abs(n.offset - o.offset))
    assert worst <= 5.0

    shapes = 0
    for rows in range(1, 9):
        for cols in range(1, 9):
            g = SystemGrid(rng.integers(0, 1024, size=(rows, cols, 4)))
            assert np.array_equal(unflatten_system(flatten_system(g), rows, cols).entries, g.entries)
            shapes += 1
    return f"1000 docs, 1000+1000 note lists (max error {worst:.2f} ms), {shapes} shapes"


# 4 -----------------------------------------------------------------------------------


@criterion("DTW cost equals all-paths oracle (200 pairs, <= 8 frames)", 10.0)
def test_dtw_oracle():
    rng = np.random.default_rng(4)
    for _ in range(200):
        r, e = rng.integers(1, 9, size=2)
        ref = rng.random((r, 128)) < rng.choice([0.0, 0.02, 0.05])
        est = rng.random((e, 128)) < rng.choice([0.0, 0.02, 0.05])
        assert dtw_align(ref, est).cost == dtw_all_paths(dice_cost_matrix(ref, est))
    return "exact equality on 200 pairs"


# 5 -----------------------------------------------------------------------------------


@criterion("onset matching equals brute-force maximum matching (500 instances)", 10.0)
def test_matching_oracle():
    rng = np.random.default_rng(5)
    total = 0
    for _ in range(500):
        def notes():
            return [Note(int(rng.integers(0, 12)) * 25, 1000, int(rng.choice([60, 61]))) for _ in range(rng.integers(0, 7))]

        ref, est = notes(), notes()
        tol = float(rng.choice([25, 50, 100]))
        m = match_onsets(ref, est, tol)
        assert m == max_matching_brute(ref, est, tol)
        total += m
    return f"{total} matches in total, all equal"


# 6 -----------------------------------------------------------------------------------


@criterion("emd_1d equals LP transport (200 pairs, 13 bins, 1e-9); shifted prediction -> 0", 10.0)
def test_emd_oracle():
    rng = np.random.default_rng(6)
    bins = DURATION_TOKENS
    worst = 0.0
    for _ in range(200):
        a = rng.integers(0, 10, size=13).astype(float)
        b = rng.integers(0, 10, size=13).astype(float)
        a[rng.integers(13)] += 1
        b[rng.integers(13)] += 1
        mine = emd_1d(Histogram(bins, a), Histogram(bins, b))
        err = abs(mine - transport_lp(a / a.sum(), b / b.sum()))
        worst = max(worst, err)
        assert err <= 1e-9
    for _ in range(50):
        ref = np.zeros(13)
        ref[1:12] = rng.integers(0, 10, size=11)
        ref[rng.integers(1, 12)] += 1
        for s in (-1, 1):
            pred = shift_histogram(Histogram(bins, ref), s)
            assert emd_with_shifts(Histogram(bins, ref), pred) == 0.0
    return f"max |error| {worst:.2e}"


# 7 -----------------------------------------------------------------------------------

# every expected value below was worked out by hand from the rule definitions
GOLDEN_FILTER_CASES = [
    ("intensity mean 210 keeps", lambda: video_intensity([210, 190, 230]), (210.0, True)),
    ("intensity mean 160 drops", lambda: video_intensity([150, 160, 170]), (160.0, False)),
    ("intensity exactly 200 keeps", lambda: video_intensity([200]), (200.0, True)),
    ("intensity 199.95 drops", lambda: video_intensity([199.5, 200.4]), (199.95, False)),
    ("pixel anomaly -0.5 drops", lambda: pixel_anomaly_score(100, 110, 200, 220), (-0.5, False)),
    ("pixel anomaly 0 keeps", lambda: pixel_anomaly_score(200, 220, 200, 220), (0.0, True)),
    ("pixel anomaly -0.02386 keeps", lambda: pixel_anomaly_score(195, 215, 200, 220), (-0.023863636363636365, True)),
    ("pixel anomaly exactly 0.1 keeps", lambda: pixel_anomaly_score(220, 242, 200, 220), (0.1, True)),
    ("pixel anomaly 0.14318 drops", lambda: pixel_anomaly_score(230, 250, 200, 220), (0.14318181818181819, False)),
    ("height 60 out of range", lambda: _height(60, 300), (False, True)),
    ("height 70 in range", lambda: _height(70, 300), (True, True)),
    ("height 390 in range", lambda: _height(390, 1000), (True, True)),
    ("height 391 out of range", lambda: _height(391, 1000), (False, True)),
    ("height equal to width fails", lambda: _height(100, 100), (True, False)),
    ("z 1.732 drops the tall system", lambda: _z([100, 100, 100, 160]), ([-0.5773502691896258] * 3 + [1.7320508075688772], [True] * 3 + [False])),
    ("z +-1 keeps both", lambda: _z([100, 120]), ([-1.0, 1.0], [True, True])),
    ("overlap disjoint 0", lambda: overlap_score(SystemBox(0, 0, 10, 100), SystemBox(0, 200, 10, 100)), (0.0, True)),
    ("overlap 50 drops", lambda: overlap_score(SystemBox(0, 0, 10, 100), SystemBox(5, 95, 5, 50)), (50.0, False)),
    ("overlap exactly 25 keeps", lambda: overlap_score(SystemBox(0, 0, 5, 100), SystemBox(0, 95, 5, 100)), (25.0, True)),
    ("duration window 3..20 s inclusive", lambda: _durations([90, 600, 87, 603], 30), [True, True, False, False]),
]


def _height(h, w):
    v = height_filters([h], [w])[0]
    return v.in_range, v.shorter_than_wide


def _z(heights):
    vs = height_filters(heights, [1000] * len(heights))
    return [v.z_score for v in vs], [v.z_ok for v in vs]


def _durations(frame_counts, fps):
    segs, start = [], 0
    for n in frame_counts:
        segs.append(PageSegment("static", start, start + n))
        start += n + 3
    kept = {s.start for s, _ in pair_segments(segs, [False] * len(segs), fps)}
    return [s.start in kept for s in segs]


def _close(got, want) -> bool:
    if isinstance(want, bool) or want is None:
        return got is want or got == want
    if isinstance(want, float):
        return isinstance(got, (int, float)) and not isinstance(got, bool) and abs(got - want) <= 1e-9
    if isinstance(want, (list, tuple)):
        return len(got) == len(want) and all(_close(g, w) for g, w in zip(got, want))
    return got == want


@criterion("filter formulas reproduce the 20-case golden table", 1.0)
def test_filter_golden_table():
    assert len(GOLDEN_FILTER_CASES) == 20
    bad = [(name, fn(), want) for name, fn, want in GOLDEN_FILTER_CASES if not _close(fn(), want)]
    assert not bad, bad
    return "20/20 cases"


# 8 -----------------------------------------------------------------------------------


@criterion("curriculum gating and reproducible sampling", 5.0)
def test_curriculum():
    expected = {
        Direction.I2A: [(0, {"OMR"}), (15_000, {"OMR", "M2A"}), (50_000, {"OMR", "M2A", "I2A"})],
        Direction.A2I: [(0, {"AMT"}), (40_000, {"AMT", "L2I"}), (70_000, {"AMT", "L2I", "A2I"})],
    }
    for direction, stages in expected.items():
        sched = default_schedule(direction)
        changes = []
        prev = None
        for step in sorted({0, 1} | {s + d for s, _ in stages for d in (-1, 0, 1) if s + d >= 0} | {100_000}):
            active = {t.name for t in curriculum_active_tasks(step, sched)}
            if active != prev:
                changes.append((step, active))
            prev = active
        assert changes == stages, (direction, changes)

        sizes = {t: 1000 for t in sched.tasks}
        steps = [0, 14_999, 15_000, 39_999, 40_000, 50_000, 70_000, 123_456]
        run1 = [sample_batch(s, sched, sizes, 64, seed=17) for s in steps]
        run2 = [sample_batch(s, sched, sizes, 64, seed=17) for s in steps]
        assert run1 == run2
        for s, batch in zip(steps, run1):
            assert {t for t, _ in batch} <= curriculum_active_tasks(s, sched)
    assert {t.name for t, _ in sample_batch(50_000, default_schedule("I2A"), {t: 9 for t in TaskKind}, 64, 17)} == {
        "OMR", "M2A", "I2A"
    }
    return "I2A changes at 15000/50000, A2I at 40000/70000; sampler identical across runs"


# 9 -----------------------------------------------------------------------------------


@criterion("Frechet distance: 1-D closed form (1e-9); symmetric, non-negative in 4-D", 5.0)
def test_frechet():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        mu_a, mu_b = rng.normal(scale=3, size=2)
        sa, sb = rng.uniform(0.05, 4, size=2)
        got = frechet_distance(EmbeddingStats([mu_a], [[sa**2]]), EmbeddingStats([mu_b], [[sb**2]]))
        want = (mu_a - mu_b) ** 2 + (sa - sb) ** 2
        worst = max(worst, abs(got - want))
        assert abs(got - want) <= 1e-9
    for _ in range(100):
        stats = []
        for _ in range(2):
            m = rng.normal(size=(4, 4))
            stats.append(EmbeddingStats(rng.normal(size=4), m @ m.T + rng.uniform(0, 0.5) * np.eye(4)))
        ab, ba = frechet_distance(*stats), frechet_distance(*stats[::-1])
        assert ab >= 0 and ba >= 0
        assert math.isclose(ab, ba, rel_tol=1e-9, abs_tol=1e-9)
    return f"max 1-D error {worst:.2e}"


# 10 ----------------------------------------------------------------------------------


def _pipeline(out: Path) -> None:
    assert cli_main(["segment", str(FIXTURES / "videos.jsonl"), str(out / "seg.jsonl"), "--figures", str(out / "fig")]) == 0
    assert cli_main(["filter", str(out / "seg.jsonl"), str(out / "filtered.jsonl"), "--threshold", "max_height_z=1.5"]) == 0
    assert cli_main([
        "evaluate",
        "--reference", str(FIXTURES / "reference.jsonl"),
        "--hypothesis", str(FIXTURES / "hypothesis.jsonl"),
        "--ref-emb", str(FIXTURES / "reference.emb"),
        "--hyp-emb", str(FIXTURES / "hypothesis.emb"),
        "--figures", str(out / "fig"),
        str(out / "report.json"),
    ]) == 0


def _tree(root: Path) -> list[str]:
    return sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file())


@criterion("end-to-end CLI determinism (segment + filter + evaluate)", 30.0)
def test_cli_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _pipeline(a)
    _pipeline(b)
    files = _tree(a)
    assert files == _tree(b)
    assert {"seg.jsonl", "filtered.jsonl", "report.json"} <= set(files)
    differing = [f for f in files if not filecmp.cmp(a / f, b / f, shallow=False)]
    assert not differing, differing
    return f"{len(files)} files byte-identical"


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount] or name == "test_cli_determinism":
                    with tempfile.TemporaryDirectory() as tmp:
                        fn(Path(tmp))
                else:
                    fn()
            except BaseException:
                failed += 1
    sys.exit(1 if failed else 0)
