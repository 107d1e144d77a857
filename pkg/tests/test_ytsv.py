import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from smtok.ytsv import (
    DEFAULT_THRESHOLDS,
    FrameDiffSeq,
    MalformedRecord,
    PageSegment,
    SystemBox,
    filter_video,
    height_filters,
    normalize_staff_height,
    overlap_score,
    page_list,
    pair_segments,
    pixel_anomaly_score,
    segment_slides,
    segment_video,
    video_intensity,
)

T, F = True, False


def test_segment_examples():
    assert segment_slides(FrameDiffSeq([F, F, T, T, F, F], 30)) == [
        PageSegment("static", 0, 6),
        PageSegment("static", 12, 18),
    ]
    assert [p.state for p in page_list(FrameDiffSeq([F, F, T, T, F, F], 30))] == ["static", "transition", "static"]
    assert segment_slides(FrameDiffSeq([F] * 5, 30)) == [PageSegment("static", 0, 15)]
    assert segment_slides(FrameDiffSeq([T, F], 30)) == [PageSegment("static", 3, 6)]
    assert segment_slides(FrameDiffSeq([], 30)) == []


@given(st.lists(st.booleans(), max_size=60))
def test_pages_tile_the_video(flags):
    pages = page_list(FrameDiffSeq(flags, 30))
    assert sum(p.end - p.start for p in pages) == 3 * len(flags)
    for a, b in zip(pages, pages[1:]):
        assert a.end == b.start and a.state != b.state
    n_static_runs = sum(1 for i, f in enumerate(flags) if not f and (i == 0 or flags[i - 1]))
    assert len(segment_slides(FrameDiffSeq(flags, 30))) == n_static_runs


def test_pairing_examples():
    segs = [PageSegment("static", 0, 300), PageSegment("static", 300, 375), PageSegment("static", 400, 700)]
    kept = pair_segments(segs, [F, F, T], 30)
    assert kept == [(segs[0], 10.0)]
    with pytest.raises(ValueError):
        pair_segments(segs, [F], 30)


def test_intensity_examples():
    assert video_intensity([210, 190, 230]) == (210, True)
    assert video_intensity([150, 160, 170]) == (160, False)
    assert video_intensity([200]) == (200, True)


def test_pixel_anomaly_examples():
    assert pixel_anomaly_score(100, 110, 200, 220) == (-0.5, False)
    assert pixel_anomaly_score(200, 220, 200, 220) == (0.0, True)
    score, ok = pixel_anomaly_score(195, 215, 200, 220)
    assert score == pytest.approx((-5 / 200 - 5 / 220) / 2, abs=1e-12) and ok


def test_height_examples():
    assert not height_filters([60], [300])[0].ok
    assert height_filters([100], [300])[0].ok
    verdicts = height_filters([100, 100, 100, 160], [500] * 4)
    assert verdicts[3].z_score == pytest.approx(45 / (675**0.5), abs=1e-12)
    assert [v.z_ok for v in verdicts] == [T, T, T, F]


def test_overlap_examples():
    a, b = SystemBox(0, 0, 10, 100), SystemBox(0, 200, 10, 100)
    assert overlap_score(a, b) == (0.0, True)
    tall, short = SystemBox(0, 0, 10, 100), SystemBox(5, 95, 5, 50)
    assert overlap_score(tall, short) == (50.0, False)
    assert overlap_score(a, a) == (1000.0, False)


def test_staff_normalization_examples():
    assert normalize_staff_height(SystemBox(0, 0, 200, 100, staff_height=24)) == (0.75, (150, 75))
    assert normalize_staff_height(SystemBox(0, 0, 200, 100, staff_height=18)) == (1.0, (200, 100))
    assert normalize_staff_height(SystemBox(0, 0, 100, 40, staff_height=9)) == (2.0, (200, 80))
    with pytest.raises(ValueError):
        normalize_staff_height(SystemBox(0, 0, 100, 40))


def test_threshold_overrides():
    t = DEFAULT_THRESHOLDS.with_overrides({"max_height_z": 2})
    assert t.max_height_z == 2.0 and DEFAULT_THRESHOLDS.max_height_z == 1.2
    with pytest.raises(ValueError):
        DEFAULT_THRESHOLDS.with_overrides({"nope": 1})


def _load(fixtures_dir):
    return [json.loads(line) for line in open(fixtures_dir / "videos.jsonl")]


def test_fixture_page_turns(fixtures_dir):
    turns = next(v for v in _load(fixtures_dir) if v["video_id"] == "turns")
    out = segment_video(turns)
    assert len(out["segments"]) == 4
    assert [s["kept"] for s in out["segments"]] == [T, T, F, T]
    # the tall system in segment 1 and both overlapping systems in segment 3 are rejected
    assert [s["kept"] for s in out["segments"][1]["systems"]] == [T, T, T, F]
    assert [s["kept"] for s in out["segments"][3]["systems"]] == [T, F, F]


def test_fixture_silent_and_dark(fixtures_dir):
    videos = {v["video_id"]: v for v in _load(fixtures_dir)}
    assert segment_video(videos["silent"])["n_kept_segments"] == 0
    dark = segment_video(videos["dark"])
    assert not dark["kept"] and dark["video_intensity"]["value"] == 150.5


def test_refilter_is_idempotent(fixtures_dir):
    for rec in _load(fixtures_dir):
        once = segment_video(rec)
        assert filter_video(once) == once


def test_malformed_records():
    with pytest.raises(MalformedRecord):
        segment_video({"fps": 30, "diff_flags": []})
    with pytest.raises(MalformedRecord):
        segment_video({"video_id": "x", "fps": 30, "diff_flags": [F], "segments": []})
