"""Slide segmentation, audio pairing and the statistical filters for score videos.

The video-level inputs are precomputed upstream: frame-difference flags
sampled every third frame, per-segment silence flags, and per-system pixel
statistics, boxes and staff heights from the detectors.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, fields
from typing import Any, Sequence

SAMPLE_INTERVAL = 3
MANIFEST_SCHEMA = "ytsv-manifest/1"


@dataclass(frozen=True)
class FilterThresholds:
    min_video_intensity: float = 200.0
    max_pixel_anomaly: float = 0.1
    min_height: float = 70.0
    max_height: float = 390.0
    max_height_z: float = 1.2
    max_overlap: float = 25.0
    min_duration: float = 3.0
    max_duration: float = 20.0
    staff_height: float = 18.0

    def with_overrides(self, overrides: dict[str, float]) -> "FilterThresholds":
        known = {f.name for f in fields(self)}
        for key in overrides:
            if key not in known:
                raise ValueError(f"unknown threshold {key!r}; choose from {sorted(known)}")
        return FilterThresholds(**{**asdict(self), **{k: float(v) for k, v in overrides.items()}})


DEFAULT_THRESHOLDS = FilterThresholds()


@dataclass
class FrameDiffSeq:
    flags: list[bool]
    fps: float
    interval: int = SAMPLE_INTERVAL


@dataclass(frozen=True)
class PageSegment:
    state: str  # "static" or "transition"
    start: int  # frame index, inclusive
    end: int  # frame index, exclusive

    def duration(self, fps: float) -> float:
        return (self.end - self.start) / fps


@dataclass(frozen=True)
class SystemBox:
    x: float
    y: float
    width: float
    height: float
    page_id: str = ""
    staff_height: float | None = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"box must have positive size, got {self.width}x{self.height}")


# -- segmentation ---------------------------------------------------------------


def page_list(diffs: FrameDiffSeq) -> list[PageSegment]:
    """All merged segments, static and transition, tiling the sampled frames."""
    out: list[PageSegment] = []
    run_start = 0
    for i in range(1, len(diffs.flags) + 1):
        if i == len(diffs.flags) or diffs.flags[i] != diffs.flags[run_start]:
            state = "transition" if diffs.flags[run_start] else "static"
            out.append(PageSegment(state, run_start * diffs.interval, i * diffs.interval))
            run_start = i
    return out


def segment_slides(diffs: FrameDiffSeq) -> list[PageSegment]:
    return [s for s in page_list(diffs) if s.state == "static"]


def pair_segments(
    statics: Sequence[PageSegment],
    silent: Sequence[bool],
    fps: float,
    thresholds: FilterThresholds = DEFAULT_THRESHOLDS,
) -> list[tuple[PageSegment, float]]:
    if len(silent) != len(statics):
        raise ValueError(f"{len(silent)} silence flags for {len(statics)} segments")
    out = []
    for seg, quiet in zip(statics, silent):
        d = seg.duration(fps)
        if not quiet and thresholds.min_duration <= d <= thresholds.max_duration:
            out.append((seg, d))
    return out


# -- filters --------------------------------------------------------------------


def video_intensity(medians: Sequence[float], threshold: float = 200.0) -> tuple[float, bool]:
    """Mean of per-system median intensities; videos below ``threshold`` are dropped."""
    if not medians:
        raise ValueError("video has no systems")
    value = math.fsum(medians) / len(medians)
    return value, not value < threshold


def pixel_anomaly_score(
    system_median: float,
    system_mean: float,
    video_median: float,
    video_mean: float,
    threshold: float = 0.1,
) -> tuple[float, bool]:
    if video_median == 0 or video_mean == 0:
        raise ValueError("video median and mean must be nonzero")
    median_anomaly = (system_median - video_median) / video_median
    mean_anomaly = (system_mean - video_mean) / video_mean
    score = (median_anomaly + mean_anomaly) / 2
    return score, not abs(score) > threshold


@dataclass
class HeightVerdict:
    in_range: bool
    shorter_than_wide: bool
    z_score: float | None
    z_ok: bool

    @property
    def ok(self) -> bool:
        return self.in_range and self.shorter_than_wide and self.z_ok


def height_filters(
    heights: Sequence[float],
    widths: Sequence[float],
    thresholds: FilterThresholds = DEFAULT_THRESHOLDS,
) -> list[HeightVerdict]:
    if len(heights) != len(widths):
        raise ValueError("heights and widths differ in length")
    mu = sigma = None
    if len(heights) >= 2:
        mu = statistics.fmean(heights)
        sigma = statistics.pstdev(heights)
    out = []
    for h, w in zip(heights, widths):
        z = (h - mu) / sigma if sigma else None
        out.append(
            HeightVerdict(
                in_range=thresholds.min_height <= h <= thresholds.max_height,
                shorter_than_wide=h < w,
                z_score=z,
                z_ok=z is None or not abs(z) > thresholds.max_height_z,
            )
        )
    return out


def intersection_area(a: SystemBox, b: SystemBox) -> float:
    dx = min(a.x + a.width, b.x + b.width) - max(a.x, b.x)
    dy = min(a.y + a.height, b.y + b.height) - max(a.y, b.y)
    return dx * dy if dx > 0 and dy > 0 else 0.0


def overlap_score(a: SystemBox, b: SystemBox, threshold: float = 25.0) -> tuple[float, bool]:
    area = intersection_area(a, b)
    score = area / min(a.height, b.height) * max(a.height, b.height) if area else 0.0
    return score, not score > threshold


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def normalize_staff_height(box: SystemBox, target: float = 18.0) -> tuple[float, tuple[int, int]]:
    """Scale factor bringing the staff to ``target`` pixels, and the resized (width, height)."""
    if box.staff_height is None or not box.staff_height > 0:
        raise ValueError(f"staff height must be positive, got {box.staff_height}")
    scale = target / box.staff_height
    return scale, (round_half_up(box.width * scale), round_half_up(box.height * scale))


# -- per-video pipeline ---------------------------------------------------------


class MalformedRecord(ValueError):
    pass


def _need(record: dict, key: str):
    if key not in record:
        raise MalformedRecord(f"missing field {key!r}")
    return record[key]


def segment_video(record: dict, thresholds: FilterThresholds = DEFAULT_THRESHOLDS) -> dict:
    """Run segmentation and pairing for one video record; returns the manifest record."""
    video_id = str(_need(record, "video_id"))
    fps = float(_need(record, "fps"))
    if not fps > 0:
        raise MalformedRecord("fps must be positive")
    flags = [bool(f) for f in _need(record, "diff_flags")]
    seg_inputs = record.get("segments", [])
    statics = segment_slides(FrameDiffSeq(flags, fps))
    if len(seg_inputs) != len(statics):
        raise MalformedRecord(f"{len(seg_inputs)} segment records for {len(statics)} static segments")

    segments = []
    for index, (seg, info) in enumerate(zip(statics, seg_inputs)):
        medians = list(info.get("medians", []))
        means = list(info.get("means", []))
        boxes = list(info.get("boxes", []))
        staffs = list(info.get("staff_heights", [None] * len(boxes)))
        if not (len(medians) == len(means) == len(boxes) == len(staffs)):
            raise MalformedRecord(f"segment {index}: per-system lists differ in length")
        systems = []
        for k, (med, mean, box, staff) in enumerate(zip(medians, means, boxes, staffs)):
            if len(box) != 4:
                raise MalformedRecord(f"segment {index} system {k}: box needs [x, y, width, height]")
            systems.append(
                {"index": k, "median": med, "mean": mean, "box": list(box), "staff_height": staff}
            )
        segments.append(
            {
                "index": index,
                "start_frame": seg.start,
                "end_frame": seg.end,
                "duration_s": seg.duration(fps),
                "silent": bool(info.get("silent", False)),
                "systems": systems,
            }
        )
    out = {
        "record": "video",
        "video_id": video_id,
        "fps": fps,
        "n_samples": len(flags),
        "pages": [asdict(p) for p in page_list(FrameDiffSeq(flags, fps))],
        "segments": segments,
    }
    for key in ("video_median", "video_mean"):
        if key in record:
            out[key] = record[key]
    return filter_video(out, thresholds)


def _video_pixel_stats(manifest: dict) -> tuple[float | None, float | None]:
    systems = [s for seg in manifest["segments"] for s in seg["systems"]]
    if not systems:
        return None, None
    vmed = manifest.get("video_median")
    vmean = manifest.get("video_mean")
    if vmed is None:
        vmed = statistics.median(s["median"] for s in systems)
    if vmean is None:
        vmean = math.fsum(s["mean"] for s in systems) / len(systems)
    return vmed, vmean


def filter_video(manifest: dict, thresholds: FilterThresholds = DEFAULT_THRESHOLDS) -> dict:
    """(Re)compute every rule score and verdict on a video manifest record.

    A system is kept iff all of its rules pass and its segment is kept; a
    segment is kept iff it is non-silent, within the duration window, and
    the video passes the intensity rule.
    """
    out = {k: v for k, v in manifest.items() if k not in ("video_intensity", "kept", "n_kept_segments")}
    all_systems = [s for seg in manifest["segments"] for s in seg["systems"]]
    if all_systems:
        value, v_ok = video_intensity([s["median"] for s in all_systems], thresholds.min_video_intensity)
        out["video_intensity"] = {"value": value, "pass": v_ok}
    else:
        v_ok = True
        out["video_intensity"] = {"value": None, "pass": True}
    vmed, vmean = _video_pixel_stats(manifest)

    segments = []
    for seg in manifest["segments"]:
        seg = {k: v for k, v in seg.items() if k not in ("rules", "kept")}
        d = seg["duration_s"]
        rules = {
            "not_silent": not seg["silent"],
            "duration": thresholds.min_duration <= d <= thresholds.max_duration,
        }
        boxes = [SystemBox(*s["box"]) for s in seg["systems"]]
        heights = height_filters([b.height for b in boxes], [b.width for b in boxes], thresholds)
        overlaps = [0.0] * len(boxes)
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                score, _ = overlap_score(boxes[i], boxes[j], thresholds.max_overlap)
                overlaps[i] = max(overlaps[i], score)
                overlaps[j] = max(overlaps[j], score)
        seg_kept = v_ok and all(rules.values())
        systems = []
        for s, box, hv, ov in zip(seg["systems"], boxes, heights, overlaps):
            s = {k: v for k, v in s.items() if k not in ("rules", "kept", "scale", "output_size")}
            pa_score, pa_ok = pixel_anomaly_score(s["median"], s["mean"], vmed, vmean, thresholds.max_pixel_anomaly)
            s_rules: dict[str, Any] = {
                "pixel_anomaly": {"score": pa_score, "pass": pa_ok},
                "height_range": hv.in_range,
                "height_lt_width": hv.shorter_than_wide,
                "height_anomaly": {"score": hv.z_score, "pass": hv.z_ok},
                "overlap": {"score": ov, "pass": not ov > thresholds.max_overlap},
            }
            s["rules"] = s_rules
            s["kept"] = seg_kept and _all_pass(s_rules)
            if s.get("staff_height"):
                scale, size = normalize_staff_height(
                    SystemBox(*box_tuple(box), staff_height=s["staff_height"]), thresholds.staff_height
                )
                s["scale"] = scale
                s["output_size"] = list(size)
            systems.append(s)
        seg["systems"] = systems
        seg["rules"] = rules
        seg["kept"] = seg_kept
        segments.append(seg)
    out["segments"] = segments
    out["kept"] = v_ok
    out["n_kept_segments"] = sum(s["kept"] for s in segments)
    return out


def box_tuple(box: SystemBox) -> tuple[float, float, float, float]:
    return box.x, box.y, box.width, box.height


def _all_pass(rules: dict) -> bool:
    """Conjunction of every rule verdict (bools or {"pass": bool} entries)."""
    return all(r["pass"] if isinstance(r, dict) else bool(r) for r in rules.values())
