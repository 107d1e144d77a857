"""Report figures written next to the JSON/JSONL outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import Histogram, shift_histogram, shifted_emds, token_histograms  # noqa: E402
from .midi import to_piano_roll  # noqa: E402

RC = {
    "font.size": 8,
    "axes.titlesize": 9,
    "axes.labelsize": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 6,
    "ytick.labelsize": 7,
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "svg.hashsalt": "smtok",
}
# PNG metadata would otherwise embed the matplotlib version
_SAVE_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=_SAVE_META)
    plt.close(fig)
    return path


def _roll_image(ax, roll: np.ndarray, title: str, frame_ms: float):
    if roll.size == 0:
        ax.set_title(f"{title} (empty)")
        return
    pitches = np.flatnonzero(roll.any(axis=0))
    lo, hi = max(pitches.min() - 2, 0), min(pitches.max() + 3, 128)
    extent = (0, roll.shape[0] * frame_ms / 1000, lo, hi)
    ax.imshow(roll[:, lo:hi].T, aspect="auto", origin="lower", cmap="Greys", extent=extent, interpolation="nearest")
    ax.set_title(title)
    ax.set_ylabel("pitch")


def plot_alignment(
    ref_roll: np.ndarray,
    est_roll: np.ndarray,
    aligned_roll: np.ndarray,
    frame_ms: float,
    path: str | Path,
) -> Path:
    """Reference, estimate and DTW-warped estimate piano rolls stacked vertically."""
    with plt.rc_context(RC):
        fig, axes = plt.subplots(3, 1, figsize=(6.4, 5.2), sharex=True)
        _roll_image(axes[0], ref_roll, "reference", frame_ms)
        _roll_image(axes[1], est_roll, "estimate", frame_ms)
        _roll_image(axes[2], aligned_roll, "estimate aligned to reference", frame_ms)
        span = max(r.shape[0] for r in (ref_roll, est_roll, aligned_roll)) * frame_ms / 1000
        axes[2].set_xlim(0, span or 1.0)
        axes[2].set_xlabel("time (s)")
        fig.tight_layout()
        return _save(fig, path)


def _bars(ax, ref: Histogram, hyp: Histogram, title: str):
    x = np.arange(len(ref.bins))
    total_r = ref.counts.sum() or 1.0
    total_h = hyp.counts.sum() or 1.0
    ax.bar(x - 0.2, ref.counts / total_r, width=0.4, label="reference", color="0.3")
    ax.bar(x + 0.2, hyp.counts / total_h, width=0.4, label="prediction", color="tab:orange")
    ax.set_xticks(x)
    ax.set_xticklabels(ref.bins, rotation=90)
    ax.set_title(title)
    ax.set_ylabel("frequency")
    ax.legend(loc="upper right", frameon=False)


def plot_token_histograms(
    ref_pitch: Histogram,
    hyp_pitch: Histogram,
    ref_dur: Histogram,
    hyp_dur: Histogram,
    shift: int,
    path: str | Path,
) -> Path:
    """Pitch histogram on top, duration histograms unshifted and shifted below."""
    with plt.rc_context(RC):
        fig = plt.figure(figsize=(7.0, 5.0))
        grid = fig.add_gridspec(2, 2)
        _bars(fig.add_subplot(grid[0, :]), ref_pitch, hyp_pitch, "pitch tokens")
        _bars(fig.add_subplot(grid[1, 0]), ref_dur, hyp_dur, "duration tokens")
        _bars(
            fig.add_subplot(grid[1, 1]),
            ref_dur,
            shift_histogram(hyp_dur, shift),
            f"duration tokens, prediction shifted {shift:+d}",
        )
        fig.tight_layout()
        return _save(fig, path)


def plot_segments(record: dict, path: str | Path) -> Path:
    """Timeline of one video: transitions, dropped and kept static segments."""
    fps = record["fps"]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(7.0, 1.6))
        for page in record.get("pages", []):
            if page["state"] == "transition":
                ax.broken_barh([(page["start"] / fps, (page["end"] - page["start"]) / fps)], (0, 1), color="0.8")
        for seg in record["segments"]:
            color = "tab:green" if seg["kept"] else "tab:red"
            start = seg["start_frame"] / fps
            ax.broken_barh([(start, seg["duration_s"])], (0, 1), color=color, alpha=0.8)
            ax.text(start + seg["duration_s"] / 2, 0.5, str(seg["index"]), ha="center", va="center", fontsize=6)
        ax.set_yticks([])
        ax.set_xlabel("time (s)")
        ax.set_title(f"{record['video_id']}: {record.get('n_kept_segments', 0)} kept segments")
        fig.tight_layout()
        return _save(fig, path)


def render_pair_figures(pair_id: str, detail, frame_ms: float, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    written: list[Path] = []
    if detail.path is not None:
        ref_roll = to_piano_roll(detail.ref_notes, frame_ms)
        est_roll = to_piano_roll(detail.est_notes, frame_ms)
        aligned_roll = to_piano_roll(detail.aligned_notes, frame_ms)
        written.append(plot_alignment(ref_roll, est_roll, aligned_roll, frame_ms, out_dir / f"{pair_id}_dtw.png"))
    if detail.ref_lmx is not None:
        rp, rd = token_histograms(detail.ref_lmx)
        hp, hd = token_histograms(detail.hyp_lmx)
        by_shift = shifted_emds(rd, hd)
        best = min(by_shift, key=lambda s: (by_shift[s], abs(s)))
        written.append(plot_token_histograms(rp, hp, rd, hd, best, out_dir / f"{pair_id}_emd.png"))
    return written

