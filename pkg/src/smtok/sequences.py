"""Training-sequence assembly and the curriculum-gated task sampler."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .grids import PAD_SENTINEL, SEP_SENTINEL, TokenGrid, audio_frame_count
from .vocab import ModalityTag, VocabLayout, local_to_global

MIDI_TOKEN_CAP = 1000
I2A_AUDIO_CAP = audio_frame_count(20)  # 1723
A2I_AUDIO_CAP = audio_frame_count(10)  # 862
# segments above 256,000 pixels are excluded from training; 16x16 pixels per bundle
IMAGE_BUNDLE_LIMIT = 256_000 // 256

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood), 64-bit state.

    ``next()`` advances the state by 0x9E3779B97F4A7C15 and returns the
    mixed value; ``below(n)`` draws uniformly from [0, n) by rejection so the
    same seed yields the same stream in any language.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("upper bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next()
            if x < limit:
                return x % n

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next() >> 11) * (1.0 / (1 << 53))


def derive_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed with SplitMix64 mixing."""
    state = 0
    for p in parts:
        state = SplitMix64(state ^ (p & _MASK64)).next()
    return state


class Direction(enum.Enum):
    I2A = "ImageToAudio"
    A2I = "AudioToImage"

    @classmethod
    def parse(cls, name: str | "Direction") -> "Direction":
        if isinstance(name, Direction):
            return name
        for d in cls:
            if name in (d.name, d.value):
                return d
        raise ValueError(f"unknown direction {name!r}")


class TaskKind(enum.Enum):
    OMR = ("OMR", ModalityTag.IMAGE, ModalityTag.NOTATION, Direction.I2A)
    M2A = ("M2A", ModalityTag.MIDI, ModalityTag.AUDIO, Direction.I2A)
    I2A = ("I2A", ModalityTag.IMAGE, ModalityTag.AUDIO, Direction.I2A)
    AMT = ("AMT", ModalityTag.AUDIO, ModalityTag.MIDI, Direction.A2I)
    L2I = ("L2I", ModalityTag.NOTATION, ModalityTag.IMAGE, Direction.A2I)
    A2I = ("A2I", ModalityTag.AUDIO, ModalityTag.IMAGE, Direction.A2I)

    @property
    def source(self) -> ModalityTag:
        return self.value[1]

    @property
    def target(self) -> ModalityTag:
        return self.value[2]

    @property
    def direction(self) -> Direction:
        return self.value[3]


@dataclass
class TrainingPair:
    source: TokenGrid
    target: TokenGrid
    task: TaskKind
    sample_id: str = ""
    src_slice: tuple[int, int] | None = None
    tgt_slice: tuple[int, int] | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.source.modality, self.target.modality) != (self.task.source, self.task.target):
            raise ValueError(
                f"{self.task.name} expects {self.task.source.name}->{self.task.target.name}, "
                f"got {self.source.modality.name}->{self.target.modality.name}"
            )


@dataclass
class CurriculumSchedule:
    introduction: dict[TaskKind, int]
    weights: dict[TaskKind, float] = field(default_factory=dict)

    def __post_init__(self):
        if not any(step == 0 for step in self.introduction.values()):
            raise ValueError("at least one task must be introduced at step 0")
        for task, w in self.weights.items():
            if w < 0:
                raise ValueError(f"negative weight for {task.name}")

    def weight(self, task: TaskKind) -> float:
        return self.weights.get(task, 1.0)

    @property
    def tasks(self) -> list[TaskKind]:
        return [t for t in TaskKind if t in self.introduction]


def default_schedule(direction: Direction | str) -> CurriculumSchedule:
    direction = Direction.parse(direction)
    if direction == Direction.I2A:
        return CurriculumSchedule({TaskKind.OMR: 0, TaskKind.M2A: 15_000, TaskKind.I2A: 50_000})
    return CurriculumSchedule({TaskKind.AMT: 0, TaskKind.L2I: 40_000, TaskKind.A2I: 70_000})


def wrap_sequence(grid: TokenGrid, layout: VocabLayout) -> TokenGrid:
    """Map a local grid to global ids, add SOS/EOS and pad symbolic streams to the codec width.

    SOS/EOS bundles repeat the special id across the codebooks of image and
    audio streams; symbolic streams carry PAD in codebooks 2-4 everywhere.
    """
    m = grid.modality
    width = max(layout.codebooks(ModalityTag.IMAGE), layout.codebooks(ModalityTag.AUDIO))
    d = layout.codebooks(m)
    if grid.d != d:
        raise ValueError(f"{m.name} grids have {d} codebooks, got {grid.d}")
    body = np.full((len(grid), width), layout.pad, dtype=np.int64)
    for cb in range(d):
        col = grid.entries[:, cb]
        lo, hi = layout.range_of(m, cb)
        out = col + lo
        bad = (col >= hi - lo) & (col != PAD_SENTINEL) & (col != SEP_SENTINEL)
        if bad.any():
            local_to_global(layout, m, cb, int(col[bad][0]))  # raises with a precise message
        out[col == PAD_SENTINEL] = layout.pad
        out[col == SEP_SENTINEL] = layout.sep
        body[:, cb] = out

    def special(gid: int) -> np.ndarray:
        row = np.full((1, width), layout.pad, dtype=np.int64)
        row[0, : 1 if m.is_symbolic else width] = gid
        return row

    entries = np.concatenate([special(layout.sos[m]), body, special(layout.eos[m])])
    return TokenGrid(m, entries, is_global=True)


def _audio_cap(direction: Direction) -> int:
    return I2A_AUDIO_CAP if direction == Direction.I2A else A2I_AUDIO_CAP


def length_cap(modality: ModalityTag, direction: Direction) -> int | None:
    if modality == ModalityTag.AUDIO:
        return _audio_cap(direction)
    if modality == ModalityTag.MIDI:
        return MIDI_TOKEN_CAP
    return None


def truncation_slices(
    task: TaskKind, src_len: int, tgt_len: int, rng: SplitMix64
) -> tuple[tuple[int, int], tuple[int, int]]:
    """Pick [start, stop) windows for both sides of a pair.

    When both sides are time-based (audio/MIDI) the side that overflows its
    cap the most picks a random window and the other side takes the
    proportional span, so both cover the same stretch of time.
    """
    caps = [length_cap(task.source, task.direction), length_cap(task.target, task.direction)]
    lens = [src_len, tgt_len]

    if caps[0] is not None and caps[1] is not None:
        ratios = [lens[i] / caps[i] for i in range(2)]
        p = 0 if ratios[0] >= ratios[1] else 1
        o = 1 - p
        if ratios[p] <= 1:
            return (0, src_len), (0, tgt_len)
        start = rng.below(lens[p] - caps[p] + 1)
        stop = start + caps[p]
        o_start = math.floor(start * lens[o] / lens[p])
        o_stop = min(math.ceil(stop * lens[o] / lens[p]), o_start + caps[o], lens[o])
        windows = [None, None]
        windows[p] = (start, stop)
        windows[o] = (o_start, o_stop)
        return windows[0], windows[1]

    out = []
    for cap, n in zip(caps, lens):
        if cap is None or n <= cap:
            out.append((0, n))
        else:
            start = rng.below(n - cap + 1)
            out.append((start, start + cap))
    return out[0], out[1]


def truncate_pair(pair: TrainingPair, seed: int) -> TrainingPair:
    """Randomly slice an unwrapped pair down to the direction's length caps."""
    rng = SplitMix64(seed)
    s_win, t_win = truncation_slices(pair.task, len(pair.source), len(pair.target), rng)
    flags = list(pair.flags)
    for grid in (pair.source, pair.target):
        if grid.modality == ModalityTag.IMAGE:
            content = int(np.count_nonzero(grid.entries[:, 0] != SEP_SENTINEL))
            if content > IMAGE_BUNDLE_LIMIT and "image_over_limit" not in flags:
                flags.append("image_over_limit")
    return replace(
        pair,
        source=TokenGrid(pair.source.modality, pair.source.entries[s_win[0] : s_win[1]]),
        target=TokenGrid(pair.target.modality, pair.target.entries[t_win[0] : t_win[1]]),
        src_slice=s_win,
        tgt_slice=t_win,
        flags=tuple(flags),
    )


def curriculum_active_tasks(step: int, schedule: CurriculumSchedule) -> set[TaskKind]:
    return {t for t, intro in schedule.introduction.items() if step >= intro}


def sample_batch(
    step: int,
    schedule: CurriculumSchedule,
    dataset_sizes: Mapping[TaskKind, int],
    batch: int,
    seed: int,
) -> list[tuple[TaskKind, int]]:
    """Draw ``batch`` (task, sample index) slots; a pure function of (step, seed)."""
    if batch <= 0:
        raise ValueError("batch must be positive")
    active = [
        t
        for t in schedule.tasks
        if t in curriculum_active_tasks(step, schedule)
        and dataset_sizes.get(t, 0) > 0
        and schedule.weight(t) > 0
    ]
    if not active:
        raise ValueError(f"no active task with data at step {step}")
    total = sum(schedule.weight(t) for t in active)
    cumulative = []
    acc = 0.0
    for t in active:
        acc += schedule.weight(t) / total
        cumulative.append(acc)

    rng = SplitMix64(derive_seed(seed, step))
    out = []
    for _ in range(batch):
        u = rng.random()
        k = next((i for i, c in enumerate(cumulative) if u < c), len(active) - 1)
        task = active[k]
        out.append((task, rng.below(dataset_sizes[task])))
    return out
