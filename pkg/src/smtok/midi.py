"""MIDI-like event tokens at 10 ms resolution, and piano-roll rasterization.

A token stream is a sequence of state changes::

    time_K      absolute tick K (10 ms) within the clip
    program_P   current instrument
    on / off    current event kind
    pitch_N     emit an event of the current kind for pitch N

``program`` and ``on``/``off`` persist until changed, so they are only
written when they differ from the decoder state. Inside a tick, events are
grouped by program; each group lists note-offs before note-ons, both in
ascending pitch order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

TICK_MS = 10
MAX_TICK = 2000  # 20 s, the longest training window

MIDI_VOCAB = (
    tuple(f"time_{k}" for k in range(MAX_TICK + 1))
    + tuple(f"program_{p}" for p in range(128))
    + ("on", "off")
    + tuple(f"pitch_{n}" for n in range(128))
)


class Note(NamedTuple):
    onset: float  # ms
    offset: float  # ms
    pitch: int
    program: int = 0


class MidiTokenError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"token {index}: {message}")
        self.index = index


@dataclass
class EventSeq:
    tokens: list[str]
    dropped: int = field(default=0, compare=False)


def quantize(ms: float) -> int:
    """Tick index of ``ms``, rounding half up."""
    return math.floor((ms + TICK_MS / 2) / TICK_MS)


def sort_notes(notes: Iterable[Note]) -> list[Note]:
    return sorted(notes, key=lambda n: (n.onset, n.pitch, n.program, n.offset))


def encode_midi_like(notes: Sequence[Note]) -> EventSeq:
    events: dict[int, list[tuple[int, int, int]]] = {}
    dropped = 0
    for n in notes:
        if not (0 <= n.pitch <= 127 and 0 <= n.program <= 127):
            raise ValueError(f"pitch {n.pitch} / program {n.program} outside 0-127")
        on, off = quantize(n.onset), quantize(n.offset)
        if off <= on:
            dropped += 1
            continue
        if on < 0 or off > MAX_TICK:
            raise ValueError(f"note {n} falls outside ticks 0-{MAX_TICK}")
        # kind 0 = off sorts before kind 1 = on
        events.setdefault(on, []).append((n.program, 1, n.pitch))
        events.setdefault(off, []).append((n.program, 0, n.pitch))

    tokens: list[str] = []
    program = kind = None
    for tick in sorted(events):
        tokens.append(f"time_{tick}")
        for prog, k, pitch in sorted(events[tick]):
            if prog != program:
                tokens.append(f"program_{prog}")
                program = prog
            if k != kind:
                tokens.append("on" if k else "off")
                kind = k
            tokens.append(f"pitch_{pitch}")
    return EventSeq(tokens, dropped)


def _split(tok: str, prefix: str) -> int | None:
    if not tok.startswith(prefix):
        return None
    tail = tok[len(prefix) :]
    return int(tail) if tail.isdigit() else None


def decode_midi_like(tokens: Sequence[str]) -> tuple[list[Note], int]:
    """Decode a token stream into notes.

    Returns the notes, sorted by (onset, pitch), and the number of repairs:
    off events for silent pitches, re-onsets of sounding pitches, and notes
    still sounding at the end (closed at the last time token).
    """
    tick = None
    program = 0
    kind = None
    active: dict[tuple[int, int], int] = {}
    notes: list[Note] = []
    repairs = 0

    for i, tok in enumerate(tokens):
        if (t := _split(tok, "time_")) is not None:
            if t > MAX_TICK:
                raise MidiTokenError(i, f"{tok} beyond the time vocabulary")
            if tick is not None and t < tick:
                raise MidiTokenError(i, f"time goes backwards ({tick} -> {t})")
            tick = t
        elif (p := _split(tok, "program_")) is not None:
            if p > 127:
                raise MidiTokenError(i, f"unknown token {tok!r}")
            program = p
        elif tok in ("on", "off"):
            kind = tok
        elif (n := _split(tok, "pitch_")) is not None:
            if n > 127:
                raise MidiTokenError(i, f"unknown token {tok!r}")
            if tick is None:
                raise MidiTokenError(i, "pitch before any time token")
            if kind is None:
                raise MidiTokenError(i, "pitch before any on/off token")
            key = (program, n)
            if kind == "on":
                if key in active:
                    repairs += 1
                    start = active.pop(key)
                    if tick > start:
                        notes.append(Note(start * TICK_MS, tick * TICK_MS, n, program))
                active[key] = tick
            else:
                if key not in active:
                    repairs += 1
                    continue
                start = active.pop(key)
                if tick > start:
                    notes.append(Note(start * TICK_MS, tick * TICK_MS, n, program))
                else:
                    repairs += 1
        else:
            raise MidiTokenError(i, f"unknown token {tok!r}")

    for (prog, n), start in active.items():
        repairs += 1
        if tick > start:
            notes.append(Note(start * TICK_MS, tick * TICK_MS, n, prog))
    return sort_notes(notes), repairs


def to_piano_roll(notes: Sequence[Note], frame: float = TICK_MS) -> np.ndarray:
    """Binary ``frames x 128`` roll; a cell is set when the pitch sounds in that frame window."""
    if not frame > 0:
        raise ValueError("frame length must be positive")
    if not notes:
        return np.zeros((0, 128), dtype=bool)
    n_frames = math.ceil(max(n.offset for n in notes) / frame)
    roll = np.zeros((n_frames, 128), dtype=bool)
    for n in notes:
        # frame t covers [t*frame, (t+1)*frame); the note covers [onset, offset)
        first = max(math.floor(n.onset / frame), 0)
        last = math.ceil(n.offset / frame)
        if last > first:
            roll[first:last, n.pitch] = True
    return roll


def notes_from_rows(rows: Iterable[Sequence]) -> list[Note]:
    """Build notes from ``[onset_ms, offset_ms, pitch, program]`` rows."""
    out = []
    for row in rows:
        onset, offset, pitch = row[0], row[1], int(row[2])
        program = int(row[3]) if len(row) > 3 else 0
        if not offset > onset:
            raise ValueError(f"note {list(row)} has offset <= onset")
        out.append(Note(onset, offset, pitch, program))
    return sort_notes(out)


def notes_to_rows(notes: Iterable[Note]) -> list[list]:
    def num(x):
        return int(x) if float(x).is_integer() else x

    return [[num(n.onset), num(n.offset), n.pitch, n.program] for n in notes]
