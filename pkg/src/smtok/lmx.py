"""Linearized MusicXML for a pianoform subset of MusicXML.

Grammar of a token stream::

    stream  := measure*
    measure := "measure" (voiceK? note*)*
    note    := "chord"? "tie"? "staff2"? "dot"* pitch duration

Voice 1 is implicit after every ``measure`` token; ``voiceK`` switches to a
higher-numbered voice. Key and time signatures are parsed but not emitted.
"""
from __future__ import annotations

import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

STEPS = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
_STEP_SEMITONE = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

LOWEST_PITCH = 36  # C2
HIGHEST_PITCH = 88  # E6


def midi_to_name(midi: int) -> str:
    return f"{STEPS[midi % 12]}{midi // 12 - 1}"


def name_to_midi(name: str) -> int:
    m = re.fullmatch(r"([A-G])(#*|b*)(-?\d+)", name)
    if not m:
        raise ValueError(f"bad pitch name {name!r}")
    step, acc, octave = m.groups()
    alter = len(acc) if acc.startswith("#") else -len(acc)
    return (int(octave) + 1) * 12 + _STEP_SEMITONE[step] + alter


PITCH_TOKENS = tuple(midi_to_name(p) for p in range(LOWEST_PITCH, HIGHEST_PITCH + 1))
DURATION_TOKENS = (
    "maxima", "long", "breve", "whole", "half", "quarter", "eighth",
    "16th", "32nd", "64th", "128th", "256th", "512th",
)
MAX_VOICE = 8
REST = "rest"
MARKER_TOKENS = ("measure", "chord", "tie", "staff2", "dot") + tuple(
    f"voice{k}" for k in range(2, MAX_VOICE + 1)
)
NOTATION_VOCAB = MARKER_TOKENS + (REST,) + PITCH_TOKENS + DURATION_TOKENS

_PITCHES = frozenset(PITCH_TOKENS)
_DURATIONS = frozenset(DURATION_TOKENS)
_VOICE_RE = re.compile(r"voice(\d+)")

# divisions per quarter note used when writing MusicXML
_DIVISIONS = 128
_QUARTERS = {name: 2.0 ** (5 - i) for i, name in enumerate(DURATION_TOKENS)}


class LmxGrammarError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"token {index}: {message}")
        self.index = index


class MusicXMLError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnsupportedFeatureError(MusicXMLError):
    pass


@dataclass
class NoteElem:
    pitch: str | None  # None for a rest
    duration: str
    dots: int = 0
    chord: bool = False
    tie: bool = False
    staff: int = 1


@dataclass
class Measure:
    voices: dict[int, list[NoteElem]] = field(default_factory=dict)
    # carried for MusicXML round trips, never tokenized
    key_fifths: int | None = field(default=None, compare=False)
    time: tuple[int, int] | None = field(default=None, compare=False)


@dataclass
class ScoreDoc:
    measures: list[Measure] = field(default_factory=list)
    skipped: int = field(default=0, compare=False)


# -- parsing --------------------------------------------------------------------


_SUPPORTED_NOTE_CHILDREN = {
    "pitch", "rest", "duration", "type", "dot", "chord", "tie", "voice", "staff", "notations",
    "stem", "beam", "accidental",
}


def _text(el: ET.Element | None, default: str | None = None) -> str | None:
    if el is None or el.text is None:
        return default
    return el.text.strip()


def _parse_note(el: ET.Element) -> tuple[int, NoteElem | None, int]:
    """Return (voice, note or None when skipped, unsupported-element count)."""
    skipped = 0
    if el.find("grace") is not None or el.find("cue") is not None:
        return 1, None, 1
    for child in el:
        if child.tag not in _SUPPORTED_NOTE_CHILDREN:
            skipped += 1
    notations = el.find("notations")
    tie = any(t.get("type") == "start" for t in el.findall("tie"))
    if notations is not None:
        for child in notations:
            if child.tag == "tied":
                tie = tie or child.get("type") == "start"
            else:
                skipped += 1

    voice = int(_text(el.find("voice"), "1"))
    kind = _text(el.find("type"))
    if kind is None:
        return voice, None, skipped + 1
    pitch_el = el.find("pitch")
    if pitch_el is not None:
        step = _text(pitch_el.find("step"))
        octave = int(_text(pitch_el.find("octave"), "4"))
        alter = round(float(_text(pitch_el.find("alter"), "0")))
        pitch: str | None = midi_to_name((octave + 1) * 12 + _STEP_SEMITONE[step] + alter)
    else:
        pitch = None
    note = NoteElem(
        pitch=pitch,
        duration=kind,
        dots=len(el.findall("dot")),
        chord=el.find("chord") is not None,
        tie=tie,
        staff=int(_text(el.find("staff"), "1")),
    )
    return voice, note, skipped


def parse_musicxml_subset(text: str | bytes) -> ScoreDoc:
    """Parse a single-part partwise MusicXML document."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MusicXMLError(f"malformed XML: {exc.msg}", exc.position[0]) from None
    if root.tag != "score-partwise":
        raise UnsupportedFeatureError(f"root element <{root.tag}> is not score-partwise")
    parts = root.findall("part")
    if len(parts) > 1:
        raise UnsupportedFeatureError(f"{len(parts)} parts found, only single-part scores are supported")
    doc = ScoreDoc()
    if not parts:
        return doc
    for m_el in parts[0].findall("measure"):
        measure = Measure()
        for child in m_el:
            if child.tag == "note":
                voice, note, skipped = _parse_note(child)
                doc.skipped += skipped
                if note is not None:
                    measure.voices.setdefault(voice, []).append(note)
            elif child.tag == "attributes":
                fifths = child.find("key/fifths")
                if fifths is not None:
                    measure.key_fifths = int(_text(fifths))
                beats, beat_type = child.find("time/beats"), child.find("time/beat-type")
                if beats is not None and beat_type is not None:
                    measure.time = (int(_text(beats)), int(_text(beat_type)))
            elif child.tag in ("backup", "forward", "print", "barline"):
                continue
            else:
                doc.skipped += 1
        doc.measures.append(measure)
    if doc.skipped:
        log.debug("skipped %d unsupported MusicXML elements", doc.skipped)
    return doc


# -- linearization --------------------------------------------------------------


def _note_tokens(note: NoteElem) -> list[str]:
    pitch = REST if note.pitch is None else note.pitch
    if pitch != REST and pitch not in _PITCHES:
        raise ValueError(f"pitch {pitch!r} is outside the notation vocabulary")
    if note.duration not in _DURATIONS:
        raise ValueError(f"duration {note.duration!r} is outside the notation vocabulary")
    if note.staff not in (1, 2):
        raise ValueError(f"staff {note.staff} is not supported")
    out = []
    if note.chord:
        out.append("chord")
    if note.tie:
        out.append("tie")
    if note.staff == 2:
        out.append("staff2")
    out.extend(["dot"] * note.dots)
    out += [pitch, note.duration]
    return out


def linearize(doc: ScoreDoc) -> list[str]:
    tokens: list[str] = []
    for measure in doc.measures:
        tokens.append("measure")
        for voice in sorted(measure.voices):
            if not 1 <= voice <= MAX_VOICE:
                raise ValueError(f"voice {voice} is outside the notation vocabulary")
            notes = measure.voices[voice]
            if voice > 1:
                tokens.append(f"voice{voice}")
            elif not notes:
                continue
            for note in notes:
                tokens.extend(_note_tokens(note))
    return tokens


def delinearize(tokens: Sequence[str]) -> ScoreDoc:
    doc = ScoreDoc()
    measure: Measure | None = None
    voice = 1
    pending: dict = {}
    pending_at: int | None = None
    expect_duration: str | None = None

    for i, tok in enumerate(tokens):
        if expect_duration is not None:
            if tok not in _DURATIONS:
                raise LmxGrammarError(i, f"expected a duration after {expect_duration!r}, got {tok!r}")
            measure.voices.setdefault(voice, []).append(
                NoteElem(pitch=None if expect_duration == REST else expect_duration, duration=tok, **pending)
            )
            expect_duration, pending, pending_at = None, {}, None
            continue
        if tok == "measure":
            if pending:
                raise LmxGrammarError(pending_at, "marker not followed by a note")
            measure = Measure()
            doc.measures.append(measure)
            voice = 1
            continue
        if measure is None:
            raise LmxGrammarError(i, f"{tok!r} before the first measure token")
        vm = _VOICE_RE.fullmatch(tok)
        if vm:
            k = int(vm.group(1))
            if pending:
                raise LmxGrammarError(pending_at, "marker not followed by a note")
            if k <= voice or k > MAX_VOICE:
                raise LmxGrammarError(i, f"voice switch to {k} after voice {voice}")
            voice = k
            measure.voices.setdefault(voice, [])
            continue
        if tok in ("chord", "tie", "staff2", "dot"):
            if pending_at is None:
                pending_at = i
            if tok == "dot":
                pending["dots"] = pending.get("dots", 0) + 1
            elif tok == "staff2":
                pending["staff"] = 2
            else:
                pending[tok] = True
            continue
        if tok == REST or tok in _PITCHES:
            expect_duration = tok
            continue
        if tok in _DURATIONS:
            raise LmxGrammarError(i, f"duration {tok!r} with no preceding pitch")
        raise LmxGrammarError(i, f"unknown token {tok!r}")

    if expect_duration is not None:
        raise LmxGrammarError(len(tokens), f"pitch {expect_duration!r} without a duration")
    if pending:
        raise LmxGrammarError(pending_at, "marker not followed by a note")
    return doc


# -- MusicXML writer ------------------------------------------------------------


def _note_divisions(note: NoteElem) -> int:
    base = _QUARTERS[note.duration] * _DIVISIONS
    total = base
    for k in range(1, note.dots + 1):
        total += base / 2**k
    return max(int(round(total)), 1)


def to_musicxml(doc: ScoreDoc) -> str:
    root = ET.Element("score-partwise", version="4.0")
    part_list = ET.SubElement(root, "part-list")
    sp = ET.SubElement(part_list, "score-part", id="P1")
    ET.SubElement(sp, "part-name").text = "Piano"
    part = ET.SubElement(root, "part", id="P1")
    for number, measure in enumerate(doc.measures, start=1):
        m_el = ET.SubElement(part, "measure", number=str(number))
        if number == 1 or measure.key_fifths is not None or measure.time is not None:
            attrs = ET.SubElement(m_el, "attributes")
            if number == 1:
                ET.SubElement(attrs, "divisions").text = str(_DIVISIONS)
            if measure.key_fifths is not None:
                ET.SubElement(ET.SubElement(attrs, "key"), "fifths").text = str(measure.key_fifths)
            if measure.time is not None:
                t = ET.SubElement(attrs, "time")
                ET.SubElement(t, "beats").text = str(measure.time[0])
                ET.SubElement(t, "beat-type").text = str(measure.time[1])
            if number == 1:
                ET.SubElement(attrs, "staves").text = "2"
        for vi, voice in enumerate(sorted(measure.voices)):
            if vi:
                # rewind to the start of the measure before the next voice
                prev = measure.voices[sorted(measure.voices)[vi - 1]]
                span = sum(_note_divisions(n) for n in prev if not n.chord)
                if span:
                    ET.SubElement(ET.SubElement(m_el, "backup"), "duration").text = str(span)
            for note in measure.voices[voice]:
                n_el = ET.SubElement(m_el, "note")
                if note.chord:
                    ET.SubElement(n_el, "chord")
                if note.pitch is None:
                    ET.SubElement(n_el, "rest")
                else:
                    midi = name_to_midi(note.pitch)
                    p = ET.SubElement(n_el, "pitch")
                    step = STEPS[midi % 12]
                    ET.SubElement(p, "step").text = step[0]
                    if len(step) > 1:
                        ET.SubElement(p, "alter").text = "1"
                    ET.SubElement(p, "octave").text = str(midi // 12 - 1)
                dur = _note_divisions(note)
                ET.SubElement(n_el, "duration").text = str(dur)
                if note.tie:
                    ET.SubElement(n_el, "tie", type="start")
                ET.SubElement(n_el, "voice").text = str(voice)
                ET.SubElement(n_el, "type").text = note.duration
                for _ in range(note.dots):
                    ET.SubElement(n_el, "dot")
                ET.SubElement(n_el, "staff").text = str(note.staff)
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


# -- symbol error rate ----------------------------------------------------------


def edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    """Levenshtein distance with unit insertion, deletion and substitution costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def symbol_error_rate(reference: Sequence[str], hypothesis: Sequence[str]) -> float:
    if not reference:
        raise ValueError("reference sequence is empty")
    return edit_distance(reference, hypothesis) / len(reference)


def parse_lmx(line: str) -> list[str]:
    return line.split()


def format_lmx(tokens: Iterable[str]) -> str:
    return " ".join(tokens)
