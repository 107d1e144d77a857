"""Unified token space shared by the image, audio, notation and MIDI streams.

Global ids are laid out in a fixed order so that a serialized vocabulary is
reproducible: image codebooks 1-4, audio codebooks 1-4, notation tokens,
MIDI tokens, then ``SOS``/``EOS`` per modality, then ``SEP`` and ``PAD``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ModalityTag(enum.IntEnum):
    IMAGE = 0
    AUDIO = 1
    NOTATION = 2
    MIDI = 3

    @property
    def short(self) -> str:
        return "IANM"[self.value]

    @property
    def is_symbolic(self) -> bool:
        return self in (ModalityTag.NOTATION, ModalityTag.MIDI)

    @classmethod
    def parse(cls, name: str | int | "ModalityTag") -> "ModalityTag":
        if isinstance(name, ModalityTag):
            return name
        if isinstance(name, int):
            return cls(name)
        key = name.strip().upper()
        aliases = {"I": "IMAGE", "A": "AUDIO", "N": "NOTATION", "M": "MIDI", "LMX": "NOTATION"}
        return cls[aliases.get(key, key)]


CODEC_CODEBOOKS = 4
CODEC_CODEBOOK_SIZE = 1024


@dataclass(frozen=True)
class VocabSpec:
    """Per-modality codebook geometry plus the symbolic token inventories."""

    image_codebooks: int = CODEC_CODEBOOKS
    image_codebook_size: int = CODEC_CODEBOOK_SIZE
    audio_codebooks: int = CODEC_CODEBOOKS
    audio_codebook_size: int = CODEC_CODEBOOK_SIZE
    notation_tokens: tuple[str, ...] = ()
    midi_tokens: tuple[str, ...] = ()

    def codebooks(self, modality: ModalityTag) -> int:
        if modality == ModalityTag.IMAGE:
            return self.image_codebooks
        if modality == ModalityTag.AUDIO:
            return self.audio_codebooks
        return 1

    def codebook_size(self, modality: ModalityTag) -> int:
        if modality == ModalityTag.IMAGE:
            return self.image_codebook_size
        if modality == ModalityTag.AUDIO:
            return self.audio_codebook_size
        return len(self.symbols(modality))

    def symbols(self, modality: ModalityTag) -> tuple[str, ...]:
        if modality == ModalityTag.NOTATION:
            return self.notation_tokens
        if modality == ModalityTag.MIDI:
            return self.midi_tokens
        return ()


@dataclass(frozen=True)
class VocabLayout:
    """Immutable global id layout. ``ranges`` maps (modality, codebook) to [start, stop)."""

    spec: VocabSpec
    ranges: dict[tuple[ModalityTag, int], tuple[int, int]]
    sos: dict[ModalityTag, int]
    eos: dict[ModalityTag, int]
    sep: int
    pad: int
    total: int
    _symbol_index: dict[ModalityTag, dict[str, int]] = field(default_factory=dict, repr=False, compare=False)

    def codebooks(self, modality: ModalityTag) -> int:
        return self.spec.codebooks(modality)

    def range_of(self, modality: ModalityTag, codebook: int = 0) -> tuple[int, int]:
        try:
            return self.ranges[(ModalityTag(modality), codebook)]
        except KeyError:
            raise ValueError(f"{ModalityTag(modality).name} has no codebook {codebook}") from None

    def symbol_id(self, modality: ModalityTag, name: str) -> int:
        """Local index of a symbolic token name."""
        try:
            return self._symbol_index[modality][name]
        except KeyError:
            raise ValueError(f"unknown {modality.name} token {name!r}") from None

    def to_dict(self) -> dict:
        ranges = [
            {"modality": m.name, "codebook": cb, "start": lo, "stop": hi}
            for (m, cb), (lo, hi) in sorted(self.ranges.items(), key=lambda kv: kv[1])
        ]
        specials = {}
        for m in ModalityTag:
            specials[f"SOS_{m.short}"] = self.sos[m]
            specials[f"EOS_{m.short}"] = self.eos[m]
        specials["SEP"] = self.sep
        specials["PAD"] = self.pad
        return {"ranges": ranges, "specials": specials, "total": self.total}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _check_unique(names: Sequence[str], what: str) -> None:
    seen: set[str] = set()
    for name in names:
        if name in seen:
            raise ValueError(f"duplicate {what} token name: {name!r}")
        seen.add(name)


def build_vocab(spec: VocabSpec) -> VocabLayout:
    _check_unique(spec.notation_tokens, "notation")
    _check_unique(spec.midi_tokens, "midi")
    for m in (ModalityTag.IMAGE, ModalityTag.AUDIO):
        if spec.codebooks(m) < 1 or spec.codebook_size(m) < 0:
            raise ValueError(f"invalid codebook geometry for {m.name}")

    ranges: dict[tuple[ModalityTag, int], tuple[int, int]] = {}
    cursor = 0
    for m in ModalityTag:
        for cb in range(spec.codebooks(m)):
            width = spec.codebook_size(m)
            ranges[(m, cb)] = (cursor, cursor + width)
            cursor += width

    sos: dict[ModalityTag, int] = {}
    eos: dict[ModalityTag, int] = {}
    for m in ModalityTag:
        sos[m] = cursor
        eos[m] = cursor + 1
        cursor += 2
    sep, pad = cursor, cursor + 1
    symbol_index = {
        m: {name: i for i, name in enumerate(spec.symbols(m))}
        for m in (ModalityTag.NOTATION, ModalityTag.MIDI)
    }
    return VocabLayout(spec, ranges, sos, eos, sep, pad, cursor + 2, symbol_index)


def local_to_global(layout: VocabLayout, modality: ModalityTag, codebook: int, local: int) -> int:
    lo, hi = layout.range_of(modality, codebook)
    if not 0 <= local < hi - lo:
        raise ValueError(
            f"local index {local} out of range for {ModalityTag(modality).name} codebook {codebook} "
            f"(size {hi - lo})"
        )
    return lo + local


def global_to_local(layout: VocabLayout, gid: int) -> tuple[ModalityTag, int, int]:
    """Inverse of :func:`local_to_global`; special ids raise ``ValueError``."""
    for (m, cb), (lo, hi) in layout.ranges.items():
        if lo <= gid < hi:
            return m, cb, gid - lo
    raise ValueError(f"global id {gid} is not a codebook or symbol token")


def special_name(layout: VocabLayout, gid: int) -> str | None:
    for m in ModalityTag:
        if layout.sos[m] == gid:
            return f"SOS_{m.short}"
        if layout.eos[m] == gid:
            return f"EOS_{m.short}"
    if gid == layout.sep:
        return "SEP"
    if gid == layout.pad:
        return "PAD"
    return None


def modality_mask(layout: VocabLayout, target: ModalityTag) -> np.ndarray:
    """Boolean vector over the vocabulary of ids the decoder may emit for ``target``.

    Cleared entries are meant to be set to -inf in the logits before softmax.
    """
    target = ModalityTag(target)
    mask = np.zeros(layout.total, dtype=bool)
    for cb in range(layout.codebooks(target)):
        lo, hi = layout.range_of(target, cb)
        mask[lo:hi] = True
    mask[layout.eos[target]] = True
    if target == ModalityTag.IMAGE:
        mask[layout.sep] = True
    if target.is_symbolic:
        mask[layout.pad] = True
    return mask


def apply_mask(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Return a copy of ``logits`` (last axis over the vocabulary) with masked entries at -inf."""
    out = np.array(logits, dtype=float, copy=True)
    out[..., ~mask] = -np.inf
    return out


def default_spec() -> VocabSpec:
    """Two 4x1024 codec vocabularies plus the bundled LMX and MIDI inventories."""
    from .lmx import NOTATION_VOCAB
    from .midi import MIDI_VOCAB

    return VocabSpec(notation_tokens=tuple(NOTATION_VOCAB), midi_tokens=tuple(MIDI_VOCAB))
