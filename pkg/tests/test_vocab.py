import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smtok.vocab import (
    ModalityTag,
    VocabSpec,
    apply_mask,
    build_vocab,
    default_spec,
    global_to_local,
    local_to_global,
    modality_mask,
    special_name,
)


def names(prefix, n):
    return tuple(f"{prefix}{i}" for i in range(n))


@pytest.fixture
def layout():
    return build_vocab(VocabSpec(notation_tokens=names("n", 500), midi_tokens=names("m", 1000)))


def test_modality_codes_are_single_bytes():
    assert sorted(int(m) for m in ModalityTag) == [0, 1, 2, 3]
    assert ModalityTag.parse("audio") is ModalityTag.AUDIO


def test_total_size(layout):
    assert layout.total == 4096 + 4096 + 500 + 1000 + 8 + 2 == 9702


def test_single_midi_name():
    layout = build_vocab(VocabSpec(notation_tokens=names("n", 500), midi_tokens=("only",)))
    assert layout.total == 8703


def test_empty_notation_still_has_specials():
    layout = build_vocab(VocabSpec(notation_tokens=(), midi_tokens=names("m", 10)))
    lo, hi = layout.range_of(ModalityTag.NOTATION)
    assert hi - lo == 0
    assert ModalityTag.NOTATION in layout.sos and ModalityTag.NOTATION in layout.eos


def test_duplicate_names_rejected():
    with pytest.raises(ValueError):
        build_vocab(VocabSpec(notation_tokens=("a", "a")))


def test_local_to_global_examples(layout):
    assert local_to_global(layout, ModalityTag.IMAGE, 0, 0) == 0
    assert local_to_global(layout, ModalityTag.IMAGE, 1, 0) == 1024
    assert local_to_global(layout, ModalityTag.AUDIO, 0, 5) == 4101
    with pytest.raises(ValueError):
        local_to_global(layout, ModalityTag.IMAGE, 0, 1024)
    with pytest.raises(ValueError):
        local_to_global(layout, ModalityTag.NOTATION, 1, 0)


def test_ranges_tile_the_vocabulary(layout):
    covered = np.zeros(layout.total, dtype=int)
    for lo, hi in layout.ranges.values():
        covered[lo:hi] += 1
    specials = list(layout.sos.values()) + list(layout.eos.values()) + [layout.sep, layout.pad]
    covered[specials] += 1
    assert (covered == 1).all()
    assert layout.pad == layout.total - 1


def test_mask_popcounts(layout):
    assert modality_mask(layout, ModalityTag.NOTATION).sum() == 502
    assert modality_mask(layout, ModalityTag.IMAGE).sum() == 4098
    assert modality_mask(layout, ModalityTag.AUDIO).sum() == 4097
    assert modality_mask(layout, ModalityTag.MIDI).sum() == 1002


def test_mask_excludes_foreign_specials(layout):
    for target in ModalityTag:
        mask = modality_mask(layout, target)
        for other in ModalityTag:
            assert not mask[layout.sos[other]]
            if other != target:
                assert not mask[layout.eos[other]]


def test_apply_mask_sets_neg_inf(layout):
    mask = modality_mask(layout, ModalityTag.MIDI)
    out = apply_mask(np.zeros((2, layout.total)), mask)
    assert np.isneginf(out[:, ~mask]).all()
    assert (out[:, mask] == 0).all()


@given(st.integers(0, 9701))
def test_global_local_inverse(gid):
    layout = build_vocab(VocabSpec(notation_tokens=names("n", 500), midi_tokens=names("m", 1000)))
    if special_name(layout, gid) is not None:
        with pytest.raises(ValueError):
            global_to_local(layout, gid)
    else:
        m, cb, local = global_to_local(layout, gid)
        assert local_to_global(layout, m, cb, local) == gid


def test_default_layout_json_is_stable():
    a = build_vocab(default_spec()).to_json()
    b = build_vocab(default_spec()).to_json()
    assert a == b
    assert '"PAD"' in a
