import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from smtok.lmx import DURATION_TOKENS, MAX_VOICE, PITCH_TOKENS, Measure, NoteElem, ScoreDoc  # noqa: E402

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "smtok" / "data" / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


notes_st = st.builds(
    NoteElem,
    pitch=st.one_of(st.none(), st.sampled_from(PITCH_TOKENS)),
    duration=st.sampled_from(DURATION_TOKENS),
    dots=st.integers(0, 2),
    chord=st.booleans(),
    tie=st.booleans(),
    staff=st.sampled_from([1, 2]),
)


@st.composite
def measures_st(draw):
    voices = draw(st.lists(st.integers(1, MAX_VOICE), unique=True, max_size=3))
    out = {}
    for v in voices:
        # an empty voice 1 has no token of its own, so it cannot survive a round trip
        out[v] = draw(st.lists(notes_st, min_size=1 if v == 1 else 0, max_size=5))
    return Measure(voices=out)


score_docs = st.builds(ScoreDoc, measures=st.lists(measures_st(), max_size=4))


# -- acceptance summary -------------------------------------------------------------

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
