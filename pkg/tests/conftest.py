import numpy as np
import pytest

ENTITY_POOL = [
    "Citizen (India)", "Police (Brazil)", "Government (France)", "Armed Rebel (Mali)",
    "Protester (Egypt)", "Ministry of Defense (Iran)", "Barack Obama", "Angela Merkel",
    "European Union", "United Nations", "Business (China)", "Media (Russia)",
]

RELATION_POOL = [
    "Make statement", "Consult", "Express intent to cooperate", "Appeal for aid",
    "Criticize or denounce", "Host a visit",
]

THREE_LINE_CONTENT = (
    "a\tr1\tb\t2014-01-01\n"
    "a\tr1\tb\t2014-01-02\n"
    "b\tr1\ta\t2014-01-03\n"
)


@pytest.fixture
def three_line_file(tmp_path):
    path = tmp_path / "three.tsv"
    path.write_text(THREE_LINE_CONTENT, encoding="utf-8")
    return path


def make_icews_sample_lines(n_lines=100, seed=3):
    """ICEWS-style lines: names with parens, ISO dates, a trailing id column."""
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(n_lines):
        head = ENTITY_POOL[rng.integers(len(ENTITY_POOL))]
        tail = ENTITY_POOL[rng.integers(len(ENTITY_POOL))]
        rel = RELATION_POOL[rng.integers(len(RELATION_POOL))]
        month = int(rng.integers(1, 13))
        day = int(rng.integers(1, 29))
        lines.append(f"{head}\t{rel}\t{tail}\t2014-{month:02d}-{day:02d}\t{i}")
    return lines


@pytest.fixture
def icews_sample_file(tmp_path):
    lines = make_icews_sample_lines()
    path = tmp_path / "icews_sample.tsv"
    path.write_text(
        "# synthetic ICEWS-style sample\n" + "\n".join(lines) + "\n", encoding="utf-8"
    )
    return path


def random_quads(rng, n_quads, n_entities=12, n_relations=4, t_max=60):
    """Random quadruple array for property tests."""
    return np.column_stack(
        [
            rng.integers(n_entities, size=n_quads),
            rng.integers(n_relations, size=n_quads),
            rng.integers(n_entities, size=n_quads),
            rng.integers(t_max + 1, size=n_quads),
        ]
    ).astype(np.int64)
