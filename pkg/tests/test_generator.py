import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotortree import Generator, GeneratorError, adjacency, dump_generator, is_palindromic
from rotortree import load_generator, parse_generator
from rotortree.generator import bundled_generators

from conftest import random_generator

APPENDIX_TEXT = """
n_types = 5
word.1 = [2, 2, 1, 3]
word.2 = [1]
word.3 = [4]
word.4 = [5]
word.5 = [2]
"""


def test_parse_appendix_table():
    g = parse_generator(APPENDIX_TEXT)
    assert g.n_types == 5
    assert g.degrees == (4, 1, 1, 1, 1)
    assert g.words[0] == (1, 1, 0, 2)


def test_half_line():
    g = parse_generator("n_types = 1\nword.1 = [1]\n")
    assert g.n_types == 1 and g.degrees == (1,)


def test_missing_word_reports_type():
    with pytest.raises(GeneratorError, match="missing word for type 3"):
        parse_generator("n_types = 3\nword.1 = [2, 2]\nword.2 = [3]\n")


@pytest.mark.parametrize(
    "text, message",
    [
        ("n_types = 2\nword.1 = [2, 3]\nword.2 = [1]\n", "type 1, position 2: child type 3"),
        ("n_types = 2\nword.1 = [2]\nword.2 = []\n", "empty word for type 2"),
        ("n_types = 2\nword.1 = [1]\nword.2 = [1]\n", "not strongly connected"),
        ("n_types = 1\nword.1 = [1\n", "syntax error"),
        ("n_types = 1\nword.1 = [1]\ncolour = 3\n", "unknown key"),
        ("n_types = 0\n", "positive integer"),
        ("n_types = 1\nword.1 = [1]\nrotor.1 = [0.5]\n", "expected 2"),
        ("n_types = 1\nword.1 = [1]\nrotor.1 = [-1, 2]\n", "negative"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(GeneratorError, match=message):
        parse_generator(text)


def test_rotor_table_is_exact():
    g = parse_generator('n_types = 1\nword.1 = [1, 1]\nrotor.1 = [0.1, "3/10", 0.6]\n')
    assert [str(p) for p in g.rotor[0]] == ["1/10", "3/10", "3/5"]


def test_adjacency_examples(appendix):
    d = adjacency(appendix)
    assert d[0].tolist() == [1, 2, 1, 0, 0]
    for row, col in zip(range(1, 5), (0, 3, 4, 1)):
        expected = np.zeros(5, dtype=int)
        expected[col] = 1
        assert d[row].tolist() == expected.tolist()
    assert adjacency(Generator.from_words([[1]])).tolist() == [[1]]
    assert adjacency(Generator.from_words([[2, 2], [1]])).tolist() == [[0, 2], [1, 0]]


def test_adjacency_row_sums_are_degrees(appendix):
    assert adjacency(appendix).sum(axis=1).tolist() == list(appendix.degrees)


def test_palindromic_examples(appendix):
    assert is_palindromic(Generator.from_words([[2, 2], [1]]))
    assert not is_palindromic(appendix)
    assert is_palindromic(Generator.from_words([[2, 1, 2], [1]]))


def test_bundled_names_resolve():
    names = bundled_generators()
    assert {"appendix", "appendix_subtree", "sqrt2", "binary"} <= set(names)
    for name in names:
        load_generator(name)


def test_load_from_path(tmp_path):
    p = tmp_path / "g.toml"
    p.write_text(APPENDIX_TEXT)
    assert load_generator(p) == load_generator("appendix")


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dump_parse_round_trip(seed):
    g = random_generator(np.random.default_rng(seed))
    assert parse_generator(dump_generator(g)) == g


def test_round_trip_with_rotor():
    g = load_generator("binary_biased")
    assert parse_generator(dump_generator(g)) == g


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relabel_permutes_adjacency(seed):
    rng = np.random.default_rng(seed)
    g = random_generator(rng)
    perm = [int(p) for p in rng.permutation(g.n_types)]
    h = g.relabel(perm)
    d, e = adjacency(g), adjacency(h)
    for i in range(g.n_types):
        for j in range(g.n_types):
            assert e[perm[i], perm[j]] == d[i, j]
