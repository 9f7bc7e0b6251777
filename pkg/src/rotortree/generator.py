"""Base multigraphs (child-word tables) that generate periodic trees.

Types are 0-based inside the library and 1-based in files and in every
error message, so that tables can be copied verbatim from the literature.
"""

from __future__ import annotations

import re
import sys
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "Generator",
    "GeneratorError",
    "parse_generator",
    "load_generator",
    "dump_generator",
    "adjacency",
    "is_palindromic",
    "bundled_generators",
]


class GeneratorError(ValueError):
    """Malformed or invalid generator table."""


@dataclass(frozen=True)
class Generator:
    """Child-word table ``words[i]`` listing the child types of a type-``i`` vertex.

    ``rotor`` optionally carries a per-type rotor law read from the same file
    (probabilities over rotor states ``0..d_i``); ``None`` means "not given".
    """

    words: tuple[tuple[int, ...], ...]
    rotor: Optional[tuple[tuple[Fraction, ...], ...]] = None

    def __post_init__(self):
        words = tuple(tuple(int(t) for t in w) for w in self.words)
        object.__setattr__(self, "words", words)
        _validate_words(words)
        if self.rotor is not None:
            rotor = tuple(tuple(Fraction(p) for p in row) for row in self.rotor)
            object.__setattr__(self, "rotor", rotor)
            for i, (w, row) in enumerate(zip(words, rotor)):
                if len(row) != len(w) + 1:
                    raise GeneratorError(
                        f"rotor law for type {i + 1} has {len(row)} entries, "
                        f"expected {len(w) + 1}"
                    )

    @classmethod
    def from_words(cls, words: Sequence[Sequence[int]], one_based: bool = True, rotor=None):
        """Build from nested sequences; ``one_based`` says how ``words`` is labeled."""
        shift = 1 if one_based else 0
        return cls(tuple(tuple(t - shift for t in w) for w in words), rotor)

    @property
    def n_types(self) -> int:
        return len(self.words)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(w) for w in self.words)

    def relabel(self, perm: Sequence[int]) -> "Generator":
        """Rename type ``i`` to ``perm[i]``."""
        inv = [0] * len(perm)
        for i, p in enumerate(perm):
            inv[p] = i
        words = tuple(tuple(perm[t] for t in self.words[inv[j]]) for j in range(len(perm)))
        rotor = None
        if self.rotor is not None:
            rotor = tuple(self.rotor[inv[j]] for j in range(len(perm)))
        return Generator(words, rotor)


def _validate_words(words: tuple[tuple[int, ...], ...]) -> None:
    n = len(words)
    if n == 0:
        raise GeneratorError("generator needs at least one type")
    for i, w in enumerate(words):
        if len(w) == 0:
            raise GeneratorError(f"empty word for type {i + 1}")
        for pos, t in enumerate(w):
            if not 0 <= t < n:
                raise GeneratorError(
                    f"type {i + 1}, position {pos + 1}: child type {t + 1} outside 1..{n}"
                )
    unreached = _unreachable(words, reverse=False) or _unreachable(words, reverse=True)
    if unreached:
        raise GeneratorError(
            "base graph is not strongly connected: type "
            f"{unreached[0] + 1} is not mutually reachable with type 1"
        )


def _unreachable(words, reverse: bool) -> list[int]:
    n = len(words)
    succ = [set() for _ in range(n)]
    for i, w in enumerate(words):
        for j in w:
            if reverse:
                succ[j].add(i)
            else:
                succ[i].add(j)
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in succ[i]:
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return [i for i in range(n) if not seen[i]]


_KEY = re.compile(r"^[1-9][0-9]*$")


def _probability(value, where: str) -> Fraction:
    if isinstance(value, bool):
        raise GeneratorError(f"{where}: expected a probability, got {value!r}")
    try:
        if isinstance(value, float):
            # decimal reading keeps hand-written laws such as 0.1 exact
            p = Fraction(repr(value))
        else:
            p = Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise GeneratorError(f"{where}: expected a probability, got {value!r}") from None
    if p < 0:
        raise GeneratorError(f"{where}: negative probability {value!r}")
    return p


def _indexed_table(doc, name: str, n: int) -> dict[int, list]:
    table = doc.get(name, {})
    if not isinstance(table, dict):
        raise GeneratorError(f"'{name}' must be a table of per-type arrays ({name}.<i> = [...])")
    out = {}
    for key, value in table.items():
        if not _KEY.match(key):
            raise GeneratorError(f"bad key '{name}.{key}': expected a type index 1..{n}")
        i = int(key)
        if i > n:
            raise GeneratorError(f"'{name}.{key}': type {i} outside 1..{n}")
        if not isinstance(value, list):
            raise GeneratorError(f"'{name}.{key}' must be an array")
        out[i - 1] = value
    return out


def parse_generator(text: str) -> Generator:
    """Parse a generator document (TOML).

    Expected keys: ``n_types``, one ``word.<i>`` array per type and, optionally,
    ``rotor.<i>`` arrays of probabilities (numbers or ``"p/q"`` strings).
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise GeneratorError(f"syntax error: {exc}") from None

    unknown = sorted(set(doc) - {"n_types", "word", "rotor"})
    if unknown:
        raise GeneratorError(f"unknown key(s): {', '.join(unknown)}")
    n = doc.get("n_types")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise GeneratorError("'n_types' must be a positive integer")

    raw_words = _indexed_table(doc, "word", n)
    words = []
    for i in range(n):
        if i not in raw_words:
            raise GeneratorError(f"missing word for type {i + 1}")
        w = raw_words[i]
        if not w:
            raise GeneratorError(f"empty word for type {i + 1}")
        row = []
        for pos, t in enumerate(w):
            if isinstance(t, bool) or not isinstance(t, int):
                raise GeneratorError(
                    f"type {i + 1}, position {pos + 1}: child type must be an integer, got {t!r}"
                )
            if not 1 <= t <= n:
                raise GeneratorError(
                    f"type {i + 1}, position {pos + 1}: child type {t} outside 1..{n}"
                )
            row.append(t - 1)
        words.append(tuple(row))

    rotor = None
    if "rotor" in doc:
        raw_rotor = _indexed_table(doc, "rotor", n)
        rows = []
        for i in range(n):
            if i not in raw_rotor:
                raise GeneratorError(f"missing rotor law for type {i + 1}")
            vals = raw_rotor[i]
            if len(vals) != len(words[i]) + 1:
                raise GeneratorError(
                    f"rotor law for type {i + 1} has {len(vals)} entries, "
                    f"expected {len(words[i]) + 1}"
                )
            rows.append(
                tuple(
                    _probability(p, f"rotor.{i + 1}, state {k}") for k, p in enumerate(vals)
                )
            )
        rotor = tuple(rows)

    return Generator(tuple(words), rotor)


def _resolve(path) -> Path:
    p = Path(path)
    if p.exists() or p.suffix:
        return p
    bundled = resources.files("rotortree") / "data" / f"{p.name}.toml"
    if bundled.is_file():
        return Path(str(bundled))
    return p


def load_generator(path) -> Generator:
    """Read a generator file; a bare name such as ``appendix`` selects a bundled one."""
    return parse_generator(_resolve(path).read_text(encoding="utf-8"))


def bundled_generators() -> list[str]:
    folder = resources.files("rotortree") / "data"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".toml"))


def _format_prob(p: Fraction) -> str:
    if p.denominator == 1:
        return str(p.numerator)
    return f'"{p.numerator}/{p.denominator}"'


def dump_generator(g: Generator) -> str:
    lines = [f"n_types = {g.n_types}"]
    for i, w in enumerate(g.words):
        lines.append(f"word.{i + 1} = [{', '.join(str(t + 1) for t in w)}]")
    if g.rotor is not None:
        for i, row in enumerate(g.rotor):
            lines.append(f"rotor.{i + 1} = [{', '.join(_format_prob(p) for p in row)}]")
    return "\n".join(lines) + "\n"


def adjacency(g: Generator) -> np.ndarray:
    """Integer matrix whose (i, j) entry counts the type-j children of a type-i vertex."""
    d = np.zeros((g.n_types, g.n_types), dtype=np.int64)
    for i, w in enumerate(g.words):
        for j in w:
            d[i, j] += 1
    return d


def is_palindromic(g: Generator) -> bool:
    return all(w == w[::-1] for w in g.words)
