"""The good-children multitype branching process of a rotor walk.

A type-``i`` vertex whose initial rotor is ``k`` has as good children the
children at positions ``k+1..d_i``; with i.i.d. rotors these children form a
multitype Galton-Watson tree. This module computes its offspring law, moment
matrices, generating functions, the recurrence classification and the
predicted range density ``(1 - 1/gamma) / 2``.

Second moments come in two flavours. ``sigma`` and ``xi`` are the raw
moments ``E[Z_j Z_k]`` and ``E[Y_j Y_k]``; the ``*_factorial`` variants are the
second derivatives of the generating functions at ``1``, which differ from the
raw moments on the diagonal ``j == k``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Optional

import numpy as np

from .generator import Generator, adjacency, is_palindromic
from .spectral import (
    ConvergenceError,
    identity,
    inverse,
    spectral_radius,
    to_exact,
    to_float,
)

__all__ = [
    "CLASSIFICATION_TOL",
    "Classification",
    "RotorLaw",
    "OffspringEntry",
    "OffspringLaw",
    "MomentData",
    "NotPositiveRecurrentError",
    "good_children_counts",
    "offspring_law",
    "first_moment_matrix",
    "second_moments",
    "factorial_second_moments",
    "total_size_moments",
    "total_size_factorial_moments",
    "classify",
    "analyze",
    "mbp_generating_function",
    "total_size_gf",
    "palindromic_first_moment_identity",
    "PreconditionError",
]

CLASSIFICATION_TOL = 1e-9


class Classification(str, enum.Enum):
    POSITIVE_RECURRENT = "positive_recurrent"
    NULL_RECURRENT = "null_recurrent"
    TRANSIENT = "transient"


class NotPositiveRecurrentError(ValueError):
    """Quantity only defined when the spectral radius of M is below 1."""


@dataclass(frozen=True)
class RotorLaw:
    """Per-type distribution of the initial rotor over states ``0..d_i``."""

    probs: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        rows = []
        for i, row in enumerate(self.probs):
            row = tuple(Fraction(p) for p in row)
            if any(p < 0 for p in row):
                raise ValueError(f"rotor law for type {i + 1} has a negative entry")
            total = sum(row)
            if total != 1:
                if abs(total - 1) > 1e-12:
                    raise ValueError(f"rotor law for type {i + 1} sums to {float(total)}")
                row = tuple(p / total for p in row)
            rows.append(row)
        object.__setattr__(self, "probs", tuple(rows))

    @classmethod
    def uniform(cls, g: Generator) -> "RotorLaw":
        return cls(tuple((Fraction(1, d + 1),) * (d + 1) for d in g.degrees))

    @classmethod
    def point_mass(cls, g: Generator, states) -> "RotorLaw":
        """All mass on ``states[i]`` for type ``i``; an int applies to every type,
        and ``-1`` means the last state ``d_i``."""
        if isinstance(states, int):
            states = [states] * g.n_types
        rows = []
        for d, s in zip(g.degrees, states):
            s = d if s == -1 else s
            rows.append(tuple(Fraction(int(k == s)) for k in range(d + 1)))
        return cls(tuple(rows))

    @classmethod
    def for_generator(cls, g: Generator) -> "RotorLaw":
        """The law stored in the generator file, uniform if there is none."""
        return cls(g.rotor) if g.rotor is not None else cls.uniform(g)

    @property
    def n_types(self) -> int:
        return len(self.probs)

    def check(self, g: Generator) -> None:
        if self.n_types != g.n_types:
            raise ValueError(f"rotor law has {self.n_types} types, generator has {g.n_types}")
        for i, (row, d) in enumerate(zip(self.probs, g.degrees)):
            if len(row) != d + 1:
                raise ValueError(
                    f"rotor law for type {i + 1} has {len(row)} states, expected {d + 1}"
                )

    def is_uniform(self) -> bool:
        return all(len(set(row)) == 1 for row in self.probs)

    def mean_state(self, i: int) -> Fraction:
        return sum(k * p for k, p in enumerate(self.probs[i]))


class OffspringEntry(NamedTuple):
    rotor: int
    counts: tuple[int, ...]
    prob: Fraction


@dataclass(frozen=True)
class OffspringLaw:
    """Per-type list of (rotor state, offspring vector, probability).

    Entries with equal offspring vectors are kept apart so each one stays
    tied to the rotor state that produced it.
    """

    entries: tuple[tuple[OffspringEntry, ...], ...]

    @property
    def n_types(self) -> int:
        return len(self.entries)


def good_children_counts(g: Generator, i: int, k: int) -> np.ndarray:
    """Per-type number of children at positions ``k+1..d_i`` of a type-``i`` vertex."""
    if not 0 <= i < g.n_types:
        raise IndexError(f"type {i + 1} outside 1..{g.n_types}")
    d = g.degrees[i]
    if not 0 <= k <= d:
        raise IndexError(f"rotor state {k} outside 0..{d} for type {i + 1}")
    counts = np.zeros(g.n_types, dtype=np.int64)
    for j in g.words[i][k:]:
        counts[j] += 1
    return counts


def offspring_law(g: Generator, law: RotorLaw) -> OffspringLaw:
    law.check(g)
    entries = []
    for i, row in enumerate(law.probs):
        entries.append(
            tuple(
                OffspringEntry(k, tuple(int(c) for c in good_children_counts(g, i, k)), p)
                for k, p in enumerate(row)
                if p > 0
            )
        )
    return OffspringLaw(tuple(entries))


def first_moment_matrix(ol: OffspringLaw) -> np.ndarray:
    n = ol.n_types
    m = to_exact(np.zeros((n, n), dtype=np.int64))
    for i, entries in enumerate(ol.entries):
        for e in entries:
            for j, c in enumerate(e.counts):
                if c:
                    m[i, j] += e.prob * c
    return m


def second_moments(ol: OffspringLaw) -> np.ndarray:
    """Raw mixed moments ``sigma[i, j, k] = E[Z_j Z_k | Z_0 = e_i]``."""
    n = ol.n_types
    s = to_exact(np.zeros((n, n, n), dtype=np.int64))
    for i, entries in enumerate(ol.entries):
        for e in entries:
            c = e.counts
            for j in range(n):
                if c[j]:
                    for k in range(n):
                        if c[k]:
                            s[i, j, k] += e.prob * c[j] * c[k]
    return s


def _raw_to_factorial(raw, first):
    out = raw.copy()
    n = first.shape[0]
    for i in range(n):
        for j in range(n):
            out[i, j, j] = out[i, j, j] - first[i, j]
    return out


def factorial_second_moments(ol: OffspringLaw) -> np.ndarray:
    """Second partial derivatives of the offspring generating function at ``1``."""
    return _raw_to_factorial(second_moments(ol), first_moment_matrix(ol))


def classify(rho: float, tol: float = CLASSIFICATION_TOL) -> Classification:
    if abs(rho - 1.0) < tol:
        return Classification.NULL_RECURRENT
    return Classification.POSITIVE_RECURRENT if rho < 1.0 else Classification.TRANSIENT


def _require_subcritical(m):
    rho = spectral_radius(to_float(m))
    if classify(rho) is not Classification.POSITIVE_RECURRENT:
        raise NotPositiveRecurrentError(
            f"total progeny moments need rho(M) < 1, got rho(M) = {rho:.12g}"
        )
    return rho


def total_size_factorial_moments(m, sigma_factorial):
    """``V = (I - M)^{-1}`` and the second derivatives of the total-progeny
    generating function at ``1``, solved column by column as
    ``S_k = (I - M)^{-1} Gamma_k``."""
    _require_subcritical(m)
    exact = m.dtype == object and sigma_factorial.dtype == object
    if not exact:
        m, sigma_factorial = to_float(m), to_float(sigma_factorial)
    n = m.shape[0]
    eye = identity(n, exact=exact)
    v = inverse(eye - m)
    # quad[i, j, k] = sum_ab sigma[i, a, b] v[a, j] v[b, k]
    quad = np.einsum("iab,aj,bk->ijk", sigma_factorial, v, v)
    mv = m.dot(v)
    xi = np.empty((n, n, n), dtype=object if exact else float)
    for k in range(n):
        gam = quad[:, :, k].copy()
        for i in range(n):
            gam[i, :] = gam[i, :] + mv[i, :] * (1 if i == k else 0)
            gam[i, i] = gam[i, i] + mv[i, k]
        xi[:, :, k] = v.dot(gam)
    return v, xi


def total_size_moments(m, sigma):
    """``V`` and the raw mixed moments ``xi[i, j, k] = E[Y_j Y_k | Z_0 = e_i]``
    of the total progeny ``Y``; ``sigma`` holds raw offspring moments."""
    v, xi = total_size_factorial_moments(m, _raw_to_factorial(sigma, m))
    n = m.shape[0]
    for i in range(n):
        for j in range(n):
            xi[i, j, j] = xi[i, j, j] + v[i, j]
    return v, xi


def _bool_power_positive(pattern: np.ndarray, power: int) -> bool:
    acc = np.eye(pattern.shape[0], dtype=bool)
    base = pattern.copy()
    while power:
        if power & 1:
            acc = (acc.astype(np.int64) @ base.astype(np.int64)) > 0
        base = (base.astype(np.int64) @ base.astype(np.int64)) > 0
        power >>= 1
    return bool(acc.all())


def regularity_notes(ol: OffspringLaw, m) -> list[str]:
    """Violations of the positive-regular / nonsingular assumptions."""
    notes = []
    n = m.shape[0]
    pattern = to_float(m) > 0
    # Wielandt: a primitive n x n matrix has M^((n-1)^2 + 1) > 0
    if not _bool_power_positive(pattern, (n - 1) ** 2 + 1):
        notes.append("first moment matrix is not primitive (process not positive regular)")
    if all(sum(e.counts) == 1 for entries in ol.entries for e in entries):
        notes.append("every particle has exactly one child (singular process)")
    return notes


@dataclass
class MomentData:
    """Everything :func:`analyze` derives from a generator and a rotor law.

    ``gamma_matrix`` is ``I + (D - I) V``; ``leaf_mean`` is ``I + V (D - I)``,
    whose row ``i`` is the expected per-type leaf count of the range at the
    first return of a walk rooted at type ``i``. Both have spectral radius
    ``gamma``; ``Gamma`` is the transpose of ``gamma_matrix``.
    """

    n_types: int
    D: np.ndarray
    M: np.ndarray
    sigma: np.ndarray
    rho_M: float
    classification: Classification
    V: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None
    gamma_matrix: Optional[np.ndarray] = None
    leaf_mean: Optional[np.ndarray] = None
    gamma: Optional[float] = None
    predicted_limit: Optional[float] = None
    notes: list[str] = field(default_factory=list)

    @property
    def Gamma(self) -> Optional[np.ndarray]:
        return None if self.gamma_matrix is None else self.gamma_matrix.T

    def to_dict(self) -> dict:
        def mat(a):
            if a is None:
                return None
            return np.vectorize(str, otypes=[object])(a).tolist() if a.dtype == object else a.tolist()

        return {
            "n_types": self.n_types,
            "D": self.D.tolist(),
            "M": mat(self.M),
            "M_float": to_float(self.M).tolist(),
            "rho_M": self.rho_M,
            "classification": self.classification.value,
            "V": mat(self.V),
            "xi": mat(self.xi),
            "gamma_matrix": mat(self.gamma_matrix),
            "leaf_mean": mat(self.leaf_mean),
            "gamma": self.gamma,
            "predicted_limit": self.predicted_limit,
            "notes": list(self.notes),
        }


def analyze(g: Generator, law: Optional[RotorLaw] = None) -> MomentData:
    law = RotorLaw.for_generator(g) if law is None else law
    ol = offspring_law(g, law)
    d = adjacency(g)
    m = first_moment_matrix(ol)
    sigma = second_moments(ol)
    rho = spectral_radius(to_float(m))
    cls = classify(rho)
    data = MomentData(
        n_types=g.n_types, D=d, M=m, sigma=sigma, rho_M=rho, classification=cls
    )
    data.notes = regularity_notes(ol, m)
    for note in data.notes:
        warnings.warn(note, stacklevel=2)
    if cls is not Classification.POSITIVE_RECURRENT:
        return data

    v, xi = total_size_moments(m, sigma)
    dm = to_exact(d) - identity(g.n_types, exact=True)
    eye = identity(g.n_types, exact=True)
    data.V, data.xi = v, xi
    data.gamma_matrix = eye + dm.dot(v)
    data.leaf_mean = eye + v.dot(dm)
    data.gamma = spectral_radius(to_float(data.gamma_matrix))
    if data.gamma >= 1.0 - 1e-12:
        data.predicted_limit = float(max(0.0, 0.5 * (1.0 - 1.0 / data.gamma)))
    else:
        data.notes.append(f"gamma = {data.gamma:.6g} < 1: no range-density prediction")
    return data


def _check_unit_cube(z):
    if np.any(z < 0) or np.any(z > 1):
        raise ValueError("generating functions are evaluated on [0, 1]^N")


def mbp_generating_function(ol: OffspringLaw, z, strict: bool = True) -> np.ndarray:
    """Offspring generating function ``f(z)``, componentwise.

    Works on floats or Fractions. ``strict=False`` lifts the ``[0, 1]`` domain
    check; the polynomial is then evaluated as is (used by finite differences
    across ``z = 1``).
    """
    z = np.asarray(z, dtype=object if any(isinstance(x, Fraction) for x in z) else float)
    if z.shape != (ol.n_types,):
        raise ValueError(f"expected a vector of length {ol.n_types}")
    if strict:
        _check_unit_cube(z)
    out = []
    for entries in ol.entries:
        acc = 0
        for e in entries:
            term = e.prob if z.dtype == object else float(e.prob)
            for zj, c in zip(z, e.counts):
                if c:
                    term = term * zj**c
            acc = acc + term
        out.append(acc)
    return np.array(out, dtype=z.dtype)


def _offspring_arrays(ol: OffspringLaw):
    """Flattened (type, probability, counts) arrays for fast float evaluation."""
    owners, probs, counts = [], [], []
    for i, entries in enumerate(ol.entries):
        for e in entries:
            owners.append(i)
            probs.append(float(e.prob))
            counts.append(e.counts)
    return np.array(owners), np.array(probs), np.array(counts, dtype=float)


def total_size_gf(
    ol: OffspringLaw, z, tol: float = 1e-14, max_iter: int = 10**6, strict: bool = True
) -> np.ndarray:
    """Total-progeny generating function ``F``: the minimal solution of
    ``F_i = z_i f_i(F)``, reached by iterating from ``F = 0``."""
    z = np.asarray(z, dtype=float)
    if z.shape != (ol.n_types,):
        raise ValueError(f"expected a vector of length {ol.n_types}")
    if strict:
        _check_unit_cube(z)
    owners, probs, counts = _offspring_arrays(ol)
    f = np.zeros(ol.n_types)
    for _ in range(max_iter):
        terms = probs * np.prod(f[None, :] ** counts, axis=1)
        nxt = z * np.bincount(owners, weights=terms, minlength=ol.n_types)
        if not np.all(np.isfinite(nxt)):
            raise ConvergenceError("total-size generating function diverged", iterate=f)
        if np.abs(nxt - f).max() <= tol:
            return nxt
        f = nxt
    raise ConvergenceError(
        f"fixed-point iteration did not converge in {max_iter} steps",
        iterate=f,
        residual=float(np.abs(nxt - f).max()),
    )


class PreconditionError(ValueError):
    pass


def palindromic_first_moment_identity(g: Generator) -> bool:
    """Exact test of ``2M == D`` under uniform rotors; requires palindromic words."""
    if not is_palindromic(g):
        raise PreconditionError("generator is not palindromic")
    m = first_moment_matrix(offspring_law(g, RotorLaw.uniform(g)))
    d = adjacency(g)
    return all(2 * m[i, j] == d[i, j] for i in range(g.n_types) for j in range(g.n_types))
