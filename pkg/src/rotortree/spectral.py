"""Perron root / vector and inverses of small dense nonnegative matrices.

Matrices are numpy arrays. Exact matrices use ``dtype=object`` with
:class:`fractions.Fraction` entries and are inverted exactly; spectral
quantities are always computed in floating point.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

__all__ = [
    "ConvergenceError",
    "SingularMatrixError",
    "is_exact",
    "to_float",
    "to_exact",
    "identity",
    "strong_components",
    "spectral_radius",
    "perron_vector",
    "inverse",
    "gamma_matrix",
    "gamma_closed_form",
]

DEFAULT_TOL = 1e-12
MAX_ITER = 10**6


class ConvergenceError(ArithmeticError):
    """Power iteration stopped at the iteration cap."""

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class SingularMatrixError(ArithmeticError):
    def __init__(self, column):
        super().__init__(f"matrix is singular: no usable pivot in column {column + 1}")
        self.column = column


def is_exact(a) -> bool:
    a = np.asarray(a)
    return a.dtype == object or np.issubdtype(a.dtype, np.integer)


def to_float(a) -> np.ndarray:
    return np.asarray(a).astype(float)


def to_exact(a) -> np.ndarray:
    a = np.asarray(a)
    out = np.empty(a.shape, dtype=object)
    for idx, v in np.ndenumerate(a):
        out[idx] = Fraction(v)
    return out


def identity(n: int, exact: bool = False) -> np.ndarray:
    if exact:
        out = np.empty((n, n), dtype=object)
        for i in range(n):
            for j in range(n):
                out[i, j] = Fraction(int(i == j))
        return out
    return np.eye(n)


def _square(a) -> np.ndarray:
    a = to_float(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def _power_iteration(a, tol, max_iter):
    a = _square(a)
    if (a < 0).any():
        raise ValueError("power iteration needs a nonnegative matrix")
    n = a.shape[0]
    # A + I has the same Perron vector and is aperiodic when A is irreducible
    b = a + np.eye(n)
    x = np.full(n, 1.0 / n)
    rho, res = 0.0, np.inf
    for _ in range(max_iter):
        y = b @ x
        x_new = y / y.sum()
        ax = a @ x_new
        rho = ax.sum() / x_new.sum()
        res = np.abs(ax - rho * x_new).sum()
        x = x_new
        if res <= tol * max(rho, 0.0):
            break
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} steps (residual {res:.3e})",
            iterate=x,
            residual=res,
        )
    rows = a.sum(axis=1)
    slack = 1e-9 * max(1.0, rows.max())
    if not rows.min() - slack <= rho <= rows.max() + slack:
        raise ArithmeticError(
            f"Perron root {rho} outside row-sum bounds [{rows.min()}, {rows.max()}]"
        )
    return float(rho), x


def strong_components(a) -> list[list[int]]:
    """Strongly connected components of the support graph of ``a``."""
    a = _square(a)
    n = a.shape[0]
    reach = (a != 0) | np.eye(n, dtype=bool)
    for _ in range(max(1, n.bit_length())):
        reach = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
    mutual = reach & reach.T
    comps, seen = [], set()
    for i in range(n):
        if i not in seen:
            comp = [int(j) for j in np.flatnonzero(mutual[i])]
            seen.update(comp)
            comps.append(comp)
    return comps


def spectral_radius(a, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> float:
    """Perron root of a nonnegative matrix, by power iteration on ``A + I``.

    Reducible matrices are split into irreducible diagonal blocks first, which
    keeps convergence geometric (defective roots such as nilpotent parts would
    otherwise converge like ``1/k``).
    """
    a = _square(a)
    if (a < 0).any():
        raise ValueError("power iteration needs a nonnegative matrix")
    comps = strong_components(a)
    if len(comps) == 1:
        return _power_iteration(a, tol, max_iter)[0]
    rho = 0.0
    for comp in comps:
        block = a[np.ix_(comp, comp)]
        if len(comp) > 1 or block[0, 0] != 0:
            rho = max(rho, _power_iteration(block, tol, max_iter)[0])
    return rho


def perron_vector(a, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> np.ndarray:
    """Right Perron eigenvector, normalized to unit 1-norm."""
    return _power_iteration(a, tol, max_iter)[1]


def inverse(a, pivot_tol: float = 1e-13) -> np.ndarray:
    """Gauss-Jordan inverse with partial pivoting.

    Object arrays of Fractions (or integer arrays) are inverted exactly; a
    floating pivot is treated as zero below ``pivot_tol * max|A|``.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    exact = is_exact(a)
    if exact:
        work = to_exact(a)
        inv = identity(n, exact=True)
        threshold = 0
    else:
        work = a.astype(float)
        inv = np.eye(n)
        threshold = pivot_tol * max(np.abs(work).max(), 1.0)

    for col in range(n):
        p = max(range(col, n), key=lambda r: abs(work[r, col]))
        if abs(work[p, col]) <= threshold:
            raise SingularMatrixError(col)
        if p != col:
            work[[col, p]] = work[[p, col]]
            inv[[col, p]] = inv[[p, col]]
        pivot = work[col, col]
        work[col] = work[col] / pivot
        inv[col] = inv[col] / pivot
        for r in range(n):
            if r != col and work[r, col] != 0:
                f = work[r, col]
                work[r] = work[r] - f * work[col]
                inv[r] = inv[r] - f * inv[col]
    return inv


def gamma_matrix(d, m) -> np.ndarray:
    """``I + (D - I)(I - M)^{-1}``; exact when both inputs are exact."""
    exact = is_exact(d) and is_exact(m)
    d = to_exact(d) if exact else to_float(d)
    m = to_exact(m) if exact else to_float(m)
    n = d.shape[0]
    eye = identity(n, exact=exact)
    return eye + (d - eye).dot(inverse(eye - m))


def gamma_closed_form(psi: float, alpha: float) -> float:
    """Spectral radius of ``I + (D - I)(I - D/alpha)^{-1}`` given ``psi = rho(D)``."""
    if psi == alpha:
        raise ValueError("closed form undefined when psi == alpha")
    return (alpha - 1) * psi / (alpha - psi)
