"""
Numeric tower, determinants and Wick combinatorics.

Every quantity in the engine is a Scalar in one of two modes:
- EXACT: fractions.Fraction (ints are accepted and promoted)
- FLOAT: IEEE double

A value's mode is fixed when it is constructed. Mixing an exact rational with a
float raises ModeMismatchError; nothing is silently coerced. Matrices are numpy
arrays: object dtype holding Fractions in exact mode, float64 in float mode.

Usage:
    from taumodel.numerics import Mode, as_matrix, det, vandermonde

    det(as_matrix([[7, 3], [4, 2]]))          # Fraction(2, 1)
    vandermonde([3, 1], 2)                     # Fraction(2, 1)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from taumodel.config import WICK_MAX_WORD

logger = logging.getLogger(__name__)

Scalar = Union[Fraction, float]


class Mode(str, Enum):
    """Numeric mode of a value, a matrix or a whole chain."""
    EXACT = "exact"
    FLOAT = "float"


class ModeMismatchError(TypeError):
    """Raised when exact and float values meet in one computation."""


class NonSquareMatrixError(ValueError):
    """Raised when a determinant is requested for a non-square matrix."""


class WickLengthError(ValueError):
    """Raised when a Wick word exceeds the pairing enumeration cap."""


class FloatOverflowError(ArithmeticError):
    """Raised when a float-mode result is not finite."""


def mode_of(value) -> Optional[Mode]:
    """Mode of a single value; None for ints, which fit either mode."""
    if isinstance(value, bool):
        raise TypeError(f"booleans are not scalars: {value!r}")
    if isinstance(value, Fraction):
        return Mode.EXACT
    if isinstance(value, (int, np.integer)):
        return None
    if isinstance(value, (float, np.floating)):
        return Mode.FLOAT
    raise TypeError(f"unsupported scalar type {type(value).__name__}: {value!r}")


def common_mode(values: Iterable, default: Mode = Mode.EXACT) -> Mode:
    """The single mode shared by `values` (ints are neutral)."""
    found = None
    for value in values:
        mode = mode_of(value)
        if mode is None:
            continue
        if found is None:
            found = mode
        elif mode is not found:
            raise ModeMismatchError(f"mixed exact and float values (saw {value!r} in a {found.value} context)")
    return found or default


def to_scalar(value, mode: Mode) -> Scalar:
    """
    Convert a raw value to a Scalar of the given mode.

    Strings parse exactly ("3/4", "-2", "0.125"); a Fraction is refused in float
    mode and a float is refused in exact mode.
    """
    mode = Mode(mode)
    if isinstance(value, str):
        text = value.strip()
        try:
            parsed = Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse scalar {value!r}: {exc}") from exc
        return parsed if mode is Mode.EXACT else float(parsed)

    kind = mode_of(value)
    if kind is not None and kind is not mode:
        raise ModeMismatchError(f"{value!r} is a {kind.value} value, expected {mode.value}")
    if mode is Mode.EXACT:
        return value if isinstance(value, Fraction) else Fraction(int(value))
    return float(value)


def zero(mode: Mode) -> Scalar:
    return Fraction(0) if Mode(mode) is Mode.EXACT else 0.0


def one(mode: Mode) -> Scalar:
    return Fraction(1) if Mode(mode) is Mode.EXACT else 1.0


def factorial(n: int) -> int:
    """Exact factorial; prefactors stay big integers in both modes."""
    return math.factorial(n)


def check_finite(value: Scalar, what: str = "result") -> Scalar:
    if isinstance(value, float) and not math.isfinite(value):
        raise FloatOverflowError(f"{what} overflowed in float mode ({value!r}); try exact mode or smaller data")
    return value


def values_agree(a: Scalar, b: Scalar, tol: float = 1e-10) -> bool:
    """Exact equality for rationals, relative closeness otherwise."""
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    a, b = float(a), float(b)
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def scalar_sum(values: Iterable[Scalar], mode: Mode) -> Scalar:
    """Order-independent sum: exact addition, or math.fsum in float mode."""
    if Mode(mode) is Mode.FLOAT:
        return math.fsum(values)
    total = Fraction(0)
    for value in values:
        total += value
    return total


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------

def as_matrix(rows: Sequence[Sequence], mode: Optional[Mode] = None) -> np.ndarray:
    """Build a dense row-major matrix whose entries share one mode."""
    rows = [list(row) for row in rows]
    width = len(rows[0]) if rows else 0
    if any(len(row) != width for row in rows):
        raise ValueError("matrix rows must all have the same length")

    mode = Mode(mode) if mode is not None else common_mode(v for row in rows for v in row)
    if mode is Mode.FLOAT:
        return np.array([[to_scalar(v, mode) for v in row] for row in rows], dtype=float).reshape(len(rows), width)

    matrix = np.empty((len(rows), width), dtype=object)
    for i, row in enumerate(rows):
        for j, value in enumerate(row):
            matrix[i, j] = to_scalar(value, mode)
    return matrix


def matrix_mode(m: np.ndarray) -> Mode:
    if m.dtype.kind == "f":
        return Mode.FLOAT
    if m.dtype.kind in "iu":
        return Mode.EXACT
    if m.dtype.kind == "O":
        return common_mode(m.flat)
    raise TypeError(f"unsupported matrix dtype {m.dtype}")


def _bareiss(a: List[List[Fraction]]) -> Fraction:
    """Fraction-free Gaussian elimination; every division is exact."""
    n = len(a)
    sign = 1
    prev = Fraction(1)
    for k in range(n - 1):
        if a[k][k] == 0:
            pivot = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if pivot is None:
                return Fraction(0)
            a[k], a[pivot] = a[pivot], a[k]
            sign = -sign
        akk = a[k][k]
        for i in range(k + 1, n):
            aik = a[i][k]
            row_i, row_k = a[i], a[k]
            for j in range(k + 1, n):
                row_i[j] = (row_i[j] * akk - aik * row_k[j]) / prev
        prev = akk
    return sign * a[n - 1][n - 1]


def det(m) -> Scalar:
    """
    Determinant of a square matrix.

    Exact mode uses Bareiss elimination; float mode uses numpy's LU with partial
    pivoting. The 0×0 determinant is 1.
    """
    a = m if isinstance(m, np.ndarray) else np.asarray(m, dtype=object)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquareMatrixError(f"determinant needs a square matrix, got shape {a.shape}")

    mode = matrix_mode(a) if a.size else (Mode.FLOAT if a.dtype.kind == "f" else Mode.EXACT)
    n = a.shape[0]
    if n == 0:
        return one(mode)
    if mode is Mode.FLOAT:
        return float(np.linalg.det(a.astype(float)))
    return _bareiss([[to_scalar(v, Mode.EXACT) for v in row] for row in a.tolist()])


def vandermonde(xs: Sequence, N: int, mode: Optional[Mode] = None) -> Scalar:
    """
    det(x_i^{N-k}), i, k = 1..N.

    Returns 1 for N = 0 and 0 for N < 0 whatever `xs` holds; for N > 0 the length
    of `xs` must be N. The value equals the product of (x_i - x_j) over i < j.
    """
    mode = Mode(mode) if mode is not None else common_mode(xs)
    if N < 0:
        return zero(mode)
    if N == 0:
        return one(mode)
    if len(xs) != N:
        raise ValueError(f"vandermonde of order {N} needs {N} points, got {len(xs)}")
    points = [to_scalar(x, mode) for x in xs]
    return det(as_matrix([[x ** (N - k) for k in range(1, N + 1)] for x in points], mode))


def permutation_sign(perm: Sequence[int]) -> int:
    """Sign of a permutation of 0..n-1, by cycle decomposition."""
    seen = [False] * len(perm)
    sign = 1
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


# ---------------------------------------------------------------------------
# Wick pairings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairingTable:
    """
    Two-point values <w_i w_j> for a word of `size` letters (zero-based, i < j).

    Pairs missing from `values` contract to zero.
    """
    size: int
    values: Dict[Tuple[int, int], Scalar] = field(default_factory=dict)
    mode: Mode = Mode.EXACT

    def __post_init__(self):
        if self.size < 0:
            raise ValueError(f"word length must be nonnegative, got {self.size}")
        normalized = {}
        for (i, j), value in self.values.items():
            if not 0 <= i < j < self.size:
                raise ValueError(f"pairing ({i}, {j}) is not an ordered pair inside a word of length {self.size}")
            normalized[(i, j)] = to_scalar(value, self.mode)
        object.__setattr__(self, "values", normalized)

    def value(self, i: int, j: int) -> Scalar:
        return self.values.get((i, j), zero(self.mode))

    @classmethod
    def from_function(cls, size: int, fn: Callable[[int, int], Scalar], mode: Mode = Mode.EXACT) -> "PairingTable":
        return cls(size, {(i, j): fn(i, j) for i in range(size) for j in range(i + 1, size)}, mode)


def pairing_table_from_cross(cross) -> PairingTable:
    """
    Pairing table for the word w_1..w_N w̄_N..w̄_1 given cross[i][j] = <w_i w̄_j>.

    Same-type contractions are zero, so wick_vev of the result equals det(cross).
    """
    a = cross if isinstance(cross, np.ndarray) else as_matrix(cross)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquareMatrixError(f"cross table must be square, got shape {a.shape}")
    n = a.shape[0]
    mode = matrix_mode(a) if a.size else Mode.EXACT
    values = {}
    for i in range(n):
        for r in range(n):
            values[(i, n + r)] = a[i, n - 1 - r]
    return PairingTable(2 * n, values, mode)


def _sum_matchings(positions: Tuple[int, ...], table: PairingTable) -> Scalar:
    if not positions:
        return one(table.mode)
    first, rest = positions[0], positions[1:]
    total = zero(table.mode)
    for k, partner in enumerate(rest):
        contraction = table.value(first, partner)
        if contraction == 0:
            continue
        term = contraction * _sum_matchings(rest[:k] + rest[k + 1:], table)
        # partner sits k places after `first`: the matching permutation picks up (-1)^k
        total = total + term if k % 2 == 0 else total - term
    return total


def wick_vev(t: PairingTable) -> Scalar:
    """Signed sum over perfect matchings of the word; zero for odd length."""
    if t.size > WICK_MAX_WORD:
        raise WickLengthError(f"Wick enumeration is capped at {WICK_MAX_WORD} letters, got {t.size}")
    if t.size % 2:
        return zero(t.mode)
    return _sum_matchings(tuple(range(t.size)), t)


def wick_det(cross) -> Scalar:
    """Determinant form of the Wick sum for f-vs-f̄ words."""
    return det(cross if isinstance(cross, np.ndarray) else as_matrix(cross))
