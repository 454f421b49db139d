"""
Truncated Fock space of p-component charged free fermions.

Basis states are occupancy bit patterns over a finite window of levels
[-M, M) per component. Component alpha at level n has flat index
p*n + alpha - 1; flat indices are stored in descending bit order (the highest
flat mode is bit 0), so the Jordan-Wigner sign of an operator is the parity of
the occupied modes above it. The vacuum fills every level below zero.

States are sparse maps {bit pattern: amplitude}. Every operator application
drops exact zeros; float-mode exponentials also drop amplitudes that are
negligible relative to the largest one.

Usage:
    from taumodel.fock import ModeWindow, z_fock

    window = ModeWindow(p=2, M=4, band=2)
    z_fock(chain, gspecs=[], window=window)
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

from taumodel.config import EXP_TOL, PRUNE_TOL, TAYLOR_ORDER, TOLERANCE
from taumodel.ensemble import (
    Atom,
    BilinearSpec,
    ChainSpec,
    DiscreteMeasure,
    TableKernel,
    ZeroSupportError,
    kernel_eval,
)
from taumodel.numerics import (
    Mode,
    Scalar,
    as_matrix,
    common_mode,
    det,
    factorial,
    one,
    to_scalar,
    values_agree,
    zero,
)

logger = logging.getLogger(__name__)

ChargeVector = Tuple[int, ...]


class FockError(RuntimeError):
    """Base class for Fock-space failures."""


class WindowError(FockError):
    """Raised when a mode, charge or field falls outside the truncation window."""


class ConvergenceError(FockError):
    """Raised when a Taylor series has not converged by the requested order."""


class KernelMismatchError(FockError):
    """Raised when a chain kernel disagrees with the table induced by g."""

    def __init__(self, message: str, index: Tuple[int, int], component: int):
        super().__init__(message)
        self.index = index
        self.component = component


# ---------------------------------------------------------------------------
# Windows and modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeWindow:
    """
    p components with levels [-M, M) each.

    `band` K limits the field operators f(x), f̄(y) to levels [-K, K); it
    defaults to M. Hamiltonians and bilinears use the whole window.
    """
    p: int
    M: int
    band: Optional[int] = None

    def __post_init__(self):
        if self.p < 1:
            raise WindowError(f"window needs at least one component, got p={self.p}")
        if self.M < 1:
            raise WindowError(f"window half-width must be positive, got M={self.M}")
        band = self.M if self.band is None else self.band
        if not 1 <= band <= self.M:
            raise WindowError(f"band must lie in [1, M={self.M}], got {band}")
        object.__setattr__(self, "band", band)

    @property
    def n_bits(self) -> int:
        return 2 * self.p * self.M

    def levels(self) -> range:
        return range(-self.M, self.M)

    def field_levels(self) -> range:
        return range(-self.band, self.band)

    def contains(self, level: int) -> bool:
        return -self.M <= level < self.M

    def check_component(self, alpha: int) -> None:
        if not 1 <= alpha <= self.p:
            raise WindowError(f"component {alpha} outside 1..{self.p}")

    def bit(self, alpha: int, level: int) -> int:
        self.check_component(alpha)
        if not self.contains(level):
            raise WindowError(f"level {level} of component {alpha} outside window [-{self.M}, {self.M})")
        flat = self.p * level + alpha - 1
        return self.p * self.M - 1 - flat

    def vacuum_pattern(self) -> int:
        # levels < 0 are flat indices < 0, i.e. the upper half of the bits
        half = self.p * self.M
        return ((1 << half) - 1) << half

    def doubled(self) -> "ModeWindow":
        return ModeWindow(self.p, 2 * self.M, self.band)

    def widened(self) -> "ModeWindow":
        """Doubles M and the band, for field sums that stand in for exponentials."""
        return ModeWindow(self.p, 2 * self.M, 2 * self.band)


@dataclass(frozen=True)
class FlatMode:
    component: int
    level: int

    def flat_index(self, p: int) -> int:
        return p * self.level + self.component - 1


def _create(state: int, bit: int) -> Optional[Tuple[int, int]]:
    mask = 1 << bit
    if state & mask:
        return None
    sign = -1 if (state & (mask - 1)).bit_count() & 1 else 1
    return sign, state | mask


def _annihilate(state: int, bit: int) -> Optional[Tuple[int, int]]:
    mask = 1 << bit
    if not state & mask:
        return None
    sign = -1 if (state & (mask - 1)).bit_count() & 1 else 1
    return sign, state ^ mask


# ---------------------------------------------------------------------------
# Vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FockVector:
    window: ModeWindow
    amplitudes: Dict[int, Scalar] = field(default_factory=dict)
    mode: Mode = Mode.EXACT

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", {k: v for k, v in self.amplitudes.items() if v != 0})

    def is_zero(self) -> bool:
        return not self.amplitudes

    @property
    def support_size(self) -> int:
        return len(self.amplitudes)

    def max_amplitude(self) -> float:
        return max((abs(float(v)) for v in self.amplitudes.values()), default=0.0)

    def scaled(self, c: Scalar) -> "FockVector":
        c = to_scalar(c, self.mode)
        return FockVector(self.window, {k: c * v for k, v in self.amplitudes.items()}, self.mode)

    def __add__(self, other: "FockVector") -> "FockVector":
        _check_compatible(self, other)
        out = dict(self.amplitudes)
        for k, v in other.amplitudes.items():
            out[k] = out.get(k, zero(self.mode)) + v
        return FockVector(self.window, out, self.mode)

    def pruned(self, rel_tol: float) -> "FockVector":
        if self.mode is Mode.EXACT or not self.amplitudes:
            return self
        cutoff = rel_tol * self.max_amplitude()
        return FockVector(self.window, {k: v for k, v in self.amplitudes.items() if abs(v) >= cutoff}, self.mode)


def _check_compatible(a: FockVector, b: FockVector) -> None:
    if a.window != b.window:
        raise WindowError(f"vectors live in different windows: {a.window} vs {b.window}")
    if a.mode is not b.mode:
        raise FockError(f"vectors mix {a.mode.value} and {b.mode.value} amplitudes")


def _transform(v: FockVector, moves: Callable[[int], Iterator[Tuple[int, Scalar]]]) -> FockVector:
    """Linear map given by its action on basis patterns."""
    out: Dict[int, Scalar] = {}
    for state, amp in v.amplitudes.items():
        for new_state, coef in moves(state):
            out[new_state] = out.get(new_state, zero(v.mode)) + coef * amp
    return FockVector(v.window, out, v.mode)


def vacuum(window: ModeWindow, mode: Mode = Mode.EXACT) -> FockVector:
    return FockVector(window, {window.vacuum_pattern(): one(mode)}, Mode(mode))


def vev(bra: FockVector, ket: FockVector) -> Scalar:
    """<bra|ket> with the bra given by its (real) coefficients."""
    _check_compatible(bra, ket)
    small, large = (bra, ket) if bra.support_size <= ket.support_size else (ket, bra)
    total = zero(ket.mode)
    for state, amp in small.amplitudes.items():
        other = large.amplitudes.get(state)
        if other is not None:
            total += amp * other
    return total


# ---------------------------------------------------------------------------
# Single modes
# ---------------------------------------------------------------------------

def apply_f(v: FockVector, m: FlatMode) -> FockVector:
    bit = v.window.bit(m.component, m.level)

    def moves(state):
        result = _create(state, bit)
        if result:
            yield result[1], result[0]

    return _transform(v, moves)


def apply_fbar(v: FockVector, m: FlatMode) -> FockVector:
    bit = v.window.bit(m.component, m.level)

    def moves(state):
        result = _annihilate(state, bit)
        if result:
            yield result[1], result[0]

    return _transform(v, moves)


def charged_vacuum_ket(charges: Sequence[int], window: ModeWindow, mode: Mode = Mode.EXACT) -> FockVector:
    """
    C̄_{n_p} ... C̄_{n_1} |0>, with C̄_n = f_{n-1}...f_0 for n > 0 and
    f̄_n...f̄_{-1} for n < 0.
    """
    charges = tuple(charges)
    if len(charges) != window.p:
        raise WindowError(f"need {window.p} charges, got {len(charges)}")
    for alpha, n in enumerate(charges, start=1):
        if abs(n) > window.M:
            raise WindowError(f"charge {n} of component {alpha} exceeds window M={window.M}")

    v = vacuum(window, mode)
    for alpha, n in enumerate(charges, start=1):
        if n > 0:
            for level in range(n):
                v = apply_f(v, FlatMode(alpha, level))
        else:
            for level in range(-1, n - 1, -1):
                v = apply_fbar(v, FlatMode(alpha, level))
    return v


def charged_vacuum_bra(charges: Sequence[int], window: ModeWindow, mode: Mode = Mode.EXACT) -> FockVector:
    """<0| C_{n_1} ... C_{n_p}; its coefficient vector equals the ket's."""
    return charged_vacuum_ket(charges, window, mode)


# ---------------------------------------------------------------------------
# Fields and coupling operators
# ---------------------------------------------------------------------------

def _field_weights(v: FockVector, value: Scalar, exponent: Callable[[int], int]) -> Dict[int, Optional[Scalar]]:
    """level -> value**exponent(level); None marks a negative power of zero."""
    value = to_scalar(value, v.mode)
    weights = {}
    for k in v.window.field_levels():
        e = exponent(k)
        if value == 0:
            weights[k] = None if e < 0 else (one(v.mode) if e == 0 else zero(v.mode))
        else:
            weights[k] = value ** e
    return weights


def _apply_field(v: FockVector, alpha: int, value: Scalar, exponent, create: bool, name: str) -> FockVector:
    window = v.window
    window.check_component(alpha)
    weights = _field_weights(v, value, exponent)
    bits = [(k, window.bit(alpha, k)) for k in window.field_levels()]
    step = _create if create else _annihilate

    def moves(state):
        for k, bit in bits:
            result = step(state, bit)
            if result is None:
                continue
            weight = weights[k]
            if weight is None:
                raise ZeroSupportError(f"{name}(0) needs a negative power at level {k}")
            if weight:
                yield result[1], result[0] * weight

    return _transform(v, moves)


def apply_field_f(v: FockVector, alpha: int, x: Scalar) -> FockVector:
    """f(x) = sum over the band of x**k f_k."""
    return _apply_field(v, alpha, x, lambda k: k, True, "f")


def apply_field_fbar(v: FockVector, alpha: int, y: Scalar) -> FockVector:
    """f̄(y) = sum over the band of y**(-k-1) f̄_k."""
    return _apply_field(v, alpha, y, lambda k: -k - 1, False, "f̄")


def apply_A(v: FockVector, mu: DiscreteMeasure, alpha: int) -> FockVector:
    """A_alpha = sum over atoms of w f^{(alpha)}(x) f̄^{(alpha+1)}(y)."""
    if not 1 <= alpha < v.window.p:
        raise WindowError(f"A_{alpha} needs components {alpha} and {alpha + 1} inside 1..{v.window.p}")
    if mu.mode is not v.mode:
        raise FockError(f"measure is {mu.mode.value} but the state is {v.mode.value}")
    total = FockVector(v.window, {}, v.mode)
    for atom in mu.atoms:
        term = apply_field_f(apply_field_fbar(v, alpha + 1, atom.y), alpha, atom.x)
        total = total + term.scaled(atom.w)
    return total


def _apply_A_power(v: FockVector, mu: DiscreteMeasure, alpha: int, n: int) -> FockVector:
    """A^n / n!"""
    for _ in range(n):
        v = apply_A(v, mu, alpha)
    return v.scaled(Fraction(1, factorial(n)) if v.mode is Mode.EXACT else 1.0 / factorial(n))


# ---------------------------------------------------------------------------
# Bilinears, Hamiltonians and their exponentials
# ---------------------------------------------------------------------------

def apply_bilinear(v: FockVector, h: BilinearSpec) -> FockVector:
    """sum of h_ij f_i f̄_j on component h.component."""
    window = v.window
    terms = [
        (window.bit(h.component, i), window.bit(h.component, j), to_scalar(c, v.mode))
        for i, j, c in h.terms
        if c
    ]

    def moves(state):
        for bi, bj, c in terms:
            first = _annihilate(state, bj)
            if first is None:
                continue
            second = _create(first[1], bi)
            if second is None:
                continue
            yield second[1], first[0] * second[0] * c

    return _transform(v, moves)


def apply_H(v: FockVector, alpha: int, k: int) -> FockVector:
    """H_k = sum over n of f_n f̄_{n+k}, both levels inside the window."""
    if k == 0:
        raise ValueError("H_0 is not a flow; k must be nonzero")
    window = v.window
    pairs = [(window.bit(alpha, n), window.bit(alpha, n + k)) for n in window.levels() if window.contains(n + k)]

    def moves(state):
        for dst, src in pairs:
            first = _annihilate(state, src)
            if first is None:
                continue
            second = _create(first[1], dst)
            if second is None:
                continue
            yield second[1], first[0] * second[0]

    return _transform(v, moves)


def _exp_series(
    v: FockVector,
    step: Callable[[FockVector], FockVector],
    order: int,
    exp_tol: float,
    prune_tol: float,
    what: str,
) -> FockVector:
    """sum over j of step^j(v) / j!, stopping at a zero (or negligible) term."""
    total, term = v, v
    for j in range(1, order + 1):
        term = step(term)
        if v.mode is Mode.EXACT:
            term = term.scaled(Fraction(1, j))
        else:
            term = term.scaled(1.0 / j).pruned(prune_tol)
        if term.is_zero():
            logger.debug("%s series terminated exactly after %d terms", what, j)
            return total
        total = total + term
        if v.mode is Mode.FLOAT and term.max_amplitude() <= exp_tol * total.max_amplitude():
            logger.debug("%s series converged after %d terms (support %d)", what, j, total.support_size)
            return total.pruned(prune_tol)
    raise ConvergenceError(f"{what} Taylor series did not converge within {order} terms")


def apply_exp_bilinear(
    v: FockVector,
    h: BilinearSpec,
    order: int = TAYLOR_ORDER,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
) -> FockVector:
    if not any(c for _, _, c in h.terms):
        return v
    return _exp_series(v, lambda u: apply_bilinear(u, h), order, exp_tol, prune_tol, f"g_{h.component}")


def apply_exp_H(
    v: FockVector,
    alpha: int,
    times: Sequence[Scalar],
    order: int = TAYLOR_ORDER,
    bar: bool = False,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
) -> FockVector:
    """exp(sum_k t_k H_k), or exp(sum_k t_k H_{-k}) when bar is set."""
    flows = [(k, to_scalar(t, v.mode)) for k, t in enumerate(times, start=1) if t]
    if not flows:
        return v
    sign = -1 if bar else 1

    def step(u: FockVector) -> FockVector:
        total = FockVector(u.window, {}, u.mode)
        for k, t in flows:
            total = total + apply_H(u, alpha, sign * k).scaled(t)
        return total

    return _exp_series(v, step, order, exp_tol, prune_tol, "H̄" if bar else "H")


# ---------------------------------------------------------------------------
# Kernels induced by g
# ---------------------------------------------------------------------------

def _single_charge(window: ModeWindow, alpha: int, charge: int, mode: Mode) -> FockVector:
    charges = [0] * window.p
    charges[alpha - 1] = charge
    return charged_vacuum_ket(charges, window, mode)


def _sandwich(
    window: ModeWindow,
    alpha: int,
    inner: Callable[[FockVector], FockVector],
    mode: Mode,
    t: Sequence = (),
    tbar: Sequence = (),
    charge: int = 0,
    order: int = TAYLOR_ORDER,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
) -> Scalar:
    """<n| e^{H(t)} X e^{H̄(t̄)} |n> on component alpha, X given by `inner`."""
    ket = _single_charge(window, alpha, charge, mode)
    ket = apply_exp_H(ket, alpha, tbar, order, bar=True, exp_tol=exp_tol, prune_tol=prune_tol)
    ket = inner(ket)
    # <n| e^{H(t)} is the transpose of e^{H̄(t)} |n> since H_k^T = H_{-k}
    bra = _single_charge(window, alpha, charge, mode)
    bra = apply_exp_H(bra, alpha, t, order, bar=True, exp_tol=exp_tol, prune_tol=prune_tol)
    return vev(bra, ket)


def _gspec_mode(gspec: BilinearSpec, *values) -> Mode:
    return common_mode([*values, *(h for _, _, h in gspec.terms)])


def rho_from_g(
    gspec: BilinearSpec,
    y: Scalar,
    x: Scalar,
    window: ModeWindow,
    *,
    t: Sequence = (),
    tbar: Sequence = (),
    charge: int = 0,
    order: int = TAYLOR_ORDER,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
    check_window: bool = True,
    tol: float = TOLERANCE,
) -> Scalar:
    """
    rho(y, x) = <n| e^{H(t)} f̄(y) g f(x) e^{H̄(t̄)} |n> on component gspec.component.

    With no times and charge 0 this is the kernel <0| f̄(y) g f(x) |0>. The value
    is recomputed with M doubled at fixed band and must not move.
    """
    alpha = gspec.component
    mode = _gspec_mode(gspec, y, x, *t, *tbar)
    y, x = to_scalar(y, mode), to_scalar(x, mode)

    def inner(v: FockVector) -> FockVector:
        v = apply_field_f(v, alpha, x)
        v = apply_exp_bilinear(v, gspec, order, exp_tol, prune_tol)
        return apply_field_fbar(v, alpha, y)

    value = _sandwich(window, alpha, inner, mode, t, tbar, charge, order, exp_tol, prune_tol)
    if check_window:
        wider = rho_from_g(gspec, y, x, window.doubled(), t=t, tbar=tbar, charge=charge,
                           order=order, exp_tol=exp_tol, prune_tol=prune_tol, check_window=False)
        if not values_agree(value, wider, tol):
            raise WindowError(f"rho({y}, {x}) changes from {value} to {wider} when the window doubles; enlarge M")
    return value


def g_vacuum_value(
    gspec: BilinearSpec,
    window: ModeWindow,
    *,
    t: Sequence = (),
    tbar: Sequence = (),
    charge: int = 0,
    order: int = TAYLOR_ORDER,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
) -> Scalar:
    """<n| e^{H(t)} g e^{H̄(t̄)} |n>, the one-component tau function."""
    mode = _gspec_mode(gspec, *t, *tbar)
    return _sandwich(
        window, gspec.component,
        lambda v: apply_exp_bilinear(v, gspec, order, exp_tol, prune_tol),
        mode, t, tbar, charge, order, exp_tol, prune_tol,
    )


def kernel_from_g(gspec: BilinearSpec, ys: Sequence, xs: Sequence, window: ModeWindow, **kwargs) -> TableKernel:
    """Table kernel of rho_from_g on the grid ys x xs."""
    return TableKernel.from_function(ys, xs, lambda y, x: rho_from_g(gspec, y, x, window, **kwargs))


@dataclass
class WickCheck:
    lhs: Scalar
    rhs: Optional[Scalar]
    g_vacuum: Scalar
    N: int
    skipped: bool
    holds: Optional[bool]

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs, "rhs": self.rhs, "g_vacuum": self.g_vacuum,
            "N": self.N, "skipped": self.skipped, "holds": self.holds,
        }


def wick_factorization_check(
    gspec: BilinearSpec,
    ys: Sequence,
    xs: Sequence,
    window: ModeWindow,
    tol: float = TOLERANCE,
    order: int = TAYLOR_ORDER,
) -> WickCheck:
    """
    <0| f̄(y_1)...f̄(y_N) g f(x_N)...f(x_1) |0> against <g>^{1-N} det rho(y_i, x_j).

    Skipped (and logged) when <g> vanishes, where the normalization is undefined.
    """
    if len(ys) != len(xs):
        raise ValueError("need as many y points as x points")
    alpha, N = gspec.component, len(xs)
    mode = _gspec_mode(gspec, *ys, *xs)
    ys = [to_scalar(y, mode) for y in ys]
    xs = [to_scalar(x, mode) for x in xs]

    v = vacuum(window, mode)
    for x in xs:
        v = apply_field_f(v, alpha, x)
    v = apply_exp_bilinear(v, gspec, order)
    for y in reversed(ys):
        v = apply_field_fbar(v, alpha, y)
    lhs = vev(vacuum(window, mode), v)

    g0 = g_vacuum_value(gspec, window, order=order)
    if g0 == 0 or (mode is Mode.FLOAT and abs(g0) < tol):
        logger.warning("skipping Wick factorization: <g> = %s vanishes", g0)
        return WickCheck(lhs, None, g0, N, skipped=True, holds=None)

    table = as_matrix([[rho_from_g(gspec, y, x, window, order=order) for x in xs] for y in ys], mode)
    rhs = det(table) * g0 ** (1 - N)
    return WickCheck(lhs, rhs, g0, N, skipped=False, holds=values_agree(lhs, rhs, tol))


# ---------------------------------------------------------------------------
# Signs and the chain expectation value
# ---------------------------------------------------------------------------

def ordering_sign(word: Sequence[Tuple[int, int]]) -> int:
    """
    Sign of stably sorting a word of (component, parity) letters by component.

    Only odd letters anticommute, so this is the parity of the inversions among
    them.
    """
    inversions = 0
    odd = [comp for comp, parity in word if parity % 2]
    for i, ci in enumerate(odd):
        for cj in odd[i + 1:]:
            if ci > cj:
                inversions += 1
    return -1 if inversions % 2 else 1


def chain_sign(p: int, N: int, bra_charges: Sequence[int], ket_charges: Sequence[int]) -> int:
    """
    Sign between the literal chain expectation value and the product of
    per-component expectation values, with (-1)^{N(N-1)/2} per interior
    component for reversing its f̄ string.
    """
    word: List[Tuple[int, int]] = [(alpha, abs(n) % 2) for alpha, n in enumerate(bra_charges, start=1)]
    for alpha in range(1, p):
        for _ in range(N):
            word.append((alpha, 1))
            word.append((alpha + 1, 1))
    word.extend((alpha, abs(ket_charges[alpha - 1]) % 2) for alpha in range(p, 0, -1))
    interior = -1 if (N * (N - 1) // 2) % 2 else 1
    return ordering_sign(word) * interior ** max(p - 2, 0)


@dataclass
class FockEvaluation:
    value: Scalar
    vev: Scalar
    sign: int
    window: ModeWindow
    vacuum_values: List[Scalar]
    support_size: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "vev": self.vev,
            "sign": self.sign,
            "window": {"p": self.window.p, "M": self.window.M, "band": self.window.band},
            "vacuum_values": list(self.vacuum_values),
            "support_size": self.support_size,
        }


def _check_gspecs(c: ChainSpec, gspecs: Sequence[BilinearSpec], window: ModeWindow) -> None:
    if window.p != c.p:
        raise WindowError(f"window has {window.p} components, chain has p={c.p}")
    if len(gspecs) != c.p - 2:
        raise FockError(f"p={c.p} needs {c.p - 2} group elements, got {len(gspecs)}")
    for alpha, g in enumerate(gspecs, start=2):
        if g.component != alpha:
            raise FockError(f"group element {alpha - 2} acts on component {g.component}, expected {alpha}")
        for level in g.levels():
            if not window.contains(level):
                raise WindowError(f"g_{alpha} touches level {level} outside [-{window.M}, {window.M})")
    if c.N > window.band:
        raise WindowError(f"N={c.N} needs a field band of at least {c.N}, got {window.band}")


def _check_kernels(c: ChainSpec, gspecs: Sequence[BilinearSpec], window: ModeWindow, tol: float, **kwargs) -> None:
    for alpha, (kernel, g) in enumerate(zip(c.kernels, gspecs), start=2):
        left, right = c.measures[alpha - 2], c.measures[alpha - 1]
        for i, a in enumerate(left.atoms):
            for j, b in enumerate(right.atoms):
                expected = rho_from_g(g, a.y, b.x, window, check_window=False, **kwargs)
                actual = kernel_eval(kernel, a.y, b.x)
                if not values_agree(actual, expected, tol):
                    raise KernelMismatchError(
                        f"kernel rho_{alpha} at atom pair ({i}, {j}) is {actual}, g gives {expected}",
                        (i, j), alpha,
                    )


def apply_chain(
    c: ChainSpec,
    gspecs: Sequence[BilinearSpec],
    start: FockVector,
    order: int,
    exp_tol: float,
    prune_tol: float,
    full_series: bool = False,
) -> FockVector:
    """e^{A_1} g_2 e^{A_2} ... g_{p-1} e^{A_{p-1}} applied right to left."""
    v = start
    for alpha in range(c.p - 1, 0, -1):
        mu = c.measures[alpha - 1]
        if full_series:
            total, term = v, v
            for j in range(1, c.N + 2):
                term = apply_A(term, mu, alpha).scaled(Fraction(1, j) if v.mode is Mode.EXACT else 1.0 / j)
                total = total + term
            v = total
        else:
            v = _apply_A_power(v, mu, alpha, c.N)
        if alpha >= 2:
            v = apply_exp_bilinear(v, gspecs[alpha - 2], order, exp_tol, prune_tol)
        logger.debug("after A_%d: support %d", alpha, v.support_size)
    return v


def fock_evaluation(
    c: ChainSpec,
    gspecs: Sequence[BilinearSpec],
    window: ModeWindow,
    *,
    check_kernels: bool = True,
    check_window: bool = True,
    check_orders: bool = False,
    order: int = TAYLOR_ORDER,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
    tol: float = TOLERANCE,
) -> FockEvaluation:
    """
    Z_N = (N!)^{p-1} · sign · <N,0,...,0,-N| e^{A_1} g_2 ... g_{p-1} e^{A_{p-1}} |0,...,0>.

    Only the N-th Taylor term of each e^{A} survives the charge selection rule;
    `check_orders` recomputes with the series through order N+1 and fails if
    the other orders contribute.
    `check_window` repeats the evaluation with M doubled at fixed band and
    raises WindowError if the value moves.
    """
    gspecs = list(gspecs)
    _check_gspecs(c, gspecs, window)
    mode = c.mode
    p, N = c.p, c.N
    kw = {"order": order, "exp_tol": exp_tol, "prune_tol": prune_tol}

    if check_kernels:
        _check_kernels(c, gspecs, window, tol, **kw)

    ket_charges = (0,) * p
    bra_charges = (N,) + (0,) * (p - 2) + (-N,)
    ket = apply_chain(c, gspecs, vacuum(window, mode), **kw)
    bra = charged_vacuum_bra(bra_charges, window, mode)
    raw = vev(bra, ket)

    if check_orders:
        full = vev(bra, apply_chain(c, gspecs, vacuum(window, mode), full_series=True, **kw))
        if not values_agree(raw, full, tol):
            raise FockError(f"Taylor orders other than N={N} contribute: {raw} vs {full}")

    sign = chain_sign(p, N, bra_charges, ket_charges)
    value = factorial(N) ** (p - 1) * sign * raw
    vacuum_values = [g_vacuum_value(g, window, **kw) for g in gspecs]

    if check_window:
        wider = fock_evaluation(c, gspecs, window.doubled(), check_kernels=False, check_window=False, tol=tol, **kw)
        if not values_agree(value, wider.value, tol):
            raise WindowError(f"z_fock changes from {value} to {wider.value} when the window doubles; enlarge M")

    logger.debug("z_fock p=%d N=%d: vev=%s sign=%d support=%d", p, N, raw, sign, ket.support_size)
    return FockEvaluation(value, raw, sign, window, vacuum_values, ket.support_size)


def z_fock(c: ChainSpec, gspecs: Sequence[BilinearSpec], window: ModeWindow, **kwargs) -> Scalar:
    return fock_evaluation(c, gspecs, window, **kwargs).value


# ---------------------------------------------------------------------------
# Generated families
# ---------------------------------------------------------------------------

def _nonzero_rational(rng: random.Random) -> Fraction:
    while True:
        value = Fraction(rng.randint(-4, 4), rng.randint(1, 3))
        if value:
            return value


def random_triangular_g(rng: random.Random, component: int, window: ModeWindow, n_terms: int = 2) -> BilinearSpec:
    """Strictly triangular h (particles only move up), so <g> = 1."""
    levels = list(window.field_levels())
    terms = []
    while len(terms) < n_terms:
        i, j = rng.sample(levels, 2)
        if i < j:
            i, j = j, i
        terms.append((i, j, _nonzero_rational(rng)))
    return BilinearSpec(component, tuple(terms))


def random_fock_chain(
    rng: random.Random,
    p: int,
    N: int,
    window: ModeWindow,
    max_atoms: int = 3,
    n_terms: int = 2,
) -> Tuple[ChainSpec, List[BilinearSpec]]:
    """Exact chain whose interior kernels are the tables induced by random g."""
    measures = tuple(
        DiscreteMeasure(
            tuple(Atom(_nonzero_rational(rng), _nonzero_rational(rng), _nonzero_rational(rng)) for _ in range(rng.randint(1, max_atoms))),
            alpha,
        )
        for alpha in range(1, p)
    )
    gspecs = [random_triangular_g(rng, alpha, window, n_terms) for alpha in range(2, p)]
    kernels = tuple(
        kernel_from_g(g, measures[alpha - 2].ys, measures[alpha - 1].xs, window)
        for alpha, g in zip(range(2, p), gspecs)
    )
    return ChainSpec(p, N, measures, kernels), gspecs
