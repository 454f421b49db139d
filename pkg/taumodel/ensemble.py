"""
Chain data model

Discrete two-variable measures, coupling kernels, chain specifications, time
deformations and the Hermitian-chain preset. Every value is immutable after
construction and normalizes its scalars to one numeric mode.

Usage:
    from taumodel.ensemble import Atom, DiscreteMeasure, ChainSpec, PolynomialKernel

    mu1 = DiscreteMeasure.from_triples([(1, 2, 1)], label=1)
    mu2 = DiscreteMeasure.from_triples([(3, 4, 2)], label=2)
    chain = ChainSpec(p=3, N=1, measures=(mu1, mu2), kernels=(PolynomialKernel({(1, 1): 1}),))
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

from numpy.polynomial import polynomial as P

from taumodel.numerics import (
    FloatOverflowError,
    Mode,
    ModeMismatchError,
    Scalar,
    common_mode,
    one,
    to_scalar,
    zero,
)

logger = logging.getLogger(__name__)

# Float table kernels resolve an atom to the grid point within this relative distance
GRID_REL_TOL = 1e-12


class EnsembleError(ValueError):
    """Raised when chain data violates a structural invariant."""


class KernelTableError(LookupError):
    """Raised when a table kernel is asked for a pair outside its grid."""


class ZeroSupportError(ZeroDivisionError):
    """Raised when an inverse-power time meets a support point at zero."""


class Slot(str, Enum):
    """Which coordinate of an atom a deformation acts on."""
    X = "x"
    Y = "y"


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    x: Scalar
    y: Scalar
    w: Scalar

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w}


@dataclass(frozen=True)
class DiscreteMeasure:
    """A finite weighted sum of point masses in the (x, y) plane."""
    atoms: Tuple[Atom, ...]
    label: int = 1
    mode: Mode = field(default=Mode.EXACT, compare=False)

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise EnsembleError(f"measure {self.label} needs at least one atom")
        mode = common_mode(v for a in atoms for v in (a.x, a.y, a.w))
        normalized = tuple(Atom(to_scalar(a.x, mode), to_scalar(a.y, mode), to_scalar(a.w, mode)) for a in atoms)
        object.__setattr__(self, "atoms", normalized)
        object.__setattr__(self, "mode", mode)

    @classmethod
    def from_triples(cls, triples: Iterable[Sequence], label: int = 1, mode: Optional[Mode] = None) -> "DiscreteMeasure":
        triples = [tuple(t) for t in triples]
        if mode is not None:
            triples = [tuple(to_scalar(v, mode) for v in t) for t in triples]
        return cls(tuple(Atom(*t) for t in triples), label)

    @property
    def xs(self) -> Tuple[Scalar, ...]:
        return tuple(a.x for a in self.atoms)

    @property
    def ys(self) -> Tuple[Scalar, ...]:
        return tuple(a.y for a in self.atoms)

    @property
    def weights(self) -> Tuple[Scalar, ...]:
        return tuple(a.w for a in self.atoms)

    def to_float(self) -> "DiscreteMeasure":
        if self.mode is Mode.FLOAT:
            return self
        return DiscreteMeasure(tuple(Atom(float(a.x), float(a.y), float(a.w)) for a in self.atoms), self.label)

    def to_dict(self) -> dict:
        return {"label": self.label, "atoms": [a.to_dict() for a in self.atoms]}


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolynomialKernel:
    """rho(y, x) = sum over (m, n) of c_mn * y**m * x**n."""
    coefficients: Mapping[Tuple[int, int], Scalar] = field(default_factory=dict)

    def __post_init__(self):
        coefficients = dict(self.coefficients)
        for (m, n) in coefficients:
            if m < 0 or n < 0:
                raise EnsembleError(f"polynomial kernel powers must be nonnegative, got ({m}, {n})")
        mode = common_mode(coefficients.values())
        object.__setattr__(self, "coefficients", {k: to_scalar(v, mode) for k, v in coefficients.items()})

    @property
    def mode(self) -> Optional[Mode]:
        return common_mode(self.coefficients.values()) if self.coefficients else None

    def __call__(self, y: Scalar, x: Scalar) -> Scalar:
        mode = common_mode([y, x, *self.coefficients.values()])
        y, x = to_scalar(y, mode), to_scalar(x, mode)
        total = zero(mode)
        for (m, n), c in self.coefficients.items():
            if c:
                total += c * y ** m * x ** n
        return total

    def to_float(self) -> "PolynomialKernel":
        return PolynomialKernel({k: float(v) for k, v in self.coefficients.items()})

    def to_dict(self) -> dict:
        return {"kind": "polynomial", "coefficients": [[m, n, c] for (m, n), c in sorted(self.coefficients.items())]}


@dataclass(frozen=True)
class TableKernel:
    """rho(y, x) tabulated on a grid: one row per y point, one column per x point."""
    ys: Tuple[Scalar, ...]
    xs: Tuple[Scalar, ...]
    values: Tuple[Tuple[Scalar, ...], ...]
    mode: Mode = field(default=Mode.EXACT, compare=False)
    _rows: Dict[Scalar, int] = field(default_factory=dict, init=False, repr=False, compare=False)
    _cols: Dict[Scalar, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        values = tuple(tuple(row) for row in self.values)
        if len(values) != len(self.ys) or any(len(row) != len(self.xs) for row in values):
            raise EnsembleError(f"kernel table must be {len(self.ys)}x{len(self.xs)}")
        mode = common_mode([*self.ys, *self.xs, *(v for row in values for v in row)])
        ys = tuple(to_scalar(v, mode) for v in self.ys)
        xs = tuple(to_scalar(v, mode) for v in self.xs)
        if len(set(ys)) != len(ys) or len(set(xs)) != len(xs):
            raise EnsembleError("kernel table grids must not repeat points")
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", tuple(tuple(to_scalar(v, mode) for v in row) for row in values))
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "_rows", {y: i for i, y in enumerate(ys)})
        object.__setattr__(self, "_cols", {x: j for j, x in enumerate(xs)})

    @classmethod
    def from_function(cls, ys: Sequence, xs: Sequence, fn, mode: Optional[Mode] = None) -> "TableKernel":
        ys = list(dict.fromkeys(ys))
        xs = list(dict.fromkeys(xs))
        if mode is not None:
            ys = [to_scalar(v, mode) for v in ys]
            xs = [to_scalar(v, mode) for v in xs]
        return cls(tuple(ys), tuple(xs), tuple(tuple(fn(y, x) for x in xs) for y in ys))

    def _locate(self, grid: Dict[Scalar, int], points: Tuple[Scalar, ...], value: Scalar, axis: str) -> int:
        found = grid.get(value)
        if found is not None:
            return found
        if self.mode is Mode.FLOAT:
            for i, point in enumerate(points):
                if math.isclose(float(value), point, rel_tol=GRID_REL_TOL, abs_tol=GRID_REL_TOL):
                    return i
        raise KernelTableError(f"kernel table has no {axis} point {value!r}")

    def row(self, y: Scalar) -> int:
        """Grid index of y; float points match within GRID_REL_TOL."""
        return self._locate(self._rows, self.ys, y, "y")

    def column(self, x: Scalar) -> int:
        return self._locate(self._cols, self.xs, x, "x")

    def index(self, y: Scalar, x: Scalar) -> Tuple[int, int]:
        try:
            return self.row(y), self.column(x)
        except KernelTableError:
            raise KernelTableError(f"kernel table has no entry for (y={y!r}, x={x!r})") from None

    def at(self, i: int, j: int) -> Scalar:
        return self.values[i][j]

    def __call__(self, y: Scalar, x: Scalar) -> Scalar:
        return self.at(*self.index(y, x))

    def to_float(self) -> "TableKernel":
        if self.mode is Mode.FLOAT:
            return self
        return TableKernel(
            tuple(float(v) for v in self.ys),
            tuple(float(v) for v in self.xs),
            tuple(tuple(float(v) for v in row) for row in self.values),
        )

    def to_dict(self) -> dict:
        return {"kind": "table", "ys": list(self.ys), "xs": list(self.xs), "values": [list(r) for r in self.values]}


CouplingKernel = Union[PolynomialKernel, TableKernel]


def kernel_eval(k: CouplingKernel, y: Scalar, x: Scalar) -> Scalar:
    """Value of a coupling kernel at (y, x)."""
    return k(y, x)


def _kernel_mode(k: CouplingKernel) -> Optional[Mode]:
    return k.mode


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------

def _check_modes(measures: Sequence[DiscreteMeasure], kernels: Sequence[CouplingKernel]) -> Mode:
    modes = {m.mode for m in measures}
    modes.update(_kernel_mode(k) for k in kernels if _kernel_mode(k) is not None)
    if len(modes) > 1:
        raise ModeMismatchError("chain mixes exact and float data; convert with to_float()")
    return modes.pop() if modes else Mode.EXACT


@dataclass(frozen=True)
class ChainSpec:
    """
    Open chain of p matrices with N eigenvalues each.

    measures[a] is mu_{a+1}; kernels[a] is rho_{a+2}, coupling the y of
    mu_{a+1} to the x of mu_{a+2}.
    """
    p: int
    N: int
    measures: Tuple[DiscreteMeasure, ...]
    kernels: Tuple[CouplingKernel, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "measures", tuple(self.measures))
        object.__setattr__(self, "kernels", tuple(self.kernels))
        if self.p < 2:
            raise EnsembleError(f"an open chain needs p >= 2, got {self.p}")
        if self.N < 0:
            raise EnsembleError(f"N must be nonnegative, got {self.N}")
        if len(self.measures) != self.p - 1:
            raise EnsembleError(f"p={self.p} needs {self.p - 1} measures, got {len(self.measures)}")
        if len(self.kernels) != max(self.p - 2, 0):
            raise EnsembleError(f"p={self.p} needs {self.p - 2} kernels, got {len(self.kernels)}")
        _check_modes(self.measures, self.kernels)

    @property
    def mode(self) -> Mode:
        return _check_modes(self.measures, self.kernels)

    def with_N(self, N: int) -> "ChainSpec":
        return replace(self, N=N)

    def to_float(self) -> "ChainSpec":
        return ChainSpec(self.p, self.N, tuple(m.to_float() for m in self.measures), tuple(k.to_float() for k in self.kernels))

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "N": self.N,
            "measures": [m.to_dict() for m in self.measures],
            "kernels": [k.to_dict() for k in self.kernels],
        }


@dataclass(frozen=True)
class LoopChainSpec:
    """
    Closed chain: p measures and p kernels.

    kernels[0] is rho_1 and couples the y of mu_p to the x of mu_1; kernels[a]
    couples the y of mu_a to the x of mu_{a+1}.
    """
    p: int
    N: int
    measures: Tuple[DiscreteMeasure, ...]
    kernels: Tuple[CouplingKernel, ...]

    def __post_init__(self):
        object.__setattr__(self, "measures", tuple(self.measures))
        object.__setattr__(self, "kernels", tuple(self.kernels))
        if self.p < 1:
            raise EnsembleError(f"a closed chain needs p >= 1, got {self.p}")
        if self.N < 0:
            raise EnsembleError(f"N must be nonnegative, got {self.N}")
        if len(self.measures) != self.p or len(self.kernels) != self.p:
            raise EnsembleError(f"closed chain with p={self.p} needs {self.p} measures and {self.p} kernels")
        _check_modes(self.measures, self.kernels)

    @property
    def mode(self) -> Mode:
        return _check_modes(self.measures, self.kernels)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "N": self.N,
            "measures": [m.to_dict() for m in self.measures],
            "kernels": [k.to_dict() for k in self.kernels],
        }


# ---------------------------------------------------------------------------
# Time deformations
# ---------------------------------------------------------------------------

def _times(seq: Sequence) -> Tuple[float, ...]:
    return tuple(to_scalar(v, Mode.FLOAT) for v in seq)


@dataclass(frozen=True)
class TimeDeformation:
    """Times t, t̄ and charges n per component, all indexed from component 1."""
    t: Tuple[Tuple[float, ...], ...]
    tbar: Tuple[Tuple[float, ...], ...]
    n: Tuple[int, ...]

    def __post_init__(self):
        if not (len(self.t) == len(self.tbar) == len(self.n)):
            raise EnsembleError("t, tbar and n must have one entry per component")
        for charge in self.n:
            if isinstance(charge, bool) or not isinstance(charge, int):
                raise EnsembleError(f"charges must be integers, got {charge!r}")
        object.__setattr__(self, "t", tuple(_times(s) for s in self.t))
        object.__setattr__(self, "tbar", tuple(_times(s) for s in self.tbar))
        object.__setattr__(self, "n", tuple(self.n))

    @classmethod
    def zero(cls, p: int) -> "TimeDeformation":
        return cls(((),) * p, ((),) * p, (0,) * p)

    @property
    def p(self) -> int:
        return len(self.n)

    def component(self, alpha: int) -> Tuple[Tuple[float, ...], Tuple[float, ...], int]:
        """(t, tbar, n) of component alpha (1-based)."""
        return self.t[alpha - 1], self.tbar[alpha - 1], self.n[alpha - 1]

    def is_trivial(self, alpha: int) -> bool:
        t, tbar, n = self.component(alpha)
        return n == 0 and not any(t) and not any(tbar)

    def with_time(self, alpha: int, k: int, value: float, bar: bool = False) -> "TimeDeformation":
        """Copy with t^{(alpha)}_k (or t̄) replaced."""
        rows = [list(s) for s in (self.tbar if bar else self.t)]
        row = rows[alpha - 1]
        row.extend([0.0] * (k - len(row)))
        row[k - 1] = value
        rows = tuple(tuple(r) for r in rows)
        return TimeDeformation(self.t, rows, self.n) if bar else TimeDeformation(rows, self.tbar, self.n)

    def a_factor(self, alpha: int) -> float:
        """exp(sum_k k t_k t̄_k) for one component."""
        t, tbar, _ = self.component(alpha)
        return math.exp(math.fsum((k + 1) * a * b for k, (a, b) in enumerate(zip(t, tbar))))

    def to_dict(self) -> dict:
        return {"t": [list(s) for s in self.t], "tbar": [list(s) for s in self.tbar], "n": list(self.n)}


# ---------------------------------------------------------------------------
# Bilinear group elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BilinearSpec:
    """g = exp(sum h_ij f_i f̄_j) acting on one component."""
    component: int
    terms: Tuple[Tuple[int, int, Scalar], ...] = ()
    mode: Mode = field(default=Mode.EXACT, compare=False)

    def __post_init__(self):
        if self.component < 1:
            raise EnsembleError(f"components are numbered from 1, got {self.component}")
        terms = tuple(tuple(term) for term in self.terms)
        mode = common_mode(h for _, _, h in terms)
        object.__setattr__(self, "terms", tuple((int(i), int(j), to_scalar(h, mode)) for i, j, h in terms))
        object.__setattr__(self, "mode", mode)

    def levels(self) -> set:
        return {i for i, _, _ in self.terms} | {j for _, j, _ in self.terms}

    def is_strictly_triangular(self) -> bool:
        return all(i > j for i, j, h in self.terms if h) or all(i < j for i, j, h in self.terms if h)

    def to_float(self) -> "BilinearSpec":
        return BilinearSpec(self.component, tuple((i, j, float(h)) for i, j, h in self.terms))

    def to_dict(self) -> dict:
        return {"component": self.component, "terms": [list(t) for t in self.terms]}


# ---------------------------------------------------------------------------
# Potentials and deformation of endpoint measures
# ---------------------------------------------------------------------------

def eval_V(x: Scalar, t: Sequence[Scalar]) -> Scalar:
    """V(x, t) = sum over m >= 1 of x**m t_m; t[0] is t_1."""
    mode = common_mode([x, *t])
    x = to_scalar(x, mode)
    total = zero(mode)
    power = one(mode)
    for tm in t:
        power = power * x
        if tm:
            total += to_scalar(tm, mode) * power
    return total


def eval_V_inverse(x: Scalar, t: Sequence[Scalar]) -> Scalar:
    """V(1/x, t); x = 0 is an error only when some time is nonzero."""
    mode = common_mode([x, *t])
    if not any(t):
        return zero(mode)
    if x == 0:
        raise ZeroSupportError("V(1/x, t) needs x != 0 when t is nonzero")
    return eval_V(one(mode) / to_scalar(x, mode), t)


def deform_measure(
    m: DiscreteMeasure,
    t: Sequence[float],
    n: int,
    tbar: Sequence[float],
    slot: Slot,
) -> DiscreteMeasure:
    """
    Multiply each weight by u**n * exp(V(u, t) + V(1/u, tbar)), u the slot coordinate.

    Float mode only. All-zero parameters return the measure unchanged.
    """
    if m.mode is not Mode.FLOAT:
        raise ModeMismatchError("deform_measure works in float mode; convert the measure with to_float()")
    if n == 0 and not any(t) and not any(tbar):
        return m

    slot = Slot(slot)
    atoms = []
    for atom in m.atoms:
        u = atom.x if slot is Slot.X else atom.y
        if u == 0 and (n < 0 or any(tbar)):
            raise ZeroSupportError(f"measure {m.label} has an atom at {slot.value}=0 under an inverse-power deformation")
        try:
            factor = u ** n * math.exp(eval_V(u, t) + eval_V_inverse(u, tbar))
        except OverflowError as exc:
            raise FloatOverflowError(f"deformation factor overflowed at {slot.value}={u!r}") from exc
        atoms.append(Atom(atom.x, atom.y, atom.w * factor))
    return DiscreteMeasure(tuple(atoms), m.label)


# ---------------------------------------------------------------------------
# Presets and generated families
# ---------------------------------------------------------------------------

def _polyval(coefficients: Sequence[float], u: float) -> float:
    return float(P.polyval(u, list(coefficients))) if len(coefficients) else 0.0


def hermitian_chain_preset(
    potentials: Sequence[Sequence[float]],
    couplings: Sequence[float],
    grids: Sequence[Sequence[float]],
    N: int = 1,
) -> ChainSpec:
    """
    Discretized Hermitian matrix chain.

    potentials[i] holds the coefficients of V_{i+1} (index = power), couplings[i]
    is c_{i+1} and grids[i] is the support of the eigenvalues of matrix i+1. The
    measure mu_a lives on grids[2a-2] x grids[2a-1] with weight
    exp(c_{2a-1} x y) times V_1(x) at the first measure and V_{2p-2}(y) at the
    last; the kernel rho_a(y, x) = exp(c_{2a-2} y x + V_{2a-2}(y) + V_{2a-1}(x)).
    """
    if len(potentials) < 2 or len(potentials) % 2:
        raise EnsembleError(f"need an even number (>= 2) of potentials, got {len(potentials)}")
    p = len(potentials) // 2 + 1
    if len(couplings) != 2 * p - 3:
        raise EnsembleError(f"p={p} needs {2 * p - 3} couplings, got {len(couplings)}")
    if len(grids) != 2 * p - 2:
        raise EnsembleError(f"p={p} needs {2 * p - 2} grids, got {len(grids)}")
    for i, grid in enumerate(grids, start=1):
        if not grid:
            raise EnsembleError(f"grid {i} is empty")

    V = [None, *potentials]
    c = [None, *(float(v) for v in couplings)]
    grid = [None, *([float(u) for u in g] for g in grids)]

    measures = []
    for alpha in range(1, p):
        atoms = []
        for x in grid[2 * alpha - 1]:
            for y in grid[2 * alpha]:
                exponent = c[2 * alpha - 1] * x * y
                if alpha == 1:
                    exponent += _polyval(V[1], x)
                if alpha == p - 1:
                    exponent += _polyval(V[2 * p - 2], y)
                atoms.append(Atom(x, y, math.exp(exponent)))
        measures.append(DiscreteMeasure(tuple(atoms), alpha))

    kernels = []
    for alpha in range(2, p):
        ca, Vy, Vx = c[2 * alpha - 2], V[2 * alpha - 2], V[2 * alpha - 1]
        kernels.append(TableKernel.from_function(
            grid[2 * alpha - 2],
            grid[2 * alpha - 1],
            lambda y, x, ca=ca, Vy=Vy, Vx=Vx: math.exp(ca * y * x + _polyval(Vy, y) + _polyval(Vx, x)),
        ))

    logger.debug("hermitian preset p=%d with %s atoms", p, [len(m.atoms) for m in measures])
    return ChainSpec(p, N, tuple(measures), tuple(kernels))


def _random_rational(rng: random.Random, nonzero: bool = False) -> Fraction:
    while True:
        value = Fraction(rng.randint(-5, 5), rng.randint(1, 4))
        if value or not nonzero:
            return value


def _random_measure(rng: random.Random, label: int, max_atoms: int) -> DiscreteMeasure:
    count = rng.randint(1, max_atoms)
    return DiscreteMeasure(
        tuple(Atom(_random_rational(rng), _random_rational(rng), _random_rational(rng, nonzero=True)) for _ in range(count)),
        label,
    )


def _random_polynomial_kernel(rng: random.Random, degree: int) -> PolynomialKernel:
    return PolynomialKernel({
        (m, n): _random_rational(rng)
        for m in range(degree + 1)
        for n in range(degree + 1 - m)
    })


def random_chain(
    rng: random.Random,
    p: int,
    N: int,
    max_atoms: int = 4,
    kernel_degree: int = 2,
) -> ChainSpec:
    """Exact chain with random rational atoms and polynomial kernels."""
    measures = tuple(_random_measure(rng, alpha, max_atoms) for alpha in range(1, p))
    kernels = tuple(_random_polynomial_kernel(rng, kernel_degree) for _ in range(max(p - 2, 0)))
    return ChainSpec(p, N, measures, kernels)


def random_loop_chain(
    rng: random.Random,
    p: int,
    N: int,
    max_atoms: int = 3,
    kernel_degree: int = 2,
) -> LoopChainSpec:
    measures = tuple(_random_measure(rng, alpha, max_atoms) for alpha in range(1, p + 1))
    kernels = tuple(_random_polynomial_kernel(rng, kernel_degree) for _ in range(p))
    return LoopChainSpec(p, N, measures, kernels)
