"""
Non-fermionic evaluation routes for the chain partition function Z_N.

- z_bruteforce: the N-fold integrals over every measure, summed literally
- z_bruteforce_desym: the same sum with interior determinants replaced by
  diagonal products
- z_det: (N!)^{p-1} det G with G the chained moment matrix
- z_loop_bruteforce: the closed chain, a trace over tuple transfer matrices

Integration over a discrete measure is a sum over ordered tuples of atom
indices, repetitions included. A tuple that repeats an atom contributes zero to
every alternating integrand, so the transfer method enumerates injective tuples
only; the enumerate method walks the full product space.

Usage:
    from taumodel.chain_eval import z_bruteforce, z_det

    assert z_bruteforce(chain) == z_det(chain)
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import permutations, product
from typing import List, Optional, Sequence, Tuple

import numpy as np

from taumodel.config import WORKERS
from taumodel.ensemble import ChainSpec, CouplingKernel, DiscreteMeasure, LoopChainSpec, TableKernel, kernel_eval
from taumodel.numerics import (
    Mode,
    Scalar,
    as_matrix,
    check_finite,
    det,
    factorial,
    one,
    scalar_sum,
    vandermonde,
    zero,
)

logger = logging.getLogger(__name__)

AtomTuple = Tuple[int, ...]


@dataclass
class MomentMatrix:
    """The N×N chained moment matrix G."""
    matrix: np.ndarray
    mode: Mode

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    def rows(self) -> List[List[Scalar]]:
        return [list(row) for row in self.matrix.tolist()]

    def det(self) -> Scalar:
        return det(self.matrix)

    def to_dict(self) -> dict:
        return {"N": self.N, "mode": self.mode.value, "rows": self.rows()}


# ---------------------------------------------------------------------------
# Tuple helpers
# ---------------------------------------------------------------------------

def _tuples(measure: DiscreteMeasure, N: int, injective: bool = True) -> List[AtomTuple]:
    indices = range(len(measure.atoms))
    return list(permutations(indices, N)) if injective else list(product(indices, repeat=N))


def _weight(measure: DiscreteMeasure, s: AtomTuple, mode: Mode) -> Scalar:
    value = one(mode)
    for i in s:
        value = value * measure.atoms[i].w
    return value


def _atom_kernel(kernel: CouplingKernel, left: DiscreteMeasure, right: DiscreteMeasure) -> List[List[Scalar]]:
    """kernel(y of left atom a, x of right atom b) for every pair of atoms."""
    if isinstance(kernel, TableKernel):
        rows = [kernel.row(a.y) for a in left.atoms]
        cols = [kernel.column(b.x) for b in right.atoms]
        return [[kernel.at(i, j) for j in cols] for i in rows]
    return [[kernel_eval(kernel, a.y, b.x) for b in right.atoms] for a in left.atoms]


def _link(kmat: List[List[Scalar]], s_left: AtomTuple, s_right: AtomTuple, mode: Mode, diagonal: bool) -> Scalar:
    if diagonal:
        value = one(mode)
        for a, b in zip(s_left, s_right):
            value = value * kmat[a][b]
        return value
    return det(as_matrix([[kmat[a][b] for b in s_right] for a in s_left], mode))


def _endpoint_x(measure: DiscreteMeasure, s: AtomTuple, N: int, mode: Mode) -> Scalar:
    return vandermonde([measure.atoms[i].x for i in s], N, mode)


def _endpoint_y(measure: DiscreteMeasure, s: AtomTuple, N: int, mode: Mode) -> Scalar:
    return vandermonde([measure.atoms[i].y for i in s], N, mode)


def _transfer(c: ChainSpec, diagonal: bool) -> Scalar:
    """Blockwise sum: a vector over the current measure's tuples, pushed one kernel at a time."""
    N, mode = c.N, c.mode
    last = len(c.measures) - 1
    # The endpoint Vandermondes vanish on repeated atoms; interior diagonal products do not.
    blocks = [
        _tuples(m, N, injective=not diagonal or a in (0, last))
        for a, m in enumerate(c.measures)
    ]
    logger.debug("transfer over tuple blocks of sizes %s", [len(b) for b in blocks])

    first = c.measures[0]
    vec = [_endpoint_x(first, s, N, mode) * _weight(first, s, mode) for s in blocks[0]]

    for a in range(1, len(c.measures)):
        kmat = _atom_kernel(c.kernels[a - 1], c.measures[a - 1], c.measures[a])
        current = c.measures[a]
        pushed = []
        for s in blocks[a]:
            terms = [value * _link(kmat, s_prev, s, mode, diagonal) for value, s_prev in zip(vec, blocks[a - 1]) if value]
            pushed.append(scalar_sum(terms, mode) * _weight(current, s, mode))
        vec = pushed

    end = c.measures[-1]
    return scalar_sum((value * _endpoint_y(end, s, N, mode) for value, s in zip(vec, blocks[-1]) if value), mode)


def _integrand(c: ChainSpec, kmats, tuples: Sequence[AtomTuple]) -> Scalar:
    N, mode = c.N, c.mode
    value = _endpoint_x(c.measures[0], tuples[0], N, mode)
    for a, (measure, s) in enumerate(zip(c.measures, tuples)):
        if a:
            value = value * _link(kmats[a - 1], tuples[a - 1], s, mode, diagonal=False)
        value = value * _weight(measure, s, mode)
        if value == 0:
            return value
    return value * _endpoint_y(c.measures[-1], tuples[-1], N, mode)


def _enumerate(c: ChainSpec, workers: int) -> Scalar:
    """Literal product-space sum, partitioned by the first measure's tuple."""
    mode = c.mode
    blocks = [_tuples(m, c.N, injective=False) for m in c.measures]
    kmats = [_atom_kernel(k, c.measures[a], c.measures[a + 1]) for a, k in enumerate(c.kernels)]

    def partial(s1: AtomTuple) -> Scalar:
        return scalar_sum((_integrand(c, kmats, (s1, *rest)) for rest in product(*blocks[1:])), mode)

    logger.debug("enumerating %d partitions on %d workers", len(blocks[0]), workers)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        parts = list(executor.map(partial, blocks[0]))
    return scalar_sum(parts, mode)


# ---------------------------------------------------------------------------
# Routes
# ---------------------------------------------------------------------------

def z_bruteforce(c: ChainSpec, method: str = "transfer", workers: Optional[int] = None) -> Scalar:
    """Z_N as the literal sum over assignment tuples."""
    if c.N == 0:
        return one(c.mode)
    if method == "transfer":
        value = _transfer(c, diagonal=False)
    elif method == "enumerate":
        value = _enumerate(c, WORKERS if workers is None else workers)
    else:
        raise ValueError(f"unknown brute-force method {method!r} (expected 'transfer' or 'enumerate')")
    return check_finite(value, "z_bruteforce")


def z_bruteforce_desym(c: ChainSpec) -> Scalar:
    """Z_N with each interior determinant replaced by N! times its diagonal product."""
    if c.N == 0:
        return one(c.mode)
    value = factorial(c.N) ** (c.p - 2) * _transfer(c, diagonal=True)
    return check_finite(value, "z_bruteforce_desym")


def chained_moment_matrix(c: ChainSpec) -> MomentMatrix:
    """
    G = X · diag(w_1) · K_2 · diag(w_2) ··· K_{p-1} · diag(w_{p-1}) · Y

    X[k, s] = x_s^{N-1-k} over the atoms of mu_1, Y[s, l] = y_s^{N-1-l} over the
    atoms of mu_{p-1}, K_a the kernel evaluated between adjacent atoms.
    """
    if c.N < 1:
        raise ValueError(f"the moment matrix needs N >= 1, got {c.N}")
    N, mode = c.N, c.mode
    first, end = c.measures[0], c.measures[-1]

    G = as_matrix([[a.x ** (N - 1 - k) for a in first.atoms] for k in range(N)], mode)
    G = G * as_matrix([first.weights], mode)
    for a in range(1, len(c.measures)):
        K = as_matrix(_atom_kernel(c.kernels[a - 1], c.measures[a - 1], c.measures[a]), mode)
        G = (G @ K) * as_matrix([c.measures[a].weights], mode)
    G = G @ as_matrix([[a.y ** (N - 1 - l) for l in range(N)] for a in end.atoms], mode)
    return MomentMatrix(G, mode)


def z_det(c: ChainSpec) -> Scalar:
    """Z_N = (N!)^{p-1} det G."""
    if c.N == 0:
        return one(c.mode)
    value = factorial(c.N) ** (c.p - 1) * chained_moment_matrix(c).det()
    return check_finite(value, "z_det")


def z_loop_bruteforce(c: LoopChainSpec) -> Scalar:
    """Closed chain: trace of the product of tuple-to-tuple transfer matrices."""
    mode = c.mode
    if c.N == 0:
        return one(mode)
    blocks = [_tuples(m, c.N) for m in c.measures]
    if any(not b for b in blocks):
        return zero(mode)

    transfer = None
    for a, measure in enumerate(c.measures):
        previous = c.measures[a - 1]
        kmat = _atom_kernel(c.kernels[a], previous, measure)
        T = as_matrix(
            [[_link(kmat, s_prev, s, mode, diagonal=False) * _weight(measure, s, mode) for s in blocks[a]] for s_prev in blocks[a - 1]],
            mode,
        )
        transfer = T if transfer is None else transfer @ T
    value = scalar_sum(transfer.diagonal().tolist(), mode)
    return check_finite(value, "z_loop_bruteforce")
