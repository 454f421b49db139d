"""
Time flows of the chain: deformed chains, tau functions, Miwa shifts and the
two-dimensional Toda check.

Deforming by times t, t̄ and charges n acts on the chain data:
- mu_1 gets x^{n1} exp(V(x, t1) - V(1/x, t̄1)) on its x coordinate
- mu_{p-1} gets y^{np} exp(-V(y, tp) + V(1/y, t̄p)) on its y coordinate
- each interior kernel is recomputed in Fock space from its group element
  with the component's times and charge
The endpoint components also contribute a_alpha = exp(sum k t_k t̄_k), and each
interior component contributes tau0^{1-N}, tau0 being its one-component
tau function.

Usage:
    from taumodel.tau_flows import deform_chain, tau_eval, toda_check

    d = deform_chain(chain, TimeDeformation(((0.1,), ()), ((), ()), (0, 0)))
    tau_eval(d)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from taumodel.config import EXP_TOL, PRUNE_TOL, TAYLOR_ORDER, TODA_STEP, TOLERANCE
from taumodel.chain_eval import z_det
from taumodel.ensemble import (
    BilinearSpec,
    ChainSpec,
    Slot,
    TimeDeformation,
    deform_measure,
    eval_V,
    eval_V_inverse,
)
from taumodel.fock import (
    ConvergenceError,
    ModeWindow,
    WindowError,
    apply_chain,
    apply_exp_H,
    apply_field_f,
    apply_field_fbar,
    chain_sign,
    charged_vacuum_bra,
    charged_vacuum_ket,
    g_vacuum_value,
    kernel_from_g,
    rho_from_g,
    vacuum,
    vev,
)
from taumodel.numerics import Mode, Scalar, common_mode, factorial, to_scalar, values_agree, vandermonde

logger = logging.getLogger(__name__)


class DeformationError(ValueError):
    """Raised when a deformation cannot be carried by the given chain data."""


class DegenerateTauError(ArithmeticError):
    """Raised when tau vanishes (or changes sign) on a finite-difference stencil."""


def _negated(seq: Sequence[float]) -> Tuple[float, ...]:
    return tuple(-v for v in seq)


@dataclass
class DeformedChain:
    base: ChainSpec
    deformation: TimeDeformation
    chain: ChainSpec
    prefactor: float
    tau0: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "deformation": self.deformation.to_dict(),
            "prefactor": self.prefactor,
            "tau0": list(self.tau0),
            "chain": self.chain.to_dict(),
        }


def deform_chain(
    base: ChainSpec,
    deformation: TimeDeformation,
    gspecs: Optional[Sequence[BilinearSpec]] = None,
    window: Optional[ModeWindow] = None,
    order: int = TAYLOR_ORDER,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
) -> DeformedChain:
    """
    Float-mode chain whose z_det, times the prefactor, is tau_N(t, n, t̄).

    Interior kernels are rebuilt from `gspecs` in `window`; without gspecs the
    interior components must carry no deformation.
    """
    p, N = base.p, base.N
    if deformation.p != p:
        raise DeformationError(f"deformation has {deformation.p} components, chain has p={p}")
    if gspecs is not None:
        gspecs = [g.to_float() for g in gspecs]
        if len(gspecs) != p - 2:
            raise DeformationError(f"p={p} needs {p - 2} group elements, got {len(gspecs)}")
        if window is None:
            raise DeformationError("interior kernels from group elements need a Fock window")

    chain = base.to_float()
    measures = list(chain.measures)
    t1, tbar1, n1 = deformation.component(1)
    tp, tbarp, np_ = deformation.component(p)
    measures[0] = deform_measure(measures[0], t1, n1, _negated(tbar1), Slot.X)
    measures[-1] = deform_measure(measures[-1], _negated(tp), np_, tbarp, Slot.Y)

    prefactor = deformation.a_factor(1) * deformation.a_factor(p)
    kernels = list(chain.kernels)
    tau0 = []
    kw = {"order": order, "exp_tol": exp_tol, "prune_tol": prune_tol}
    for alpha in range(2, p):
        t, tbar, n = deformation.component(alpha)
        if gspecs is None:
            if not deformation.is_trivial(alpha):
                raise DeformationError(f"component {alpha} is deformed but its kernel has no group element behind it")
            continue
        g = gspecs[alpha - 2]
        kernels[alpha - 2] = kernel_from_g(
            g, measures[alpha - 2].ys, measures[alpha - 1].xs, window, t=t, tbar=tbar, charge=n, **kw,
        )
        value = float(g_vacuum_value(g, window, t=t, tbar=tbar, charge=n, **kw))
        if value == 0 and N > 1:
            raise DeformationError(f"one-component tau of g_{alpha} vanishes; the kernel normalization is undefined")
        tau0.append(value)
        prefactor *= value ** (1 - N)

    deformed = ChainSpec(p, N, tuple(measures), tuple(kernels))
    return DeformedChain(base, deformation, deformed, prefactor, tau0)


def tau_eval(d: DeformedChain) -> float:
    """tau_N(t, n, t̄) through the deformed chain's moment matrix."""
    return d.prefactor * z_det(d.chain)


def normalized_tau(d: DeformedChain) -> float:
    """tau_N / (N!)^{p-1}, the determinant of the deformed moment matrix times the prefactor."""
    return tau_eval(d) / factorial(d.base.N) ** (d.base.p - 1)


def _tau_fock_value(
    base: ChainSpec,
    D: TimeDeformation,
    gspecs: Sequence[BilinearSpec],
    window: ModeWindow,
    kw: dict,
) -> float:
    p, N = base.p, base.N
    charges = D.n
    ket_charges = (charges[0], *charges[1:-1], -charges[-1])
    bra_charges = (N + charges[0], *charges[1:-1], -N - charges[-1])

    ket = charged_vacuum_ket(ket_charges, window, Mode.FLOAT)
    bra = charged_vacuum_bra(bra_charges, window, Mode.FLOAT)
    for alpha in range(1, p + 1):
        t, tbar, _ = D.component(alpha)
        ket = apply_exp_H(ket, alpha, tbar, kw["order"], bar=True, exp_tol=kw["exp_tol"], prune_tol=kw["prune_tol"])
        # <bra| e^{H(t)} is the transpose of e^{H̄(t)} |bra>
        bra = apply_exp_H(bra, alpha, t, kw["order"], bar=True, exp_tol=kw["exp_tol"], prune_tol=kw["prune_tol"])

    ket = apply_chain(base, gspecs, ket, **kw)
    raw = vev(bra, ket)
    return factorial(N) ** (p - 1) * chain_sign(p, N, bra_charges, ket_charges) * raw


def tau_eval_fock(
    d: DeformedChain,
    gspecs: Sequence[BilinearSpec],
    window: ModeWindow,
    order: int = TAYLOR_ORDER,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
    check_window: bool = True,
    tol: float = TOLERANCE,
) -> float:
    """
    <N+n1, n2, ..., -N-np| e^{H(t)} e^{A_1} g_2 ... e^{A_{p-1}} e^{H̄(t̄)} |n1, n2, ..., -np>

    times (N!)^{p-1} and the component-ordering sign, evaluated natively.

    `check_window` repeats the evaluation with both M and the band doubled and
    raises WindowError if the value moves by more than `tol`.
    """
    base, D = d.base.to_float(), d.deformation
    N = base.N
    charges = D.n
    if charges[0] < 0 or charges[-1] < 0:
        raise DeformationError(f"endpoint charges must be nonnegative, got {charges[0]} and {charges[-1]}")
    if N + max(charges[0], charges[-1]) > window.band:
        raise WindowError(f"endpoint fields need a band of at least {N + max(charges[0], charges[-1])}, got {window.band}")
    gspecs = [g.to_float() for g in gspecs]
    kw = {"order": order, "exp_tol": exp_tol, "prune_tol": prune_tol}

    value = _tau_fock_value(base, D, gspecs, window, kw)
    if check_window:
        wider = _tau_fock_value(base, D, gspecs, window.widened(), kw)
        if not values_agree(value, wider, tol):
            raise WindowError(
                f"tau_{N} changes from {value!r} to {wider!r} when M and the band double; enlarge the window"
            )
    return value


# ---------------------------------------------------------------------------
# Miwa shifts
# ---------------------------------------------------------------------------

def miwa_shift(t: Sequence[Scalar], x: Scalar, depth: int) -> Tuple[Scalar, ...]:
    """t + [x]: t_k + x**k / k for k <= depth."""
    if depth < 1:
        raise ValueError(f"Miwa depth must be at least 1, got {depth}")
    if x == 0:
        return tuple(t)
    mode = common_mode([x, *t])
    x = to_scalar(x, mode)
    shifted = [to_scalar(v, mode) for v in t]
    shifted.extend([to_scalar(0, mode)] * (depth - len(shifted)))
    for k in range(1, depth + 1):
        shifted[k - 1] += x ** k / k
    return tuple(shifted)


@dataclass
class MiwaReport:
    charge: int
    depth: int
    points: List[dict]
    failures: List[dict]
    fit: Dict[str, float]
    expected: Dict[str, float]
    max_deviation: float

    @property
    def holds(self) -> bool:
        return not self.failures and self.max_deviation <= 1e-6

    def to_dict(self) -> dict:
        return {
            "charge": self.charge,
            "depth": self.depth,
            "points": self.points,
            "failures": self.failures,
            "fit": self.fit,
            "expected": self.expected,
            "max_deviation": self.max_deviation,
        }


def kernel_miwa_check(
    gspec: BilinearSpec,
    t: Sequence[float],
    tbar: Sequence[float],
    n: int,
    xs: Sequence[float],
    ys: Sequence[float],
    depth: int,
    window: ModeWindow,
    order: int = TAYLOR_ORDER,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
) -> MiwaReport:
    """
    Compare the deformed kernel with the Miwa-shifted tau function.

    Each grid point gives reduced = rho / (tau_{n+1}(t + [1/y], t̄ + [x]) e^{-V(y,t) - V(1/x,t̄)});
    the reduced values are fitted to c x^a y^b by least squares on logarithms.
    Points whose exponentials fail to converge are reported, not dropped silently.
    """
    g = gspec.to_float()
    kw = {"order": order, "exp_tol": exp_tol, "prune_tol": prune_tol}
    t = tuple(float(v) for v in t)
    tbar = tuple(float(v) for v in tbar)
    points, failures = [], []
    for x in xs:
        for y in ys:
            x, y = float(x), float(y)
            try:
                r = rho_from_g(g, y, x, window, t=t, tbar=tbar, charge=n, **kw)
                tau = g_vacuum_value(
                    g, window, t=miwa_shift(t, 1.0 / y, depth), tbar=miwa_shift(tbar, x, depth), charge=n + 1, **kw,
                )
            except (ConvergenceError, WindowError) as exc:
                failures.append({"x": x, "y": y, "error": str(exc)})
                continue
            exponential = math.exp(-eval_V(y, t) - eval_V_inverse(x, tbar))
            points.append({"x": x, "y": y, "rho": r, "tau": tau, "reduced": r / (tau * exponential)})

    if len(points) < 3:
        raise DeformationError(f"only {len(points)} Miwa points converged; need at least 3 to fit")

    design = np.array([[1.0, math.log(abs(pt["x"])), math.log(abs(pt["y"]))] for pt in points])
    target = np.array([math.log(abs(pt["reduced"])) for pt in points])
    (log_c, a, b), *_ = np.linalg.lstsq(design, target, rcond=None)
    sign = 1.0 if points[0]["reduced"] > 0 else -1.0
    c = sign * math.exp(log_c)
    deviation = max(abs(pt["reduced"] / (c * pt["x"] ** a * pt["y"] ** b) - 1.0) for pt in points)
    logger.debug("Miwa fit for charge %d: c=%.12g a=%.12g b=%.12g", n, c, a, b)
    return MiwaReport(
        charge=n,
        depth=depth,
        points=points,
        failures=failures,
        fit={"c": c, "a": float(a), "b": float(b)},
        expected={"c": 1.0, "a": float(n), "b": float(-n - 1)},
        max_deviation=deviation,
    )


# ---------------------------------------------------------------------------
# Deformed Vandermonde identities
# ---------------------------------------------------------------------------

@dataclass
class VandermondeCheck:
    side: str
    lhs: float
    rhs: float
    holds: bool

    def to_dict(self) -> dict:
        return {"side": self.side, "lhs": self.lhs, "rhs": self.rhs, "holds": self.holds}


def deformed_vandermonde_check(
    points: Sequence[float],
    t: Sequence[float],
    tbar: Sequence[float],
    window: ModeWindow,
    side: str = "left",
    tol: float = TOLERANCE,
    order: int = TAYLOR_ORDER,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
) -> VandermondeCheck:
    """
    left:  <N| e^{H(t)} f(x_1)...f(x_N) e^{H̄(t̄)} |0>  = a Δ_N(x) prod exp(V(x,t) - V(1/x,t̄))
    right: <-N| e^{H(t)} f̄(y_1)...f̄(y_N) e^{H̄(t̄)} |0> = a Δ_N(y) prod exp(-V(y,t) + V(1/y,t̄))

    Evaluated on component 1 of `window`, with a = exp(sum k t_k t̄_k).
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    pts = [float(u) for u in points]
    t = tuple(float(v) for v in t)
    tbar = tuple(float(v) for v in tbar)
    N = len(pts)
    kw = {"exp_tol": exp_tol, "prune_tol": prune_tol}

    ket = apply_exp_H(vacuum(window, Mode.FLOAT), 1, tbar, order, bar=True, **kw)
    for u in reversed(pts):
        ket = apply_field_f(ket, 1, u) if side == "left" else apply_field_fbar(ket, 1, u)
    charges = [0] * window.p
    charges[0] = N if side == "left" else -N
    bra = apply_exp_H(charged_vacuum_bra(charges, window, Mode.FLOAT), 1, t, order, bar=True, **kw)
    lhs = vev(bra, ket)

    a = math.exp(math.fsum((k + 1) * u * v for k, (u, v) in enumerate(zip(t, tbar))))
    sign = 1.0 if side == "left" else -1.0
    exponent = math.fsum(sign * (eval_V(u, t) - eval_V_inverse(u, tbar)) for u in pts)
    rhs = a * vandermonde(pts, N, Mode.FLOAT) * math.exp(exponent)
    return VandermondeCheck(side, lhs, rhs, values_agree(lhs, rhs, tol))


# ---------------------------------------------------------------------------
# Toda check
# ---------------------------------------------------------------------------

@dataclass
class TodaReport:
    N: int
    h: float
    mixed_log_derivative: float
    ratio: float
    epsilon: int
    residual: float
    residuals: Dict[str, float]
    stencil: List[dict]
    half_step: Optional[dict] = None

    @property
    def order_ratio(self) -> Optional[float]:
        if not self.half_step or not self.half_step["residual"]:
            return None
        return self.residual / self.half_step["residual"]

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "h": self.h,
            "mixed_log_derivative": self.mixed_log_derivative,
            "ratio": self.ratio,
            "epsilon": self.epsilon,
            "residual": self.residual,
            "residuals": self.residuals,
            "stencil": self.stencil,
            "half_step": self.half_step,
            "order_ratio": self.order_ratio,
        }


def _first_time(deformation: TimeDeformation, alpha: int) -> float:
    t = deformation.component(alpha)[0]
    return t[0] if t else 0.0


def _toda_point(base, N, deformation, gspecs, window, kw) -> float:
    return normalized_tau(deform_chain(base.with_N(N), deformation, gspecs, window, **kw))


def _toda_residuals(base, gspecs, t0, h, window, kw) -> Tuple[float, float, Dict[str, float], List[dict]]:
    p, N = base.p, base.N
    t1, tp = _first_time(t0, 1), _first_time(t0, p)

    def shifted(i: int, j: int) -> TimeDeformation:
        return t0.with_time(1, 1, t1 + i * h).with_time(p, 1, tp + j * h)

    stencil = {(i, j): _toda_point(base, N, shifted(i, j), gspecs, window, kw) for i in (-1, 0, 1) for j in (-1, 0, 1)}
    center = stencil[(0, 0)]
    for (i, j), value in stencil.items():
        if value == 0 or (value > 0) != (center > 0):
            raise DegenerateTauError(f"tau_{N} vanishes or changes sign near the stencil point ({i}, {j}): {value}")

    def log_tau(i, j):
        return math.log(abs(stencil[(i, j)]))

    mixed = (log_tau(1, 1) - log_tau(1, -1) - log_tau(-1, 1) + log_tau(-1, -1)) / (4 * h * h)
    ratio = _toda_point(base, N + 1, t0, gspecs, window, kw) * _toda_point(base, N - 1, t0, gspecs, window, kw) / center ** 2
    scale = abs(ratio) if ratio else 1.0
    residuals = {str(eps): abs(mixed - eps * ratio) / scale for eps in (1, -1)}
    table = [{"i": i, "j": j, "tau": value} for (i, j), value in sorted(stencil.items())]
    return mixed, ratio, residuals, table


def toda_check(
    base: ChainSpec,
    gspecs: Optional[Sequence[BilinearSpec]] = None,
    t0: Optional[TimeDeformation] = None,
    h: float = TODA_STEP,
    window: Optional[ModeWindow] = None,
    halve: bool = True,
    order: int = TAYLOR_ORDER,
    exp_tol: float = EXP_TOL,
    prune_tol: float = PRUNE_TOL,
) -> TodaReport:
    """
    Finite-difference check of d_t d_s log tau_N = eps tau_{N+1} tau_{N-1} / tau_N^2.

    t is the first time of component 1 and s the first time of component p;
    tau is the normalized tau function (the moment-matrix determinant). The
    sign eps with the smaller residual is reported together with both
    residuals; `halve` repeats the stencil at h/2 for an order estimate.
    """
    if base.N < 1:
        raise ValueError("the Toda check needs N >= 1 so that tau_{N-1} exists")
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    t0 = t0 or TimeDeformation.zero(base.p)
    kw = {"order": order, "exp_tol": exp_tol, "prune_tol": prune_tol}

    mixed, ratio, residuals, table = _toda_residuals(base, gspecs, t0, h, window, kw)
    epsilon = min((1, -1), key=lambda eps: residuals[str(eps)])
    half_step = None
    if halve:
        _, _, half_residuals, _ = _toda_residuals(base, gspecs, t0, h / 2, window, kw)
        half_step = {"h": h / 2, "residual": half_residuals[str(epsilon)]}

    logger.info("Toda check N=%d h=%g: eps=%d residual=%.3e", base.N, h, epsilon, residuals[str(epsilon)])
    return TodaReport(
        N=base.N,
        h=h,
        mixed_log_derivative=mixed,
        ratio=ratio,
        epsilon=epsilon,
        residual=residuals[str(epsilon)],
        residuals=residuals,
        stencil=table,
        half_step=half_step,
    )
