"""
taumodel command-line front end.

Commands:
  compute  Z_N of an open chain through the selected routes
  verify   route-equality, Wick, vacuum-rule and window-doubling suites
  deform   tau_N of a time-deformed chain, with an optional Miwa check
  toda     finite-difference check of the Toda equation
  loop     Z_N of a closed chain

Every command writes a JSON report {"command", "result", "timings"}.

Usage:
    python -m taumodel compute --config fixtures/two_atom_p2_n2.json --route det
    python -m taumodel verify --seed 3 --out reports/verify.json
"""

from __future__ import annotations

import argparse
import logging
import random
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from taumodel.config import LOG_LEVEL, REPORT_DIR, ROUTES, validate_config
from taumodel.chain_eval import chained_moment_matrix, z_bruteforce, z_bruteforce_desym, z_det, z_loop_bruteforce
from taumodel.ensemble import BilinearSpec, ChainSpec, random_chain
from taumodel.fock import (
    FlatMode,
    KernelMismatchError,
    ModeWindow,
    WindowError,
    apply_f,
    apply_fbar,
    charged_vacuum_ket,
    fock_evaluation,
    random_fock_chain,
    random_triangular_g,
    wick_factorization_check,
)
from taumodel.numerics import Mode, as_matrix, det, factorial, pairing_table_from_cross, values_agree, wick_vev
from taumodel.reports import Report, save_report
from taumodel.run_config import (
    ConfigError,
    RunConfig,
    build_chain,
    build_deformation,
    build_gspecs,
    build_loop_chain,
    build_window,
    load_run_config,
    parse_run_config,
)
from taumodel.tau_flows import (
    DegenerateTauError,
    deform_chain,
    kernel_miwa_check,
    normalized_tau,
    tau_eval,
    tau_eval_fock,
    toda_check,
)

logger = logging.getLogger(__name__)

# Window for the generated Fock checks; band 3 covers N <= 2.
VERIFY_WINDOW_M = 4
VERIFY_WINDOW_BAND = 3

# Anchors name the result each verify row checks
ANCHOR_DETERMINANT = "chain partition function as (N!)^{p-1} det G"
ANCHOR_DESYM = "desymmetrized chain integral"
ANCHOR_FOCK = "partition function as a charged-vacuum expectation value"
ANCHOR_FLOAT = "exact and float moment-matrix determinants"
ANCHOR_WICK = "Wick theorem for a pairing table"
ANCHOR_WICK_G = "Wick factorization under a group element"
ANCHOR_VACUUM = "charged-vacuum annihilation rules"
ANCHOR_WINDOW = "window truncation stability"


def _banner(title: str) -> None:
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def _step(number: int, title: str) -> None:
    print(f"\n STEP {number}: {title}")
    print("-" * 40)


def _failure(exc: Exception) -> dict:
    entry = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, KernelMismatchError):
        entry["index"] = list(exc.index)
        entry["component"] = exc.component
    return entry


def _chain_gspecs(cfg: RunConfig, p: int) -> Optional[List[BilinearSpec]]:
    """The configured group elements, or identities when none are given; None if they do not fit p."""
    gspecs = build_gspecs(cfg)
    if not gspecs:
        return [BilinearSpec(alpha) for alpha in range(2, p)]
    return gspecs if len(gspecs) == p - 2 else None


# ---------------------------------------------------------------------------
# compute
# ---------------------------------------------------------------------------

def _route_runner(cfg: RunConfig, chain: ChainSpec, route: str) -> Callable[[], object]:
    if route == "bruteforce":
        return lambda: z_bruteforce(chain, workers=cfg.workers)
    if route == "desym":
        return lambda: z_bruteforce_desym(chain)
    if route == "det":
        return lambda: z_det(chain)

    def fock():
        gspecs = _chain_gspecs(cfg, chain.p)
        if gspecs is None:
            raise ConfigError(f"the fock route needs {chain.p - 2} gspecs, one per interior component")
        window = build_window(cfg, chain.p)
        return fock_evaluation(chain, gspecs, window, order=cfg.taylor_order, tol=cfg.tolerance).value

    return fock


def cmd_compute(cfg: RunConfig, report: Report) -> int:
    _banner("CHAIN PARTITION FUNCTION")
    chain = build_chain(cfg)
    print(f"  p={chain.p}  N={chain.N}  mode={chain.mode.value}  routes={', '.join(cfg.routes)}")

    routes: Dict[str, dict] = {}
    values = []
    for number, route in enumerate(cfg.routes, start=1):
        _step(number, f"route {route}")
        try:
            with report.timed(route):
                value = _route_runner(cfg, chain, route)()
        except Exception as e:
            logger.warning("route %s failed: %s", route, e)
            print(f"  ✗ {type(e).__name__}: {e}")
            routes[route] = _failure(e)
            continue
        print(f"  ✓ Z_{chain.N} = {value}")
        routes[route] = {"value": value}
        values.append(value)

    agree = all(values_agree(values[0], v, cfg.tolerance) for v in values[1:])
    report.result = {"p": chain.p, "N": chain.N, "mode": chain.mode.value, "routes": routes, "agree": agree}
    if chain.N >= 1:
        report.result["G"] = chained_moment_matrix(chain).rows()

    print("\n" + ("✓ routes agree" if agree else "✗ routes disagree"))
    return 0 if agree else 1


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

@dataclass
class Check:
    """One identity evaluated on one case."""
    suite: str
    identity: str
    anchor: str
    case: dict
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "identity": self.identity,
            "anchor": self.anchor,
            "case": self.case,
            "passed": self.passed,
            "detail": self.detail,
        }


def _float_close(exact, approx: float, chain: ChainSpec, tol: float) -> bool:
    """Float determinants are compared against the Hadamard bound of G, not |det G|."""
    if chain.N == 0:
        return values_agree(exact, approx, tol)
    G = np.array(chained_moment_matrix(chain.to_float()).matrix, dtype=float)
    bound = factorial(chain.N) ** (chain.p - 1) * float(np.prod(np.linalg.norm(G, axis=1)))
    return abs(float(exact) - approx) <= tol * max(1.0, bound)


def _route_equality_suite(rng: random.Random, cfg: RunConfig) -> List[Check]:
    checks = []
    for p in (2, 3, 4):
        for N in range(4):
            for family in range(cfg.verify.families):
                chain = random_chain(rng, p, N, max_atoms=cfg.verify.max_atoms)
                case = {"p": p, "N": N, "family": family}
                brute, desym, exact = z_bruteforce(chain, workers=cfg.workers), z_bruteforce_desym(chain), z_det(chain)
                checks.append(Check(
                    "route-equality", "z_bruteforce = z_bruteforce_desym = (N!)^{p-1} det G",
                    f"{ANCHOR_DETERMINANT}; {ANCHOR_DESYM}", case,
                    brute == desym == exact, {"bruteforce": brute, "desym": desym, "det": exact},
                ))
                approx = z_det(chain.to_float())
                checks.append(Check(
                    "route-equality", "exact and float z_det agree", ANCHOR_FLOAT, case,
                    _float_close(exact, approx, chain, cfg.tolerance), {"exact": exact, "float": approx},
                ))

    for p in (2, 3):
        window = ModeWindow(p, VERIFY_WINDOW_M, VERIFY_WINDOW_BAND)
        for N in (1, 2):
            chain, gspecs = random_fock_chain(rng, p, N, window, max_atoms=2)
            fock = fock_evaluation(chain, gspecs, window, order=cfg.taylor_order).value
            exact = z_det(chain)
            checks.append(Check(
                "route-equality", "z_fock = z_det for kernels induced by g", ANCHOR_FOCK, {"p": p, "N": N},
                fock == exact, {"fock": fock, "det": exact, "gspecs": [g.to_dict() for g in gspecs]},
            ))
    return checks


def _random_rational(rng: random.Random) -> Fraction:
    return Fraction(rng.randint(-5, 5), rng.randint(1, 4))


def _wick_suite(rng: random.Random, cfg: RunConfig) -> List[Check]:
    checks = []
    for n in (1, 2, 3):
        cross = [[_random_rational(rng) for _ in range(n)] for _ in range(n)]
        lhs, rhs = wick_vev(pairing_table_from_cross(cross)), det(as_matrix(cross, Mode.EXACT))
        checks.append(Check("wick", "signed matching sum = det of the cross table", ANCHOR_WICK, {"N": n}, lhs == rhs, {"wick": lhs, "det": rhs}))

    window = ModeWindow(1, VERIFY_WINDOW_M, VERIFY_WINDOW_BAND)
    for n in (1, 2):
        g = random_triangular_g(rng, 1, window)
        xs = rng.sample([Fraction(k, 3) for k in range(1, 10)], n)
        ys = rng.sample([Fraction(k, 2) for k in range(5, 12)], n)
        wick = wick_factorization_check(g, ys, xs, window, tol=cfg.tolerance, order=cfg.taylor_order)
        checks.append(Check(
            "wick", "<0|f̄(y)..g..f(x)|0> = <g>^{1-N} det rho(y_i, x_j)", ANCHOR_WICK_G,
            {"N": n, "g": g.to_dict()},
            wick.skipped or bool(wick.holds), wick.to_dict(),
        ))
    return checks


def _vacuum_rule_suite() -> List[Check]:
    window = ModeWindow(2, 3)
    checks = []
    for n in range(-2, 3):
        ket = charged_vacuum_ket((n, 0), window)
        broken = []
        for m in window.levels():
            created = apply_f(ket, FlatMode(1, m))
            removed = apply_fbar(ket, FlatMode(1, m))
            if created.is_zero() != (m < n):
                broken.append({"operator": "f", "level": m})
            if removed.is_zero() != (m >= n):
                broken.append({"operator": "fbar", "level": m})
        checks.append(Check(
            "vacuum-rules", "f_m kills |n> for m < n, f̄_m kills |n> for m >= n", ANCHOR_VACUUM, {"charge": n},
            not broken, {"broken": broken},
        ))
    return checks


def _window_doubling_suite(rng: random.Random, cfg: RunConfig) -> List[Check]:
    checks = []
    for p in (2, 3):
        window = ModeWindow(p, VERIFY_WINDOW_M, VERIFY_WINDOW_BAND)
        chain, gspecs = random_fock_chain(rng, p, 1, window, max_atoms=2)
        try:
            value = fock_evaluation(chain, gspecs, window, check_window=True, order=cfg.taylor_order).value
            checks.append(Check("window-doubling", "z_fock is unchanged when M doubles", ANCHOR_WINDOW, {"p": p, "M": window.M}, True, {"value": value}))
        except WindowError as e:
            checks.append(Check("window-doubling", "z_fock is unchanged when M doubles", ANCHOR_WINDOW, {"p": p, "M": window.M}, False, _failure(e)))
    return checks


def _config_chain_suite(cfg: RunConfig) -> List[Check]:
    chain = build_chain(cfg)
    case = {"p": chain.p, "N": chain.N, "source": "config"}
    checks = []
    brute, exact = z_bruteforce(chain, workers=cfg.workers), z_det(chain)
    checks.append(Check(
        "route-equality", "z_bruteforce = (N!)^{p-1} det G", ANCHOR_DETERMINANT, case,
        values_agree(brute, exact, cfg.tolerance), {"bruteforce": brute, "det": exact},
    ))
    gspecs = _chain_gspecs(cfg, chain.p)
    if gspecs is not None:
        try:
            fock = fock_evaluation(chain, gspecs, build_window(cfg, chain.p), order=cfg.taylor_order, tol=cfg.tolerance).value
            checks.append(Check(
                "route-equality", "z_fock = z_det", ANCHOR_FOCK, case,
                values_agree(fock, exact, cfg.tolerance), {"fock": fock, "det": exact},
            ))
        except Exception as e:
            checks.append(Check("route-equality", "z_fock = z_det", ANCHOR_FOCK, case, False, _failure(e)))
    return checks


def cmd_verify(cfg: RunConfig, report: Report) -> int:
    _banner("VERIFICATION SUITES")
    rng = random.Random(cfg.seed)
    print(f"  seed={cfg.seed}  families={cfg.verify.families}")

    suites = [
        ("route-equality", lambda: _route_equality_suite(rng, cfg)),
        ("wick", lambda: _wick_suite(rng, cfg)),
        ("vacuum-rules", _vacuum_rule_suite),
        ("window-doubling", lambda: _window_doubling_suite(rng, cfg)),
    ]
    if cfg.chain is not None:
        suites.append(("config-chain", lambda: _config_chain_suite(cfg)))

    checks: List[Check] = []
    for number, (name, run) in enumerate(suites, start=1):
        _step(number, name)
        with report.timed(name):
            found = run()
        failed = [c for c in found if not c.passed]
        print(f"  {'✓' if not failed else '✗'} {len(found) - len(failed)}/{len(found)} passed")
        for c in failed:
            print(f"    ✗ {c.identity} {c.case} {c.detail.get('index', '')}")
        checks.extend(found)

    failures = sum(not c.passed for c in checks)
    report.result = {"seed": cfg.seed, "checks": checks, "failures": failures}
    print("\n" + ("✓ all identities hold" if not failures else f"✗ {failures} identities failed"))
    return 0 if not failures else 1


# ---------------------------------------------------------------------------
# deform, toda, loop
# ---------------------------------------------------------------------------

def _deformation_inputs(cfg: RunConfig, chain: ChainSpec):
    gspecs = build_gspecs(cfg) or None
    window = build_window(cfg, chain.p) if gspecs or chain.p == 2 else None
    return gspecs, window


def cmd_deform(cfg: RunConfig, report: Report) -> int:
    _banner("DEFORMED TAU FUNCTION")
    chain = build_chain(cfg)
    deformation = build_deformation(cfg, chain.p)
    gspecs, window = _deformation_inputs(cfg, chain)
    status = 0

    _step(1, "moment-matrix route")
    with report.timed("det"):
        d = deform_chain(chain, deformation, gspecs, window, order=cfg.taylor_order)
        tau = tau_eval(d)
    print(f"  ✓ tau_{chain.N} = {tau!r}")
    report.result = {"deformation": deformation.to_dict(), "tau": tau, "normalized_tau": normalized_tau(d), "tau0": d.tau0}

    if window is not None:
        _step(2, "Fock route")
        try:
            with report.timed("fock"):
                fock = tau_eval_fock(d, gspecs or [], window, order=cfg.taylor_order, tol=cfg.tolerance)
            agree = values_agree(tau, fock, cfg.tolerance)
            report.result["fock"] = {"tau": fock, "agree": agree}
            print(f"  {'✓' if agree else '✗'} tau_{chain.N} = {fock!r}")
            status |= 0 if agree else 1
        except Exception as e:
            report.result["fock"] = _failure(e)
            print(f"  ✗ {type(e).__name__}: {e}")
            status = 1

    if cfg.miwa is not None:
        _step(3, "Miwa shift")
        m = cfg.miwa
        candidates = {g.component: g for g in gspecs or []}
        gspec = candidates.get(m.component, BilinearSpec(m.component))
        t, tbar, _ = deformation.component(m.component) if m.component <= chain.p else ((), (), 0)
        miwa_window = window or build_window(cfg, max(chain.p, m.component))
        with report.timed("miwa"):
            miwa = kernel_miwa_check(gspec, t, tbar, m.charge, m.xs, m.ys, m.depth, miwa_window, order=cfg.taylor_order)
        report.result["miwa"] = {**miwa.to_dict(), "holds": miwa.holds}
        print(f"  {'✓' if miwa.holds else '✗'} fit {miwa.fit}, max deviation {miwa.max_deviation:.2e}")
        status |= 0 if miwa.holds else 1

    return status


def cmd_toda(cfg: RunConfig, report: Report) -> int:
    _banner("TODA CHECK")
    if cfg.mode != "float":
        raise ConfigError("the toda command runs in float mode; set mode to float")
    chain = build_chain(cfg)
    gspecs, window = _deformation_inputs(cfg, chain)
    t0 = build_deformation(cfg, chain.p)
    print(f"  p={chain.p}  N={chain.N}  h={cfg.toda.h}")

    try:
        with report.timed("toda"):
            toda = toda_check(chain, gspecs, t0, cfg.toda.h, window, halve=cfg.toda.halve, order=cfg.taylor_order)
    except DegenerateTauError as e:
        report.result = _failure(e)
        print(f"  ✗ {e}")
        return 1

    report.result = toda.to_dict()
    print(f"  ✓ epsilon = {toda.epsilon}")
    print(f"  ✓ residual = {toda.residual:.3e}")
    if toda.order_ratio is not None:
        print(f"  ✓ residual(h) / residual(h/2) = {toda.order_ratio:.2f}")
    return 0


def cmd_loop(cfg: RunConfig, report: Report) -> int:
    _banner("CLOSED CHAIN")
    chain = build_loop_chain(cfg)
    with report.timed("bruteforce"):
        value = z_loop_bruteforce(chain)
    print(f"  ✓ Z_{chain.N} = {value}")
    report.result = {"p": chain.p, "N": chain.N, "mode": chain.mode.value, "value": value}
    return 0


COMMANDS = {
    "compute": cmd_compute,
    "verify": cmd_verify,
    "deform": cmd_deform,
    "toda": cmd_toda,
    "loop": cmd_loop,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to the JSON run configuration")
    common.add_argument("--mode", choices=["exact", "float"], help="Override the numeric mode")
    common.add_argument("--seed", type=int, help="Seed for generated test families")
    common.add_argument("--out", help="Report path (default: <report dir>/<command>.json)")
    common.add_argument("--route", action="append", choices=[*ROUTES, "all"],
                        help="Route to evaluate; repeat for several (default: all)")
    common.add_argument("--window", type=int, help="Fock window half-width M")
    common.add_argument("--workers", type=int, help="Worker threads for brute-force enumeration")
    common.add_argument("--no-save", action="store_true", help="Don't write the report")

    parser = argparse.ArgumentParser(
        prog="taumodel",
        description="Chain matrix models - partition functions, Fock-space evaluation and tau-function checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__name__.replace("cmd_", ""))
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    routes = None
    if args.route:
        routes = list(ROUTES) if "all" in args.route else args.route
    return {"mode": args.mode, "seed": args.seed, "window": args.window, "workers": args.workers, "routes": routes}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")
    validate_config()

    report = Report(args.command)
    try:
        if args.config:
            print(f"Loading configuration from {args.config}...")
            cfg = load_run_config(args.config, _overrides(args))
        else:
            cfg = parse_run_config("{}", _overrides(args), "<defaults>")
        status = COMMANDS[args.command](cfg, report)
    except ConfigError as e:
        print(f"\n✗ {e}", file=sys.stderr)
        return 2

    if not args.no_save:
        path = Path(args.out) if args.out else REPORT_DIR / f"{args.command}.json"
        save_report(report, path)
        print(f"\n✓ Report saved to {path}")
    return status


if __name__ == "__main__":
    sys.exit(main())
