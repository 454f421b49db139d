import math
from fractions import Fraction

import pytest

from taumodel.ensemble import BilinearSpec, ChainSpec, DiscreteMeasure, TimeDeformation
from taumodel.fock import ModeWindow, WindowError, kernel_from_g
from taumodel.run_config import build_chain, load_run_config
from taumodel.tau_flows import (
    DeformationError,
    DegenerateTauError,
    deform_chain,
    deformed_vandermonde_check,
    kernel_miwa_check,
    miwa_shift,
    normalized_tau,
    tau_eval,
    tau_eval_fock,
    toda_check,
)
from tests.conftest import FIXTURES

DEFORM_WINDOW = ModeWindow(2, 16, 10)


def float_chain(*triples, N=1):
    return ChainSpec(2, N, (DiscreteMeasure.from_triples(triples),))


def deformation(n=(0, 0)):
    return TimeDeformation(((0.1,), (0.05,)), ((0.02,), (0.03,)), n)


class TestMiwaShift:
    def test_float(self):
        shifted = miwa_shift((0.1,), 0.5, 3)
        assert shifted == pytest.approx((0.6, 0.125, 0.125 / 3))

    def test_exact(self):
        assert miwa_shift((), Fraction(1, 2), 2) == (Fraction(1, 2), Fraction(1, 8))

    def test_zero_point(self):
        assert miwa_shift((0.1, 0.2), 0, 4) == (0.1, 0.2)

    def test_depth(self):
        with pytest.raises(ValueError):
            miwa_shift((), 0.5, 0)


class TestDeformChain:
    def test_single_atom_closed_form(self):
        d = deform_chain(float_chain((0.6, 0.8, 1.0)), deformation())
        expected = (
            math.exp(0.1 * 0.02) * math.exp(0.05 * 0.03)
            * math.exp(0.06 - 0.02 / 0.6) * math.exp(-0.04 + 0.03 / 0.8)
        )
        assert tau_eval(d) == pytest.approx(expected, rel=1e-12)

    def test_zero_deformation_is_identity(self, two_atom_chain):
        d = deform_chain(two_atom_chain, TimeDeformation.zero(2))
        assert tau_eval(d) == pytest.approx(4.0)
        assert normalized_tau(d) == pytest.approx(2.0)

    def test_component_count(self, single_atom_chain):
        with pytest.raises(DeformationError):
            deform_chain(single_atom_chain, TimeDeformation.zero(3))

    def test_interior_needs_group_element(self, three_matrix_chain):
        d = TimeDeformation.zero(3).with_time(2, 1, 0.1)
        with pytest.raises(DeformationError):
            deform_chain(three_matrix_chain, d)

    def test_group_elements_need_window(self, three_matrix_chain):
        with pytest.raises(DeformationError):
            deform_chain(three_matrix_chain, TimeDeformation.zero(3), gspecs=[BilinearSpec(2)])

    def test_dump(self):
        d = deform_chain(float_chain((0.6, 0.8, 1.0)), deformation())
        dumped = d.to_dict()
        assert dumped["prefactor"] == pytest.approx(math.exp(0.1 * 0.02 + 0.05 * 0.03))
        assert dumped["tau0"] == []


SPREAD = ((0.6, 0.8, 1.0), (0.9, 1.3, 0.7), (1.4, 0.7, 0.5))

# (N, deformation, window) with one nonzero time each
ENDPOINT_CASES = [
    (1, TimeDeformation.zero(2).with_time(1, 1, 0.1), DEFORM_WINDOW),
    (1, TimeDeformation.zero(2).with_time(1, 2, 0.05), DEFORM_WINDOW),
    (1, TimeDeformation.zero(2).with_time(1, 1, 0.02, bar=True), DEFORM_WINDOW),
    (1, TimeDeformation.zero(2).with_time(2, 1, 0.05), DEFORM_WINDOW),
    (1, TimeDeformation.zero(2).with_time(2, 1, 0.03, bar=True), DEFORM_WINDOW),
    (1, TimeDeformation(((0.1,), ()), ((), ()), (1, 0)), DEFORM_WINDOW),
    (1, TimeDeformation(((), (0.05,)), ((), ()), (0, 1)), DEFORM_WINDOW),
    (2, TimeDeformation.zero(2).with_time(1, 1, 0.05), ModeWindow(2, 12, 8)),
]

# Interior kernels need x/y small for the band sums to settle
INTERIOR_WINDOW = ModeWindow(3, 8, 6)
INTERIOR_CASES = [
    (BilinearSpec(2), TimeDeformation.zero(3).with_time(2, 1, 0.002)),
    (BilinearSpec(2, ((1, 0, 0.5),)), TimeDeformation.zero(3).with_time(2, 1, 0.002)),
    (BilinearSpec(2), TimeDeformation.zero(3).with_time(1, 1, 0.02)),
]


def interior_chain(g):
    left = DiscreteMeasure.from_triples([(0.5, 10.0, 1.0), (0.9, 12.0, 0.7)])
    right = DiscreteMeasure.from_triples([(0.1, 0.8, 1.0), (0.06, 1.1, 0.6)], label=2)
    kernel = kernel_from_g(g, left.ys, right.xs, INTERIOR_WINDOW)
    return ChainSpec(3, 1, (left, right), (kernel,))


class TestFockTau:
    @pytest.mark.parametrize("n", [(0, 0), (1, 0)])
    def test_matches_moment_route(self, n):
        d = deform_chain(float_chain(*SPREAD), deformation(n))
        assert tau_eval_fock(d, [], DEFORM_WINDOW) == pytest.approx(tau_eval(d), rel=1e-8)

    @pytest.mark.parametrize("N,deformed,window", ENDPOINT_CASES)
    def test_single_endpoint_time(self, N, deformed, window):
        d = deform_chain(float_chain(*SPREAD, N=N), deformed)
        assert tau_eval_fock(d, [], window) == pytest.approx(tau_eval(d), rel=1e-10)

    @pytest.mark.parametrize("g,deformed", INTERIOR_CASES)
    def test_three_components(self, g, deformed):
        d = deform_chain(interior_chain(g), deformed, [g], INTERIOR_WINDOW)
        assert tau_eval_fock(d, [g], INTERIOR_WINDOW) == pytest.approx(tau_eval(d), rel=1e-10)

    def test_truncated_fields_are_detected(self):
        d = deform_chain(float_chain((1.4, 0.7, 0.5)), TimeDeformation.zero(2).with_time(1, 1, 0.8))
        narrow = ModeWindow(2, 4, 3)
        with pytest.raises(WindowError):
            tau_eval_fock(d, [], narrow)
        assert tau_eval_fock(d, [], narrow, check_window=False) != pytest.approx(tau_eval(d), rel=1e-6)

    def test_negative_endpoint_charge(self):
        d = deform_chain(float_chain((0.6, 0.8, 1.0)), deformation((-1, 0)))
        with pytest.raises(DeformationError):
            tau_eval_fock(d, [], DEFORM_WINDOW)

    def test_band(self):
        d = deform_chain(float_chain((0.6, 0.8, 1.0)), deformation((2, 0)))
        with pytest.raises(WindowError):
            tau_eval_fock(d, [], ModeWindow(2, 4, 2))


class TestVandermonde:
    @pytest.mark.parametrize("side", ["left", "right"])
    @pytest.mark.parametrize("points", [(0.9,), (0.7, 1.3), (0.6, 1.1, 1.5)])
    def test_deformed_identity(self, side, points):
        check = deformed_vandermonde_check(points, (0.1,), (0.05,), ModeWindow(1, 12, 10), side=side, tol=1e-8)
        assert check.holds, check.to_dict()

    def test_side(self):
        with pytest.raises(ValueError):
            deformed_vandermonde_check((0.7,), (), (), ModeWindow(1, 4), side="middle")


class TestMiwaCheck:
    @pytest.mark.parametrize("n", [0, 1])
    def test_identity_group_element(self, n):
        report = kernel_miwa_check(
            BilinearSpec(1),
            t=(0.004,),
            tbar=(0.003,),
            n=n,
            xs=(0.05, 0.08, 0.1),
            ys=(10.0, 12.5, 16.0),
            depth=6,
            window=ModeWindow(1, 10, 8),
            prune_tol=1e-13,
        )
        assert not report.failures
        assert report.fit["c"] == pytest.approx(1.0, abs=1e-5)
        assert report.fit["a"] == pytest.approx(n, abs=1e-5)
        assert report.fit["b"] == pytest.approx(-n - 1, abs=1e-5)
        assert report.expected == {"c": 1.0, "a": float(n), "b": float(-n - 1)}


TODA_CHAINS = [
    (1, ((0.5, 0.3, 1.0), (-0.4, 0.8, 0.7), (0.9, -0.6, 0.5))),
    (1, ((1.2, 0.4, 0.6), (0.3, 1.1, 1.3), (-0.7, -0.5, 0.9))),
    (1, ((0.2, 0.9, 2.0), (1.5, -0.3, 0.4), (-1.0, 0.6, 1.1))),
    (1, ((0.8, 0.2, 0.9), (-0.3, 0.7, 1.4), (0.6, -0.9, 0.6))),
    (2, ((0.4, 0.5, 1.0), (1.1, 1.3, 0.8), (-0.6, -0.2, 1.2), (1.6, 0.7, 0.5))),
]


def scaled(chain, lam):
    (m,) = chain.measures
    return ChainSpec(chain.p, chain.N, (DiscreteMeasure.from_triples([(a.x, a.y, lam * a.w) for a in m.atoms]),))


class TestToda:
    def test_fixture(self):
        cfg = load_run_config(FIXTURES / "toda_p2_n1.json")
        report = toda_check(build_chain(cfg), h=cfg.toda.h, halve=True)
        assert report.epsilon == -1
        assert report.residual <= 1e-5
        assert 3.0 < report.order_ratio < 5.0
        assert len(report.stencil) == 9

    def test_one_sign_across_chains(self):
        reports = [toda_check(float_chain(*atoms, N=N), h=1e-3) for N, atoms in TODA_CHAINS]
        assert {r.epsilon for r in reports} == {-1}
        for r in reports:
            assert r.residual <= 1e-4
            assert r.half_step["residual"] < r.residual
            assert 3.0 < r.order_ratio < 5.0

    @pytest.mark.parametrize("lam", [1e-2, 1e3])
    def test_weight_scale_does_not_matter(self, lam):
        N, atoms = TODA_CHAINS[1]
        base = toda_check(float_chain(*atoms, N=N), h=1e-3, halve=False)
        report = toda_check(scaled(float_chain(*atoms, N=N), lam), h=1e-3, halve=False)
        assert report.epsilon == base.epsilon
        assert report.ratio == pytest.approx(base.ratio, rel=1e-9)
        assert report.residual == pytest.approx(base.residual, abs=1e-6)
        assert (report.residual <= 1e-4) == (base.residual <= 1e-4)

    def test_vanishing_tau(self):
        base = float_chain((0.5, 0.7, 1.0), (0.5, 0.7, -1.0))
        with pytest.raises(DegenerateTauError):
            toda_check(base)

    def test_needs_N(self):
        with pytest.raises(ValueError):
            toda_check(float_chain((0.5, 0.7, 1.0), N=0))

    def test_step(self):
        with pytest.raises(ValueError):
            toda_check(float_chain((0.5, 0.7, 1.0)), h=0.0)
