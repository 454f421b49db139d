import random
from fractions import Fraction

import pytest

from taumodel.chain_eval import z_bruteforce
from taumodel.ensemble import BilinearSpec, ChainSpec, PolynomialKernel
from taumodel.fock import (
    ConvergenceError,
    FlatMode,
    FockError,
    FockVector,
    KernelMismatchError,
    ModeWindow,
    WindowError,
    apply_A,
    apply_bilinear,
    apply_exp_bilinear,
    apply_exp_H,
    apply_f,
    apply_fbar,
    apply_field_f,
    apply_field_fbar,
    apply_H,
    chain_sign,
    charged_vacuum_bra,
    charged_vacuum_ket,
    fock_evaluation,
    g_vacuum_value,
    kernel_from_g,
    ordering_sign,
    random_fock_chain,
    rho_from_g,
    vacuum,
    vev,
    wick_factorization_check,
    z_fock,
)
from taumodel.numerics import Mode
from tests.conftest import measure

ONE = ModeWindow(1, 4, 3)
TWO = ModeWindow(2, 4, 3)


class TestWindow:
    def test_band_defaults_to_M(self):
        assert ModeWindow(2, 5).band == 5

    @pytest.mark.parametrize("args", [(0, 4), (2, 0), (2, 4, 5), (2, 4, 0)])
    def test_bad_windows(self, args):
        with pytest.raises(WindowError):
            ModeWindow(*args)

    def test_bits_descend_with_flat_index(self):
        w = ModeWindow(2, 3)
        assert w.bit(1, -3) == w.n_bits - 1
        assert w.bit(2, 2) == 0
        assert w.bit(1, 0) > w.bit(2, 0) > w.bit(1, 1)

    def test_level_outside(self):
        with pytest.raises(WindowError):
            ONE.bit(1, 4)
        with pytest.raises(WindowError):
            ONE.bit(2, 0)

    def test_doubled_keeps_band(self):
        assert TWO.doubled() == ModeWindow(2, 8, 3)

    def test_widened_doubles_band(self):
        assert TWO.widened() == ModeWindow(2, 8, 6)


class TestModes:
    def test_vacuum_is_normalized(self):
        v = vacuum(TWO)
        assert vev(v, v) == 1

    def test_annihilators_kill_vacuum(self):
        v = vacuum(ONE)
        assert apply_fbar(v, FlatMode(1, 0)).is_zero()
        assert apply_f(v, FlatMode(1, -1)).is_zero()

    @pytest.mark.parametrize("level", [-2, -1, 0, 2])
    def test_anticommutator_is_identity(self, level):
        m = FlatMode(1, level)
        v = apply_f(vacuum(TWO), FlatMode(2, 1))
        total = apply_fbar(apply_f(v, m), m) + apply_f(apply_fbar(v, m), m)
        assert total == v

    def test_distinct_modes_anticommute(self):
        a, b = FlatMode(1, 0), FlatMode(2, 1)
        v = vacuum(TWO)
        assert apply_f(apply_f(v, a), b) == apply_f(apply_f(v, b), a).scaled(-1)
        c, d = FlatMode(1, -1), FlatMode(2, -2)
        assert apply_fbar(apply_fbar(v, c), d) == apply_fbar(apply_fbar(v, d), c).scaled(-1)

    def test_mixed_windows(self):
        with pytest.raises(WindowError):
            vacuum(ONE) + vacuum(TWO)

    def test_mixed_modes(self):
        with pytest.raises(FockError):
            vev(vacuum(ONE), vacuum(ONE, Mode.FLOAT))

    def test_pruned_float(self):
        v = FockVector(ONE, {1: 1.0, 2: 1e-20}, Mode.FLOAT)
        assert v.pruned(1e-15).support_size == 1


class TestChargedVacua:
    @pytest.mark.parametrize("n", [-2, -1, 0, 1, 2])
    def test_normalized(self, n):
        ket = charged_vacuum_ket([n], ONE)
        assert vev(charged_vacuum_bra([n], ONE), ket) == 1

    def test_different_charges_are_orthogonal(self):
        assert vev(charged_vacuum_bra([1], ONE), charged_vacuum_ket([0], ONE)) == 0

    def test_charge_outside_window(self):
        with pytest.raises(WindowError):
            charged_vacuum_ket([5], ONE)

    def test_charge_count(self):
        with pytest.raises(WindowError):
            charged_vacuum_ket([0], TWO)


class TestFields:
    def test_creation_string_gives_vandermonde(self):
        # the last point acts first
        v = apply_field_f(apply_field_f(vacuum(ONE), 1, 5), 1, 2)
        assert vev(charged_vacuum_bra([2], ONE), v) == 2 - 5

    def test_annihilation_string(self):
        v = apply_field_fbar(apply_field_fbar(vacuum(ONE), 1, 7), 1, 3)
        assert vev(charged_vacuum_bra([-2], ONE), v) == 3 - 7

    def test_A_sign(self):
        v = apply_A(vacuum(TWO), measure((2, 3, 5)), 1)
        assert vev(charged_vacuum_bra([1, -1], TWO), v) == -5
        assert chain_sign(2, 1, (1, -1), (0, 0)) == -1

    def test_A_outside_components(self):
        with pytest.raises(WindowError):
            apply_A(vacuum(TWO), measure((1, 1, 1)), 2)

    def test_A_mode(self):
        with pytest.raises(FockError):
            apply_A(vacuum(TWO, Mode.FLOAT), measure((1, 1, 1)), 1)


class TestBilinears:
    def test_bilinear_moves_particle(self):
        v = apply_f(vacuum(ONE), FlatMode(1, 0))
        out = apply_bilinear(v, BilinearSpec(1, ((2, 0, 3),)))
        assert out == apply_f(vacuum(ONE), FlatMode(1, 2)).scaled(3)

    def test_nilpotent_exponential(self):
        c = Fraction(2, 5)
        out = apply_exp_bilinear(vacuum(ONE), BilinearSpec(1, ((0, -1, c),)))
        hop = apply_f(apply_fbar(vacuum(ONE), FlatMode(1, -1)), FlatMode(1, 0))
        assert out == vacuum(ONE) + hop.scaled(c)

    def test_identity_is_free(self):
        v = vacuum(ONE)
        assert apply_exp_bilinear(v, BilinearSpec(1)) is v

    def test_exact_series_must_terminate(self):
        with pytest.raises(ConvergenceError):
            apply_exp_bilinear(vacuum(ONE), BilinearSpec(1, ((-1, -1, 1),)), order=5)


class TestHamiltonians:
    def test_H_lowers_particle(self):
        v = apply_f(vacuum(ONE), FlatMode(1, 2))
        assert apply_H(v, 1, 2) == apply_f(vacuum(ONE), FlatMode(1, 0))

    def test_H_zero_refused(self):
        with pytest.raises(ValueError):
            apply_H(vacuum(ONE), 1, 0)

    def test_exp_H_on_field(self):
        x, t = 2, Fraction(1, 3)
        v = apply_exp_H(apply_field_f(vacuum(ONE), 1, x), 1, (t,))
        # sum over the band of (x t)^k / k!
        assert vev(charged_vacuum_bra([1], ONE), v) == 1 + Fraction(2, 3) + Fraction(2, 9)

    def test_float_series_needs_enough_terms(self):
        v = apply_f(vacuum(ONE, Mode.FLOAT), FlatMode(1, 3))
        with pytest.raises(ConvergenceError):
            apply_exp_H(v, 1, (0.5,), order=1)

    def test_zero_times(self):
        v = vacuum(ONE)
        assert apply_exp_H(v, 1, (0, 0)) is v


class TestKernelsFromG:
    def test_identity_kernel(self):
        assert rho_from_g(BilinearSpec(1), 2, 1, ONE) == Fraction(7, 8)

    def test_hopping_kernel(self):
        g = BilinearSpec(1, ((1, 0, Fraction(1, 2)),))
        assert rho_from_g(g, 2, 1, ONE) == 1

    def test_window_doubling(self):
        assert rho_from_g(BilinearSpec(1), 2, 1, ONE, check_window=True) == Fraction(7, 8)

    def test_narrow_window_is_refused_by_default(self):
        narrow = ModeWindow(1, 2)
        times = {"t": (0.5,), "tbar": (0.5,)}
        with pytest.raises(WindowError):
            rho_from_g(BilinearSpec(1), 3.0, 0.5, narrow, **times)
        truncated = rho_from_g(BilinearSpec(1), 3.0, 0.5, narrow, check_window=False, **times)
        wider = rho_from_g(BilinearSpec(1), 3.0, 0.5, narrow.doubled(), check_window=False, **times)
        assert truncated != pytest.approx(wider, rel=1e-10)

    def test_kernel_table(self):
        k = kernel_from_g(BilinearSpec(1), [2], [1], ONE)
        assert k(2, 1) == Fraction(7, 8)

    def test_triangular_vacuum_value(self):
        g = BilinearSpec(1, ((1, -1, 3), (2, 0, -1)))
        assert g_vacuum_value(g, ONE) == 1

    def test_wick_factorization(self):
        g = BilinearSpec(1, ((1, 0, Fraction(1, 2)), (2, -1, 1)))
        check = wick_factorization_check(g, [2, 3], [1, 5], ONE)
        assert not check.skipped
        assert check.holds
        assert check.lhs == check.rhs

    def test_wick_needs_matching_points(self):
        with pytest.raises(ValueError):
            wick_factorization_check(BilinearSpec(1), [2], [1, 5], ONE)


class TestSigns:
    def test_ordering_sign(self):
        assert ordering_sign([(2, 1), (1, 1)]) == -1
        assert ordering_sign([(2, 0), (1, 1)]) == 1
        assert ordering_sign([(1, 1), (2, 1)]) == 1

    @pytest.mark.parametrize("p", [2, 3])
    @pytest.mark.parametrize("N", [1, 2, 3])
    def test_chain_sign_from_neutral_vacuum(self, p, N):
        bra = (N,) + (0,) * (p - 2) + (-N,)
        expected = -1 if (N * (N + 1) // 2) % 2 else 1
        assert chain_sign(p, N, bra, (0,) * p) == expected


class TestChainExpectation:
    def test_single_atom(self, single_atom_chain):
        assert z_fock(single_atom_chain, [], TWO) == 5

    def test_two_atoms(self, two_atom_chain):
        assert z_fock(two_atom_chain, [], TWO) == 4

    def test_empty_product(self, two_atom_chain):
        assert z_fock(two_atom_chain.with_N(0), [], TWO) == 1

    def test_checks(self, two_atom_chain):
        result = fock_evaluation(two_atom_chain, [], TWO, check_window=True, check_orders=True)
        assert result.value == 4
        assert result.to_dict()["window"] == {"p": 2, "M": 4, "band": 3}

    @pytest.mark.parametrize("p", [2, 3])
    @pytest.mark.parametrize("N", [1, 2])
    def test_random_chains_match_bruteforce(self, p, N):
        # 8 chains per (p, N): 32 in all
        window = ModeWindow(p, 4, 3)
        rng = random.Random(50 * p + N)
        for _ in range(8):
            c, gspecs = random_fock_chain(rng, p, N, window, max_atoms=3)
            assert z_fock(c, gspecs, window, check_window=True) == z_bruteforce(c)

    def test_kernel_mismatch(self, three_matrix_chain):
        with pytest.raises(KernelMismatchError) as info:
            z_fock(three_matrix_chain, [BilinearSpec(2)], ModeWindow(3, 4, 3))
        assert info.value.index == (0, 0)
        assert info.value.component == 2

    def test_group_element_count(self, three_matrix_chain):
        with pytest.raises(FockError):
            z_fock(three_matrix_chain, [], ModeWindow(3, 4, 3))

    def test_group_element_component(self, three_matrix_chain):
        with pytest.raises(FockError):
            z_fock(three_matrix_chain, [BilinearSpec(1)], ModeWindow(3, 4, 3))

    def test_window_components(self, single_atom_chain):
        with pytest.raises(WindowError):
            z_fock(single_atom_chain, [], ModeWindow(3, 4, 3))

    def test_band_too_narrow(self, two_atom_chain):
        with pytest.raises(WindowError):
            z_fock(two_atom_chain, [], ModeWindow(2, 4, 1))

    def test_g_outside_window(self):
        c = ChainSpec(3, 1, (measure((1, 2, 1)), measure((3, 4, 2), label=2)), (PolynomialKernel({(0, 0): 1}),))
        with pytest.raises(WindowError):
            z_fock(c, [BilinearSpec(2, ((5, 0, 1),))], ModeWindow(3, 4, 3))
