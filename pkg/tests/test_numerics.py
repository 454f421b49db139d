import math
from fractions import Fraction

import numpy as np
import pytest

from taumodel.numerics import (
    FloatOverflowError,
    Mode,
    ModeMismatchError,
    NonSquareMatrixError,
    PairingTable,
    WickLengthError,
    as_matrix,
    check_finite,
    common_mode,
    det,
    mode_of,
    pairing_table_from_cross,
    permutation_sign,
    scalar_sum,
    to_scalar,
    values_agree,
    vandermonde,
    wick_det,
    wick_vev,
)


class TestModes:
    def test_mode_of(self):
        assert mode_of(Fraction(1, 3)) is Mode.EXACT
        assert mode_of(0.5) is Mode.FLOAT
        assert mode_of(7) is None

    def test_booleans_are_refused(self):
        with pytest.raises(TypeError):
            mode_of(True)

    def test_common_mode_ignores_ints(self):
        assert common_mode([1, Fraction(1, 2), 3]) is Mode.EXACT
        assert common_mode([1, 2.5]) is Mode.FLOAT
        assert common_mode([1, 2]) is Mode.EXACT

    def test_mixed_modes_raise(self):
        with pytest.raises(ModeMismatchError):
            common_mode([Fraction(1, 2), 0.5])

    def test_rational_strings_parse_exactly(self):
        assert to_scalar("3/4", Mode.EXACT) == Fraction(3, 4)
        assert to_scalar(" -2 ", Mode.EXACT) == Fraction(-2)
        assert to_scalar("1/2", Mode.FLOAT) == 0.5

    def test_float_refused_in_exact_mode(self):
        with pytest.raises(ModeMismatchError):
            to_scalar(0.5, Mode.EXACT)
        with pytest.raises(ModeMismatchError):
            to_scalar(Fraction(1, 2), Mode.FLOAT)

    def test_bad_string(self):
        with pytest.raises(ValueError):
            to_scalar("one half", Mode.EXACT)


class TestDeterminants:
    def test_empty_matrix(self):
        assert det(np.empty((0, 0), dtype=object)) == 1

    def test_small_exact(self):
        assert det([[1, 2], [3, 4]]) == Fraction(-2)
        assert det([[0, 1], [1, 0]]) == Fraction(-1)
        assert det([[1, 2], [2, 4]]) == 0

    def test_zero_pivot_needs_swap(self):
        m = as_matrix([[0, 2, 1], [1, 0, 0], [0, 1, 3]])
        # expansion along the second row
        assert det(m) == Fraction(-(2 * 3 - 1 * 1))

    def test_float(self):
        assert det(as_matrix([[1.0, 2.0], [3.0, 4.0]])) == pytest.approx(-2.0)

    def test_exact_matches_float(self, rng):
        rows = [[Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(4)] for _ in range(4)]
        exact = det(as_matrix(rows))
        approx = det(as_matrix([[float(v) for v in row] for row in rows]))
        assert float(exact) == pytest.approx(approx, rel=1e-9, abs=1e-9)

    def test_non_square(self):
        with pytest.raises(NonSquareMatrixError):
            det(as_matrix([[1, 2, 3], [4, 5, 6]]))

    def test_ragged_rows(self):
        with pytest.raises(ValueError):
            as_matrix([[1, 2], [3]])


class TestVandermonde:
    def test_two_points(self):
        assert vandermonde([1, 2], 2) == -1

    def test_three_points_is_product_of_differences(self):
        xs = [1, 2, 4]
        expected = (1 - 2) * (1 - 4) * (2 - 4)
        assert vandermonde(xs, 3) == expected == -6

    def test_trivial_orders(self):
        assert vandermonde([], 0) == 1
        assert vandermonde([5], -1) == 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            vandermonde([1, 2], 3)

    def test_float_mode(self):
        assert vandermonde([0.5, 1.5], 2) == pytest.approx(-1.0)


@pytest.mark.parametrize("perm,sign", [((0, 1, 2), 1), ((1, 0, 2), -1), ((1, 2, 0), 1), ((3, 2, 1, 0), 1)])
def test_permutation_sign(perm, sign):
    assert permutation_sign(perm) == sign


class TestWick:
    def test_four_letter_word(self):
        # <w1 w3> = a, <w1 w4> = b, <w2 w3> = c, <w2 w4> = d; every other pair contracts to zero
        a, b, c, d = 2, 3, 5, 7
        table = PairingTable(4, {(0, 2): a, (0, 3): b, (1, 2): c, (1, 3): d})
        assert wick_vev(table) == b * c - a * d

    def test_odd_length_vanishes(self):
        assert wick_vev(PairingTable(3, {(0, 1): 1, (1, 2): 1})) == 0

    def test_empty_word(self):
        assert wick_vev(PairingTable(0)) == 1

    def test_length_cap(self):
        with pytest.raises(WickLengthError):
            wick_vev(PairingTable(14))

    def test_pairs_must_be_ordered(self):
        with pytest.raises(ValueError):
            PairingTable(4, {(2, 1): 1})

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_cross_table_matches_determinant(self, rng, n):
        cross = [[Fraction(rng.randint(-6, 6), rng.randint(1, 4)) for _ in range(n)] for _ in range(n)]
        assert wick_vev(pairing_table_from_cross(cross)) == wick_det(cross)


class TestScalars:
    def test_values_agree(self):
        assert values_agree(Fraction(1, 3), Fraction(1, 3))
        assert not values_agree(Fraction(1, 3), Fraction(1, 3) + Fraction(1, 10 ** 30))
        assert values_agree(1.0, 1.0 + 1e-12)
        assert not values_agree(1.0, 1.001)

    def test_float_sum_is_compensated(self):
        assert scalar_sum([1e16, 1.0, -1e16], Mode.FLOAT) == 1.0

    def test_exact_sum(self):
        assert scalar_sum([Fraction(1, 2), Fraction(1, 3)], Mode.EXACT) == Fraction(5, 6)

    def test_check_finite(self):
        assert check_finite(2.0) == 2.0
        with pytest.raises(FloatOverflowError):
            check_finite(math.inf)
