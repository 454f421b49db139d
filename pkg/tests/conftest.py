"""Shared fixtures: seeded generators, fixture paths and the small canonical chains."""

import random
from fractions import Fraction
from pathlib import Path

import pytest

from taumodel.ensemble import ChainSpec, DiscreteMeasure, PolynomialKernel

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def measure(*triples, label=1):
    return DiscreteMeasure.from_triples(triples, label=label)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def rng():
    return random.Random(20240601)


@pytest.fixture
def single_atom_chain():
    """p=2, N=1, mu_1 = {(2, 3, 5)}: Z_1 = 5."""
    return ChainSpec(2, 1, (measure((2, 3, 5)),))


@pytest.fixture
def two_atom_chain():
    """p=2, N=2, mu_1 = {(1, 1, 1), (2, 3, 1)}: Z_2 = 4, G = [[7, 3], [4, 2]]."""
    return ChainSpec(2, 2, (measure((1, 1, 1), (2, 3, 1)),))


@pytest.fixture
def three_matrix_chain():
    """p=3, N=1, rho_2(y, x) = y x: Z_1 = 12."""
    return ChainSpec(
        3, 1,
        (measure((1, 2, 1), label=1), measure((3, 4, 2), label=2)),
        (PolynomialKernel({(1, 1): Fraction(1)}),),
    )
