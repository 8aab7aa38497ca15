"""
Shared fixtures: small grid domains and the sample spec directory.
"""
from fractions import Fraction
from pathlib import Path

import pytest

from qhgeo.schemas.domain import DomainSpec
from qhgeo.services.domain import build_domain
from qhgeo.services.whitney import whitney_decompose
from qhgeo.utils.io import load_domain_spec

ROOT_DIR = Path(__file__).resolve().parent.parent


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running runs at acceptance resolution")


@pytest.fixture(scope="session")
def domains_dir() -> Path:
    return ROOT_DIR / "domains"


@pytest.fixture(scope="session")
def unit_square() -> DomainSpec:
    return DomainSpec(kind="square", bounds=[0, 1, 0, 1])


@pytest.fixture(scope="session")
def coarse_square(unit_square):
    """Unit square at h = 1/16."""
    return build_domain(unit_square, Fraction(1, 16))


@pytest.fixture(scope="session")
def fine_square(unit_square):
    """Unit square at h = 1/64."""
    return build_domain(unit_square, Fraction(1, 64))


@pytest.fixture(scope="session")
def fine_decomposition(fine_square):
    return whitney_decompose(fine_square, 5)


@pytest.fixture(scope="session")
def disk(domains_dir):
    """Unit disk at h = 1/128 with its level-6 decomposition."""
    dom = build_domain(load_domain_spec(domains_dir / "disk.spec"), Fraction(1, 128))
    return dom, whitney_decompose(dom, 6)


@pytest.fixture(scope="session")
def dumbbell(domains_dir):
    """Two unit squares and their corridor at h = 1/128 with the level-6 decomposition."""
    dom = build_domain(load_domain_spec(domains_dir / "dumbbell.spec"), Fraction(1, 128))
    return dom, whitney_decompose(dom, 6)
