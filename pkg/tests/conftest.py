import numpy as np
import pytest
from hypothesis import settings
from scipy.stats import unitary_group

from rsfield.evolution import GeneratorSpec

settings.register_profile("default", deadline=None, derandomize=True)
settings.load_profile("default")


def random_hermitian(rng, n, scale=1.0):
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (x + x.conj().T)


def random_rates(rng, n, scale=1.0, coupling=0.1):
    """Diagonal-dominant positive semidefinite rate matrix."""
    y = coupling * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return scale * (y @ y.conj().T + np.diag(rng.uniform(0.5, 1.0, size=n)))


def random_unitary(rng, n):
    return unitary_group.rvs(n, random_state=rng)


def random_generator(rng, n, h=0.5, up=0.02, down=0.4, xi=0.05, kappa=0.3):
    return GeneratorSpec(
        n, h=random_hermitian(rng, n, h),
        xi=xi * (rng.normal(size=n) + 1j * rng.normal(size=n)),
        gamma_up=random_rates(rng, n, up), gamma_down=random_rates(rng, n, down),
        scattering=((random_unitary(rng, n), kappa),))


def random_density(rng, d):
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = x @ x.conj().T
    return m / np.trace(m)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance clause, then assert it."""
    def check(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip()
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
