import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsfield import fock as F
from rsfield import states as S
from rsfield.core import Bipartition, project_bipartition, swap_matrix, two_qudit
from rsfield.presets import (BSV, Coherent, Fock, Placed, PresetError, Product,
                             SinglePhotonSplit, Thermal, Vacuum, WeakHomodyne)

BP = Bipartition((0, 1), (2, 3))


def test_bsv_entry():
    g = 0.5
    p = project_bipartition(S.bsv(g), BP)
    # rho_{1423}: row (1,4), column (2,3) in one-based labels
    assert p[1, 2].real == pytest.approx(-np.sinh(g)**2 * np.cosh(g)**2, abs=1e-14)
    assert np.allclose(S.bsv(g).rho, np.sinh(g)**2 * np.eye(4), atol=1e-14)


def test_vacuum_zero():
    assert all(np.all(v == 0) for v in S.vacuum(4).blocks().values())


@pytest.mark.parametrize("alpha", [0.5, 0.8])
def test_weak_homodyne_projected(alpha):
    m = two_qudit(S.weak_homodyne(alpha), BP).matrix
    a2 = alpha**2
    # off-diagonal coupling (1,4)<->(2,3) in one-based labels
    assert m[1, 2].real == pytest.approx((a2 / 2) / (a2 + a2**2), abs=1e-14)


def test_fock_moments():
    rs = S.fock(1, 0)
    assert np.array_equal(rs.rho, np.diag([1.0, 0.0]))
    assert rs.rho4[0, 0] == 1


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_fock_second_moment(n):
    rs = S.fock(n)
    assert rs.rho4[0, 0].real == pytest.approx(n**2)


@pytest.mark.parametrize("nbar", [0.1, 0.5, 2.0])
def test_thermal_second_moment(nbar):
    # <n^2> = 2 nbar^2 + nbar for a thermal mode
    assert S.thermal(nbar).rho4[0, 0].real == pytest.approx(2 * nbar**2 + nbar, rel=1e-14)


def test_coherent_oracle():
    a = 0.4
    f = F.prepare(Coherent((a,)), 8)
    rs = F.reduce_from_fock(f, warn=False)
    assert abs(rs.rho4[0, 0] - (a**4 + a**2)) < 1e-10


def test_bsv_cutoff6_series():
    # truncated series at cutoff 6 against the analytic state; the truncated
    # state's own moments sit ~2e-7 (rho) to ~2e-5 (rho4) away, so this fails
    f = F.prepare(BSV(0.3), 6)
    dev = F.reduce_from_fock(f, warn=False).max_deviation(S.bsv(0.3))
    assert max(dev.values()) < 1e-8


@pytest.mark.parametrize("preset,cutoff", [
    (Fock((1, 0, 2)), 4),
    (SinglePhotonSplit(), 3),
    (WeakHomodyne(0.3 + 0.2j), 7),
    (Coherent((0.2, -0.1j)), 9),
    (Product(3, (Placed(SinglePhotonSplit(), (0, 2)), Placed(Fock((2,)), (1,)))), 4),
    (BSV(0.1), 8),
])
def test_build_matches_oracle(preset, cutoff):
    f = F.prepare(preset, cutoff)
    dev = F.reduce_from_fock(f, warn=False).max_deviation(S.build(preset))
    assert max(dev.values()) < 1e-8


@pytest.mark.parametrize("nbar", [0.05, 0.3, 1.5])
def test_thermal_maximally_mixed(nbar):
    rs = S.build(Thermal((nbar,) * 4))
    assert np.allclose(two_qudit(rs, BP).matrix, np.eye(4) / 4, atol=1e-14)


@pytest.mark.parametrize("bad", [
    lambda: BSV(-0.1), lambda: Thermal((-1.0,)), lambda: Fock((-1,)), lambda: Vacuum(0),
    lambda: SinglePhotonSplit(2, (0, 0)), lambda: BSV(0.5, 3),
])
def test_invalid_parameters(bad):
    with pytest.raises(PresetError):
        bad()


@given(st.integers(0, 2**31))
def test_factory_states_physical(seed):
    rng = np.random.default_rng(seed)
    choice = rng.integers(0, 4)
    if choice == 0:
        rs = S.bsv(rng.uniform(0, 1.5))
    elif choice == 1:
        rs = S.weak_homodyne(complex(rng.normal(), rng.normal()))
    elif choice == 2:
        rs = S.build(Thermal(tuple(rng.uniform(0, 2, size=4))))
    else:
        rs = S.build(Fock(tuple(int(k) for k in rng.integers(0, 4, size=4))))
    assert np.allclose(rs.rho, rs.rho.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(rs.rho).min() > -1e-12
    tau = swap_matrix(4)
    assert np.allclose(rs.rho4.conj().T, tau @ rs.rho4 @ tau, atol=1e-12)
    p = project_bipartition(rs, BP)
    assert np.linalg.eigvalsh(p).min() > -1e-10 * max(1.0, np.abs(p).max())


def test_fock_single_mode_table():
    # <a^dag^2 a^2> = n (n-1)
    mom = S.no_moments(Fock((3,)))
    assert mom[2, 2].ravel()[0] == pytest.approx(math.factorial(3) / math.factorial(1))
