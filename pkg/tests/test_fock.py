import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsfield import fock as F
from rsfield import states as S
from rsfield.core import DimensionError
from rsfield.evolution import GeneratorSpec, ThermalBathSpec, bath_generator, integrate
from rsfield.presets import BSV, Coherent, Fock, SinglePhotonSplit, Thermal, Vacuum

from conftest import random_density, random_generator


def test_ladder_cutoff1():
    (a,) = F.ladder_ops(1, (1,))
    assert np.array_equal(a.toarray(), [[0, 1], [0, 0]])


def test_number_diagonal():
    (a,) = F.ladder_ops(1, (5,))
    n = (a.conj().T @ a).toarray()
    assert np.allclose(n, np.diag(np.arange(6)), atol=1e-14, rtol=0)


def test_commutator_defect_top_level():
    a, b = F.ladder_ops(2, (3, 2))
    for x, c, k in [(a, 3, 0), (b, 2, 1)]:
        comm = (x @ x.conj().T - x.conj().T @ x).toarray() - np.eye(12)
        occ = np.array([np.unravel_index(i, (4, 3))[k] for i in range(12)])
        bad = np.flatnonzero(np.abs(np.diag(comm)) > 1e-14)
        assert np.all(occ[bad] == c)
        assert np.count_nonzero(np.abs(comm) > 1e-14) == len(bad)


def test_mode0_major_ordering():
    f = F.prepare(Fock((1, 0)), 2)
    assert np.flatnonzero(f.populations()) == [3]


def test_gkls_vacuum_number_conserving():
    f = F.prepare(Vacuum(2), 3)
    g = GeneratorSpec(2, h=np.array([[1.0, 0.3], [0.3, -0.5]]),
                      scattering=((np.array([[0, 1], [1, 0]]), 0.7),))
    assert np.max(np.abs(F.gkls_rhs(f, g))) < 1e-15


@pytest.mark.parametrize("gamma", [0.5, 2.0])
def test_amplitude_damping_rate(gamma):
    f = F.prepare(Fock((1,)), 3)
    d = F.gkls_rhs(f, GeneratorSpec(1, gamma_down=np.array([[gamma]])))
    (a,) = F.ladder_ops(1, (3,))
    dn = np.trace((a.conj().T @ a).toarray() @ d).real
    assert dn == pytest.approx(-gamma, abs=1e-14)


def test_squeezing_pair_creation():
    f = F.prepare(Vacuum(2), 3)
    hs = np.array([[0, 0.5], [0.5, 0]], complex)
    d = F.gkls_rhs(f, GeneratorSpec(2, hs=hs))
    # d<a1 a2>/dt = -i for H = a1 a2 + a1^dag a2^dag acting on vacuum
    a, b = F.ladder_ops(2, (3, 3))
    assert np.trace((a @ b).toarray() @ d) == pytest.approx(-1j, abs=1e-14)


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_gkls_trace_free(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    g = random_generator(rng, n, h=1.0, up=0.3, down=0.5, xi=0.5)
    hs = 0.3 * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    g = g.with_(hs=hs + hs.T)
    c = 3 if n == 2 else 2
    f = F.FockState(n, (c,) * n, rho=random_density(rng, (c + 1)**n))
    d = F.gkls_rhs(f, g)
    assert abs(np.trace(d)) < 1e-12
    assert np.max(np.abs(d - d.conj().T)) < 1e-12


def test_fock_generator_matches_dense_reference(rng):
    # explicit sum of the master-equation terms on dense matrices
    n, c = 2, 3
    g = random_generator(rng, n, h=1.0, up=0.2, down=0.5, xi=0.4)
    hs = np.array([[0.1, 0.2 - 0.1j], [0.2 - 0.1j, -0.3j]])
    g = g.with_(hs=hs)
    a = [x.toarray() for x in F.ladder_ops(n, (c, c))]
    ad = [x.conj().T for x in a]
    D = a[0].shape[0]
    H = sum(g.h[k, q] * ad[k] @ a[q] for k in range(n) for q in range(n))
    Hs = sum(hs[k, q] * a[k] @ a[q] for k in range(n) for q in range(n))
    H = H + Hs + Hs.conj().T
    P = sum(g.xi[k] * ad[k] - np.conj(g.xi[k]) * a[k] for k in range(n))
    rho = random_density(rng, D)
    ref = -1j * (H @ rho - rho @ H) + (P @ rho - rho @ P)
    for k in range(n):
        for q in range(n):
            L, Ld = a[k], ad[q]
            ref = ref + g.gamma_down[k, q] * (L @ rho @ Ld - 0.5 * (Ld @ L @ rho + rho @ Ld @ L))
            L, Ld = ad[q], a[k]
            ref = ref + g.gamma_up[q, k] * (L @ rho @ Ld - 0.5 * (Ld @ L @ rho + rho @ Ld @ L))
    for u, kappa in g.scattering:
        U = F.lift_mode_unitary(u, (c, c)).dense()
        ref = ref + kappa * (U @ rho @ U.conj().T - rho)
    out = F.gkls_rhs(F.FockState(n, (c, c), rho=rho), g)
    assert np.max(np.abs(out - ref)) < 1e-13


def test_lifted_unitary_transforms_ladder(rng):
    u = np.array([[np.cos(0.4), 1j * np.sin(0.4)], [1j * np.sin(0.4), np.cos(0.4)]])
    U = F.lift_mode_unitary(u, (8, 8)).dense()
    a = [x.toarray() for x in F.ladder_ops(2, (8, 8))]
    f = F.prepare(Coherent((0.3, 0.1j)), 8)
    rho = U @ f.density() @ U.conj().T
    for k in range(2):
        lhs = np.trace(a[k] @ rho)
        rhs = sum(u[k, q] * np.trace(a[q] @ f.density()) for q in range(2))
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_leakage_abort():
    f = F.prepare(Coherent((1.0,)), 3)
    f = F.FockState(1, f.cutoffs, rho=f.density())
    g = GeneratorSpec(1, xi=np.array([2.0]))
    with pytest.raises(F.LeakageError, match="raise the cutoff"):
        F.evolve_fock(f, g, [0, 2.0])


def test_leakage_warning():
    with pytest.warns(F.LeakageWarning):
        F.reduce_from_fock(F.prepare(Coherent((1.5,)), 4))


def test_cutoff_errors():
    with pytest.raises(F.CutoffError):
        F.prepare(Fock((3,)), 2)
    with pytest.raises(F.CutoffError):
        F.ladder_ops(2, (3,))
    with pytest.raises(F.CutoffError):
        F.reduce_from_fock(F.prepare(SinglePhotonSplit(), 1), warn=False)


def test_dimension_limit():
    with pytest.raises(DimensionError):
        F.FockState(4, 7, rho=np.zeros((1, 1)))
    ket = F.prepare(Vacuum(4), 8)
    assert ket.is_pure
    with pytest.raises(DimensionError):
        ket.density()


def test_bsv_norm_deficit():
    g, c = 0.3, 6
    ket = F._tmsv(g, 1.0, c, c)
    # unnormalised pair amplitude: the dropped tail of the geometric series
    w = np.array([math.tanh(g) ** (2 * k) for k in range(c + 1)]) / math.cosh(g) ** 2
    deficit = 1 - w.sum()
    assert 0 < deficit < math.tanh(g) ** 14
    assert np.linalg.norm(ket) == pytest.approx(1.0, abs=1e-15)
    f = F.prepare(BSV(g), c)
    assert f.trace() == pytest.approx(1.0, abs=1e-14)


def test_single_photon_split_state():
    f = F.prepare(SinglePhotonSplit(), 2)
    rho = f.density()
    idx10, idx01 = 3, 1
    expect = np.zeros((9, 9))
    for i in (idx10, idx01):
        for j in (idx10, idx01):
            expect[i, j] = 0.5
    assert np.allclose(rho, expect, atol=1e-15)


@pytest.mark.parametrize("nbar,c", [(0.3, 6), (1.0, 10)])
def test_thermal_weights(nbar, c):
    f = F.prepare(Thermal((nbar,)), c)
    w = np.array([nbar**i / (nbar + 1) ** (i + 1) for i in range(c + 1)])
    assert np.allclose(np.diag(f.rho).real, w / w.sum(), atol=1e-15)
    assert np.count_nonzero(f.rho - np.diag(np.diag(f.rho))) == 0


def test_trajectory_trace_hermiticity(rng):
    g = random_generator(rng, 2, h=1.0, up=0.05, down=0.5, xi=0.2)
    f = F.prepare(Coherent((0.3, -0.2j)), 8)
    f = F.FockState(2, f.cutoffs, rho=f.density())
    tr = F.evolve_fock(f, g, np.linspace(0, 1, 5))
    for s in tr.states:
        assert abs(s.trace() - 1) < 1e-9
        assert np.max(np.abs(s.rho - s.rho.conj().T)) < 1e-9


def test_oracle_matches_reduced_thermal_damping():
    g = bath_generator(ThermalBathSpec(0.1, 1.0, (0, 1)), 2)
    f = F.prepare(SinglePhotonSplit(), 8)
    f = F.FockState(2, f.cutoffs, rho=f.density())
    ts = np.linspace(0, 1, 6)
    tr = F.evolve_fock(f, g, ts, observer=lambda s: F.reduce_from_fock(s, warn=False))
    red = integrate(S.single_photon_split(), g, ts)
    for a, b in zip(tr.states, red.states):
        assert max(a.max_deviation(b).values()) < 1e-6
