import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsfield import fock as F
from rsfield import states as S
from rsfield.core import Bipartition, ReducedState, project_bipartition, two_qudit
from rsfield.entanglement import critical_time, min_ppt_eigenvalue
from rsfield.evolution import (GeneratorSpec, NonlocalGenerator, NumericalError,
                               PiecewiseGenerator, StepSizeError, ThermalBathSpec,
                               bath_generator, bath_to_gamma, integrate, rhs, rhs_projected)
from rsfield.presets import Coherent

from conftest import random_generator, random_hermitian, random_rates, random_unitary

BP = Bipartition((0, 1), (2, 3))


def test_bath_zero_temperature():
    up, down = bath_to_gamma(ThermalBathSpec(0.0, 1.0, (0, 2)), 4)
    assert np.array_equal(up, np.zeros((4, 4)))
    assert np.array_equal(down, np.diag([1.0, 0, 1.0, 0]))


def test_bath_uniform():
    up, down = bath_to_gamma(ThermalBathSpec(0.1, 1.0, (0, 1, 2, 3)), 4)
    assert np.allclose(up, 0.1 * np.eye(4))
    assert np.allclose(down, 1.1 * np.eye(4))


def test_bath_detailed_balance():
    up, down = bath_to_gamma(ThermalBathSpec(1.0, 0.7, (0, 1)), 2)
    assert np.allclose(np.diag(up) / np.diag(down), 0.5)


@pytest.mark.parametrize("kw", [
    dict(h=np.array([[0, 1], [0, 0]])),
    dict(gamma_down=-np.eye(2)),
    dict(xi=np.zeros(3)),
    dict(scattering=((np.array([[1, 1], [0, 1]]), 1.0),)),
    dict(hs=np.array([[0, 1], [0, 0]])),
])
def test_generator_validation(kw):
    with pytest.raises(ValueError):
        GeneratorSpec(2, **kw)


def test_vacuum_free_hamiltonian():
    g = GeneratorSpec(3, h=np.diag([1.0, 2.0, 0.5]))
    d = rhs(S.vacuum(3), g)
    assert all(np.all(v == 0) for v in d.blocks().values())


def test_zero_generator():
    d = rhs(S.weak_homodyne(0.5), GeneratorSpec(4))
    assert all(np.all(v == 0) for v in d.blocks().values())


@pytest.mark.parametrize("g", [0.3, 1.0])
def test_bsv_decay_rate(g):
    gen = bath_generator(ThermalBathSpec(0.0, 1.0, (0, 1, 2, 3)), 4)
    d = project_bipartition(rhs(S.bsv(g), gen), BP)
    # rho_{1414}: row (1,4) in one-based labels
    assert d[1, 1].real == pytest.approx(-2 * np.sinh(g)**2 * np.cosh(2 * g), rel=1e-12)


TERMS = ["h", "xi", "gamma_up", "gamma_down", "scattering"]


def _single_term(rng, n, term):
    if term == "h":
        return GeneratorSpec(n, h=random_hermitian(rng, n, 0.7))
    if term == "xi":
        return GeneratorSpec(n, xi=0.3 * (rng.normal(size=n) + 1j * rng.normal(size=n)))
    if term == "gamma_up":
        return GeneratorSpec(n, gamma_up=random_rates(rng, n, 0.3, 0.3))
    if term == "gamma_down":
        return GeneratorSpec(n, gamma_down=random_rates(rng, n, 0.5, 0.3))
    return GeneratorSpec(n, scattering=((random_unitary(rng, n), 0.8),))


@pytest.mark.parametrize("term", TERMS)
def test_rhs_matches_oracle_derivative(rng, term):
    n, cut = 2, 7
    g = _single_term(rng, n, term)
    f = F.prepare(Coherent((0.3 + 0.1j, -0.2j)), cut)
    f = F.FockState(n, f.cutoffs, rho=f.density())
    rs = F.reduce_from_fock(f, warn=False)
    # centred finite difference of the oracle moment trajectory
    h = 1e-4
    gen = F.FockGenerator(g, f.cutoffs)

    def step(rho, dt):
        k1 = gen(rho); k2 = gen(rho + dt / 2 * k1); k3 = gen(rho + dt / 2 * k2)
        k4 = gen(rho + dt * k3)
        return rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    plus = F.reduce_from_fock(F.FockState(n, f.cutoffs, rho=step(f.rho, h)), warn=False)
    minus = F.reduce_from_fock(F.FockState(n, f.cutoffs, rho=step(f.rho, -h)), warn=False)
    fd = (plus - minus) * (1 / (2 * h))
    d = rhs(rs, g)
    assert max(d.max_deviation(fd).values()) < 1e-6


def test_rhs_projected_matches_full(rng):
    n = 4
    h = np.zeros((4, 4), complex)
    h[:2, :2] = random_hermitian(rng, 2)
    h[2:, 2:] = random_hermitian(rng, 2)
    gu = np.diag(rng.uniform(0, 0.3, 4))
    gd = np.diag(rng.uniform(0.2, 1, 4))
    u = np.zeros((4, 4), complex)
    u[:2, :2] = random_unitary(rng, 2)
    u[2:, 2:] = random_unitary(rng, 2)
    xi = 0.2 * (rng.normal(size=4) + 1j * rng.normal(size=4))
    g = GeneratorSpec(n, h=h, xi=xi, gamma_up=gu, gamma_down=gd, scattering=((u, 0.4),))
    rs = S.weak_homodyne(0.6 - 0.3j)
    full = project_bipartition(rhs(rs, g), BP)
    proj = rhs_projected(project_bipartition(rs, BP), rs.rho, g, BP, rs.alpha, rs.beta)
    assert np.max(np.abs(full - proj)) < 1e-12


def test_rhs_projected_nonlocal():
    g = GeneratorSpec(4, h=np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0.]]))
    assert rhs_projected(np.eye(4), np.eye(4), g, BP).shape == (4, 4)
    g = GeneratorSpec(4, h=np.array([[0, 0, 1, 0], [0, 0, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0.]]))
    with pytest.raises(NonlocalGenerator):
        rhs_projected(np.eye(4), np.eye(4), g, BP)


@pytest.mark.parametrize("alpha", [0.5, 0.9])
def test_weak_homodyne_damped_entry(alpha):
    g = bath_generator(ThermalBathSpec(0.0, 1.0, (0, 2)), 4)
    tr = integrate(S.weak_homodyne(alpha), g, [0.0, 0.7, 1.5])
    for t, s in tr:
        p = project_bipartition(s, BP)
        # coupling (1,4)<->(2,3) in one-based labels
        assert p[1, 2].real == pytest.approx(alpha**2 * np.exp(-t) / 2, abs=1e-10)


def test_constant_without_generator():
    s0 = S.weak_homodyne(0.4)
    tr = integrate(s0, GeneratorSpec(4), np.linspace(0, 2, 5))
    assert all(s.allclose(s0, atol=0) for s in tr.states)


def test_bsv_zero_temperature_stationary():
    g = bath_generator(ThermalBathSpec(0.0, 1.0, (0, 1, 2, 3)), 4)
    tr = integrate(S.bsv(1.0), g, np.linspace(0, 5, 26))
    lam = [min_ppt_eigenvalue(s, BP) for s in tr.states]
    assert np.ptp(lam) < 1e-8


def test_single_photon_critical_time():
    g = bath_generator(ThermalBathSpec(0.1, 1.0, (0, 2)), 4)
    tr = integrate(S.weak_homodyne(0.5), g, np.linspace(0, 3, 31))
    tc = critical_time(tr, BP)
    assert tc == pytest.approx(np.log(1 + (np.sqrt(2) - 1) / 0.2), rel=1e-6)
    assert tc == pytest.approx(1.1221, abs=1e-4)


def test_step_size_errors():
    g = GeneratorSpec(2, h=np.diag([5.0, 0.0]))
    with pytest.raises(StepSizeError):
        integrate(S.fock(1, 0), g, [0, 1], dt=0.5)
    with pytest.raises(StepSizeError):
        integrate(S.fock(1, 0), g, [0, 1], dt=-0.1)
    with pytest.raises(ValueError):
        integrate(S.fock(1, 0), g, [0, 1, 0.5])


def test_nan_detection():
    bad = ReducedState(np.full((1, 1), np.nan), [0], [[0]], [[0]], [[0]])
    with pytest.raises(NumericalError):
        integrate(bad, GeneratorSpec(1), [0, 0.1])


def test_piecewise_switch():
    g1 = GeneratorSpec(2, h=np.array([[0, 1], [1, 0.]]))
    g2 = bath_generator(ThermalBathSpec(0.0, 1.0, (0, 1)), 2)
    pw = PiecewiseGenerator.constant(g1).then(0.4, g2)
    s0 = S.fock(1, 0)
    a = integrate(s0, pw, [0, 1.0]).states[-1]
    mid = integrate(s0, g1, [0, 0.4]).states[-1]
    b = integrate(mid, g2, [0.4, 1.0]).states[-1]
    assert max(a.max_deviation(b).values()) < 1e-12


@given(st.integers(0, 2**31))
def test_hermiticity_preserved(seed):
    rng = np.random.default_rng(seed)
    g = random_generator(rng, 3, h=1.0, up=0.2, down=0.5, xi=0.3)
    tr = integrate(S.coherent(0.3, 0.5j, -0.2), g, [0, 0.5, 1.0])
    for s in tr.states:
        assert np.max(np.abs(s.rho - s.rho.conj().T)) < 1e-9
        p = project_bipartition(s, Bipartition((0,), (1, 2)))
        assert np.max(np.abs(p - p.conj().T)) < 1e-9


@given(st.integers(0, 2**31))
def test_rho_rho4_closed_without_pump(seed):
    rng = np.random.default_rng(seed)
    g = random_generator(rng, 3, xi=0.0)
    full = S.coherent(0.4, -0.3j, 0.2)
    part = ReducedState(full.rho, np.zeros(3), np.zeros((3, 3)), full.rho4, np.zeros((9, 3)))
    a = integrate(full, g, [0, 1.0]).states[-1]
    b = integrate(part, g, [0, 1.0]).states[-1]
    assert np.max(np.abs(a.rho - b.rho)) < 1e-12
    assert np.max(np.abs(a.rho4 - b.rho4)) < 1e-12


@given(st.integers(0, 2**31), st.floats(-2, 2), st.floats(-2, 2))
def test_rhs_linear(seed, a, b):
    # pump and gain add a state-independent source; the rest is linear
    rng = np.random.default_rng(seed)
    g = random_generator(rng, 3)
    s1, s2 = S.coherent(0.4, 0.1, -0.3j), S.fock(1, 0, 2)
    src = rhs(ReducedState.zeros(3), g)
    lhs = rhs(s1 * a + s2 * b, g)
    rhs_ = rhs(s1, g) * a + rhs(s2, g) * b + src * (1 - a - b)
    assert max(lhs.max_deviation(rhs_).values()) < 1e-12


def test_thermal_fixed_point():
    nw = 0.3
    g = bath_generator(ThermalBathSpec(nw, 1.0, (0, 1, 2, 3)), 4)
    s = integrate(S.bsv(1.0), g, [0, 20.0]).states[-1]
    assert np.max(np.abs(s.rho - nw * np.eye(4))) < 1e-6
    assert np.max(np.abs(two_qudit(s, BP).matrix - np.eye(4) / 4)) < 1e-6
