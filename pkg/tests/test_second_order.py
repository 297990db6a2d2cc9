import numpy as np
import pytest

from rsfield import fock as F
from rsfield import second_order as SO
from rsfield import states as S
from rsfield.core import Bipartition, DimensionError, compose_product, project_bipartition
from rsfield.entanglement import min_ppt_eigenvalue
from rsfield.evolution import GeneratorSpec, PiecewiseGenerator, ThermalBathSpec, bath_generator, integrate
from rsfield.optics import apply_mode_unitary
from rsfield.presets import BSV, Coherent, Vacuum, WeakHomodyne

from conftest import random_generator

BP = Bipartition((0, 1), (2, 3))


def _vacuum_so(n=4):
    return SO.build_second_order(Vacuum(n))


def test_vacuum_no_squeezing_is_fixed():
    d = SO.rhs_second_order(_vacuum_so(), GeneratorSpec(4, h=np.diag([1.0, 0.5, 2.0, 0.0])))
    assert all(np.all(np.abs(v) < 1e-15) for v in d.blocks().values())


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        SO.rhs_second_order(_vacuum_so(3), GeneratorSpec(4))


@pytest.mark.parametrize("preset", [BSV(0.4), WeakHomodyne(0.5 + 0.2j), Coherent((0.3, 0.2j, -0.1))])
def test_q_symmetric_on_factory_states(preset):
    s = SO.build_second_order(preset)
    n = s.n_modes
    q = s.q.reshape(n, n, n, n)          # q[k2,k4,k1,k3] = <a1 a2 a3 a4>
    ref = np.einsum("bdac->abcd", q)
    for perm in ["bacd", "acbd", "abdc", "dcba"]:
        assert np.allclose(np.einsum(f"abcd->{perm}", ref), ref, atol=1e-14)
    assert all(np.all(np.isfinite(v)) for v in s.blocks().values())


def test_bsv_generation_rho():
    ts = np.linspace(0, 0.5, 6)
    tr = SO.integrate_second_order(_vacuum_so(), GeneratorSpec(4, hs=SO.bsv_squeezing(1.0)), ts)
    for t, s in tr:
        assert np.allclose(s.base.rho, np.sinh(t)**2 * np.eye(4), atol=1e-9)
        p = project_bipartition(s.base, BP)
        # rho_{2314}: (2,3)<->(1,4) in one-based labels
        assert p[2, 1].real == pytest.approx(-np.sinh(t)**2 * np.cosh(t)**2, abs=1e-6)


def _pair_oracle(sign, ts, cutoff=8):
    h2 = np.array([[0, sign / 2], [sign / 2, 0]], complex)
    f0 = F.prepare(Vacuum(2), cutoff)
    f0 = F.FockState(2, f0.cutoffs, rho=f0.density())
    obs = lambda f: F.reduce_from_fock(f, warn=False)
    return F.evolve_fock(f0, GeneratorSpec(2, hs=h2), ts, observer=obs, leak_abort=1.0)


def bsv_oracle(ts, gamma=1.0):
    # H_int couples only (1,4) and (2,3); run two 2-mode oracles and compose
    a = _pair_oracle(gamma, ts)
    b = _pair_oracle(-gamma, ts)
    perm = np.zeros((4, 4))
    for pos, m in enumerate([0, 3, 1, 2]):
        perm[m, pos] = 1
    return [apply_mode_unitary(compose_product(x, y), perm) for x, y in zip(a.states, b.states)]


def test_bsv_generation_oracle():
    ts = np.linspace(0, 0.3, 4)
    tr = SO.integrate_second_order(_vacuum_so(), GeneratorSpec(4, hs=SO.bsv_squeezing(1.0)), ts)
    for s, o in zip(tr.states, bsv_oracle(ts)):
        assert max(s.base.max_deviation(o).values()) < 1e-6


def test_zero_generator_constant():
    s0 = SO.build_second_order(WeakHomodyne(0.4))
    tr = SO.integrate_second_order(s0, GeneratorSpec(4), [0, 0.5, 1.0])
    assert all(max(s.max_deviation(s0).values()) == 0 for s in tr.states)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hs_zero_matches_evolution(seed):
    rng = np.random.default_rng(seed)
    g = random_generator(rng, 3, h=1.0, up=0.1, down=0.5, xi=0.2)
    rs = S.coherent(0.3, -0.2j, 0.1)
    ts = [0, 0.5, 1.0]
    a = SO.integrate_second_order(rs, g, ts)
    b = integrate(rs, g, ts)
    for x, y in zip(a.states, b.states):
        assert max(x.base.max_deviation(y).values()) < 1e-12


def test_squeeze_then_damp_piecewise():
    t0 = 0.3
    sq = GeneratorSpec(4, hs=SO.bsv_squeezing(1.0))
    damp = bath_generator(ThermalBathSpec(0.0, 1.0, (0, 1, 2, 3)), 4)
    pw = PiecewiseGenerator.constant(sq).then(t0, damp)
    ts = np.linspace(0, 1.5, 16)
    tr = SO.integrate_second_order(_vacuum_so(), pw, ts)
    # switch by hand: squeeze to t0 then plain damping from the reached state
    mid = SO.integrate_second_order(_vacuum_so(), sq, [0, t0]).states[-1].base
    after = integrate(mid, damp, ts[ts >= t0])
    k = int(np.flatnonzero(ts >= t0)[0])
    lam_pw = [min_ppt_eigenvalue(s.base, BP) for s in tr.states[k:]]
    lam_sw = [min_ppt_eigenvalue(s, BP) for s in after.states]
    assert np.allclose(lam_pw, lam_sw, atol=1e-10)
    # T=0 damping keeps lambda_1 of the reached BSV fixed
    assert np.ptp(lam_sw) < 1e-8
    assert lam_sw[0] == pytest.approx(1 / (1 - 3 * np.cosh(2 * t0)), abs=1e-6)


def _oracle_derivative(f, g):
    """Moment blocks of d rho/dt: the moment map is linear, so it carries derivatives."""
    d = F.FockState(f.n_modes, f.cutoffs, rho=F.gkls_rhs(f, g))
    base = F.reduce_from_fock(d, warn=False)
    return SO.SecondOrderState(base, *F.reduce_extra_from_fock(d, warn=False))


@pytest.mark.parametrize("term", ["hs", "hs+h", "hs+loss", "all"])
def test_rhs_termwise_against_oracle(rng, term):
    n, cut = 2, 9
    hs = 0.3 * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    hs = hs + hs.T
    extra = random_generator(rng, n, h=0.6, up=0.1, down=0.4, xi=0.2)
    g = {"hs": GeneratorSpec(n, hs=hs),
         "hs+h": GeneratorSpec(n, hs=hs, h=extra.h),
         "hs+loss": GeneratorSpec(n, hs=hs, gamma_down=extra.gamma_down),
         "all": extra.with_(hs=hs)}[term]
    f = F.prepare(Coherent((0.25 - 0.1j, 0.15j)), cut)
    f = F.FockState(n, f.cutoffs, rho=f.density())
    s = SO.SecondOrderState(F.reduce_from_fock(f, warn=False), *F.reduce_extra_from_fock(f, warn=False))
    dev = SO.rhs_second_order(s, g).max_deviation(_oracle_derivative(f, g))
    assert max(dev.values()) < 1e-6, dev
