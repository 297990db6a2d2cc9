"""Squeezing-augmented evolution of the extended set plus m, q and zeta.

The squeezing Hamiltonian is H_s = sum hs[k,k'] a_k a_k' + h.c.  It mixes
creation and annihilation operators, so the closed set of moments grows to

    m[(k2,k4),(k1,k3)] = <a_k1^dag a_k2 a_k3 a_k4>
    q[(k2,k4),(k1,k3)] = <a_k1 a_k2 a_k3 a_k4>
    zeta[(k2,k3), k1]  = <a_k1 a_k2 a_k3>

Internally everything is integrated as normal-ordered tensors C[s,t]
(s creation operators to the left of t annihilation operators, s <= t).
Each generator term acts on C[s,t] by a fixed rule:

* single-operator drift  a_q -> A a + S a^dag + xi,  A = -i h + (g_up - g_dn^T)/2,
  S = -2i hs^*;  re-ordering the inserted a^dag (or a) produces contractions;
* gain contracts every creation/annihilation pair with g_up[q, p];
* scattering transforms every index with u (or u^*).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DimensionError, ReducedState
from .evolution import (GeneratorSpec, Trajectory, as_piecewise, check_grid,
                        rk4_propagate)
from .states import NOMoments

STORED = [(0, 1), (1, 1), (0, 2), (1, 2), (0, 3), (2, 2), (1, 3), (0, 4)]
_P = "abcd"
_Q = "efgh"


@dataclass(frozen=True, eq=False)
class SecondOrderState:
    base: ReducedState
    m: np.ndarray
    q: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        n = self.base.n_modes
        for name, shape in (("m", (n * n, n * n)), ("q", (n * n, n * n)), ("zeta", (n * n, n))):
            a = np.array(getattr(self, name), dtype=complex)
            if a.shape != shape:
                raise DimensionError(f"{name} has shape {a.shape}, expected {shape}")
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def n_modes(self):
        return self.base.n_modes

    @classmethod
    def zeros(cls, n):
        return cls(ReducedState.zeros(n), np.zeros((n * n, n * n)), np.zeros((n * n, n * n)),
                   np.zeros((n * n, n)))

    @classmethod
    def from_moments(cls, mom: NOMoments) -> "SecondOrderState":
        return cls(mom.to_reduced(), *mom.extra_blocks())

    def blocks(self) -> dict:
        out = dict(self.base.blocks())
        out.update(m=self.m, q=self.q, zeta=self.zeta)
        return out

    def max_deviation(self, other: "SecondOrderState") -> dict:
        o = other.blocks()
        return {k: float(np.max(np.abs(v - o[k]), initial=0.0)) for k, v in self.blocks().items()}

    # normal-ordered view ------------------------------------------------
    def to_no(self) -> dict:
        n = self.n_modes
        b = self.base
        rho = b.rho
        c22 = np.einsum("ijnm->nmij", b.tensor4()) - np.einsum("im,jn->nmij", np.eye(n), rho)
        return {
            (0, 1): b.alpha.copy(),
            (1, 1): rho.T.copy(),
            (0, 2): b.r.copy(),
            (1, 2): np.einsum("bca->abc", b.tensor3()),
            (0, 3): np.einsum("bca->abc", self.zeta.reshape(n, n, n)),
            (2, 2): c22,
            (1, 3): np.einsum("bdac->abcd", self.m.reshape(n, n, n, n)),
            (0, 4): np.einsum("bdac->abcd", self.q.reshape(n, n, n, n)),
        }

    @classmethod
    def from_no(cls, c: dict, n: int) -> "SecondOrderState":
        mom = NOMoments(n, {k: c[k] for k in STORED})
        return cls.from_moments(mom)


def from_reduced(rs: ReducedState, m=None, q=None, zeta=None) -> SecondOrderState:
    """Extend a ReducedState with (by default zero) higher blocks."""
    n = rs.n_modes
    z4 = np.zeros((n * n, n * n))
    return SecondOrderState(rs, z4 if m is None else m, z4 if q is None else q,
                            np.zeros((n * n, n)) if zeta is None else zeta)


def build_second_order(preset) -> SecondOrderState:
    from .states import no_moments
    return SecondOrderState.from_moments(no_moments(preset))


# ---------------------------------------------------------------------------

def _get(c: dict, s: int, t: int, n: int) -> np.ndarray:
    if s == 0 and t == 0:
        return np.array(1.0 + 0j)
    if (s, t) in c:
        return c[s, t]
    x = c[t, s]
    return np.conj(x).transpose(list(range(t, t + s)) + list(range(t)))


def _drop(s, k):
    return s[:k] + s[k + 1:]


class _NORhs:
    def __init__(self, g: GeneratorSpec):
        self.n = g.n_modes
        self.A = -1j * g.h + 0.5 * (g.gamma_up - g.gamma_down.T)
        self.xi = g.xi
        self.gu = g.gamma_up
        self.hs = g.hs if g.hs is not None else np.zeros((self.n, self.n))
        self.squeeze = bool(np.any(self.hs != 0))
        self.pump = bool(np.any(self.xi != 0))
        self.gain = bool(np.any(self.gu != 0))
        self.scat = [(u, k) for u, k in g.scattering if k > 0]

    def block(self, c: dict, s: int, t: int) -> np.ndarray:
        n = self.n
        P, Q = _P[:s], _Q[:t]
        out_sub = P + Q
        C = c[s, t]
        d = np.zeros_like(C)
        Ac = self.A.conj()
        for j in range(s):
            d += np.einsum(f"{P[j]}z,{P[:j]}z{P[j+1:]}{Q}->{out_sub}", Ac, C)
        for l in range(t):
            d += np.einsum(f"{Q[l]}z,{P}{Q[:l]}z{Q[l+1:]}->{out_sub}", self.A, C)
        if self.pump:
            for j in range(s):
                d += np.einsum(f"{P[j]},{_drop(P, j)}{Q}->{out_sub}",
                               self.xi.conj(), _get(c, s - 1, t, n))
            for l in range(t):
                d += np.einsum(f"{Q[l]},{P}{_drop(Q, l)}->{out_sub}",
                               self.xi, _get(c, s, t - 1, n))
        if self.gain:
            for j in range(s):
                for l in range(t):
                    d += np.einsum(f"{Q[l]}{P[j]},{_drop(P, j)}{_drop(Q, l)}->{out_sub}",
                                   self.gu, _get(c, s - 1, t - 1, n))
        if self.squeeze:
            hs2 = 2j * self.hs
            hs2c = -2j * self.hs.conj()
            for j in range(s):
                # a_p^dag -> 2i hs[p,k] a_k, then moved right past later creators
                d += np.einsum(f"{P[j]}z,{_drop(P, j)}z{Q}->{out_sub}",
                               hs2, _get(c, s - 1, t + 1, n))
                for j2 in range(j + 1, s):
                    rest = P[:j] + P[j + 1:j2] + P[j2 + 1:]
                    d += np.einsum(f"{P[j]}{P[j2]},{rest}{Q}->{out_sub}",
                                   hs2, _get(c, s - 2, t, n))
            for l in range(t):
                # a_q -> -2i hs*[q,k] a_k^dag, then moved left past earlier annihilators
                d += np.einsum(f"{Q[l]}z,{P}z{_drop(Q, l)}->{out_sub}",
                               hs2c, _get(c, s + 1, t - 1, n))
                for l2 in range(l):
                    rest = Q[:l2] + Q[l2 + 1:l] + Q[l + 1:]
                    d += np.einsum(f"{Q[l]}{Q[l2]},{P}{rest}->{out_sub}",
                                   hs2c, _get(c, s, t - 2, n))
        for u, k in self.scat:
            x = C
            uc = u.conj()
            for j in range(s):
                x = np.einsum(f"{P[j]}z,{P[:j]}z{P[j+1:]}{Q}->{out_sub}", uc, x)
            for l in range(t):
                x = np.einsum(f"{Q[l]}z,{P}{Q[:l]}z{Q[l+1:]}->{out_sub}", u, x)
            d += k * (x - C)
        return d

    def __call__(self, c: dict) -> dict:
        return {k: self.block(c, *k) for k in STORED}


def rhs_second_order(s: SecondOrderState, g: GeneratorSpec) -> SecondOrderState:
    """Time derivative of every block, squeezing included."""
    if s.n_modes != g.n_modes:
        raise DimensionError(f"state has {s.n_modes} modes, generator {g.n_modes}")
    d = _NORhs(g)(s.to_no())
    # the map blocks <-> normal-ordered tensors is linear, so it carries derivatives
    n = s.n_modes
    rho = d[1, 1].T
    t4 = np.einsum("nmij->ijnm", d[2, 2]) + np.einsum("im,jn->ijnm", np.eye(n), rho)
    base = ReducedState(rho, d[0, 1], d[0, 2], t4.reshape(n * n, n * n),
                        np.einsum("abc->bca", d[1, 2]).reshape(n * n, n))
    return SecondOrderState(
        base,
        np.einsum("abcd->bdac", d[1, 3]).reshape(n * n, n * n),
        np.einsum("abcd->bdac", d[0, 4]).reshape(n * n, n * n),
        np.einsum("abc->bca", d[0, 3]).reshape(n * n, n))


def _pack(c: dict) -> np.ndarray:
    return np.concatenate([c[k].ravel() for k in STORED])


def _unpack(y: np.ndarray, n: int) -> dict:
    sizes = [n ** (s + t) for s, t in STORED]
    parts = np.split(y, np.cumsum(sizes)[:-1])
    return {k: p.reshape((n,) * sum(k)) for k, p in zip(STORED, parts)}


def integrate_second_order(initial, g, t_grid: Sequence[float],
                           dt: Optional[float] = None) -> Trajectory:
    """Fixed-step RK4 over the enlarged state (same step rule as integrate)."""
    if isinstance(initial, ReducedState):
        initial = from_reduced(initial)
    gen = as_piecewise(g)
    n = initial.n_modes
    if gen.n_modes != n:
        raise DimensionError("generator and state sizes differ")
    t = check_grid(t_grid)

    def make(spec):
        f = _NORhs(spec)
        return lambda y: _pack(f(_unpack(y, n)))

    def propagate(state, t0, t1):
        y = rk4_propagate(_pack(state.to_no()), t0, t1, gen, make, dt)
        return SecondOrderState.from_no(_unpack(y, n), n)

    y = _pack(initial.to_no())
    states = [initial]
    for a, b in zip(t[:-1], t[1:]):
        y = rk4_propagate(y, a, b, gen, make, dt)
        states.append(SecondOrderState.from_no(_unpack(y, n), n))
    return Trajectory(t, states, propagate)


def bsv_squeezing(gamma: float, n_modes: int = 4, modes=(0, 1, 2, 3)) -> np.ndarray:
    """hs for H_int = gamma (a1^dag a4^dag - a2^dag a3^dag) + h.c. on ``modes``."""
    hs = np.zeros((n_modes, n_modes), complex)
    q = modes
    hs[q[0], q[3]] = hs[q[3], q[0]] = gamma / 2
    hs[q[1], q[2]] = hs[q[2], q[1]] = -gamma / 2
    return hs
