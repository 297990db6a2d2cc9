"""Analytic reduced states for the preset family.

States are assembled from normal-ordered moments

    C[s,t][p_1..p_s, q_1..q_t] = <a_p1^dag ... a_ps^dag a_q1 ... a_qt>

with s <= 2 and s + t <= 4, which is everything the reduced blocks (and the
squeezing-extended blocks) need.  Product states multiply factor moments
over every assignment of operator slots to factors; Gaussian components use
Wick pairings.
"""
from __future__ import annotations

import itertools
import math
from typing import Dict, Tuple

import numpy as np

from . import presets as P
from .core import ReducedState
from .fock import reduce_from_fock  # noqa: F401  (re-exported)
from .presets import (BSV, Coherent, Fock, Placed, PresetError, Product,  # noqa: F401
                      SinglePhotonSplit, Thermal, Vacuum, WeakHomodyne)

KEYS = [(s, t) for s in range(3) for t in range(5) if s + t <= 4]


class NOMoments:
    """Normal-ordered moment tensors of an N-mode state."""

    def __init__(self, n: int, tensors: Dict[Tuple[int, int], np.ndarray] = None):
        self.n = n
        self.t = {}
        for k in KEYS:
            shape = (n,) * (k[0] + k[1])
            self.t[k] = np.zeros(shape, complex) if k != (0, 0) else np.array(1.0 + 0j)
        for k, v in (tensors or {}).items():
            self.t[k] = np.asarray(v, dtype=complex)

    def __getitem__(self, key):
        return self.t[key]

    # -- conversion to reduced blocks -------------------------------------
    def to_reduced(self) -> ReducedState:
        n = self.n
        rho = self.t[1, 1].T
        alpha = self.t[0, 1]
        r = self.t[0, 2]
        # <a_n^dag a_i a_m^dag a_j> = <a_n^dag a_m^dag a_i a_j> + delta_im <a_n^dag a_j>
        t4 = np.einsum("nmij->ijnm", self.t[2, 2]) + np.einsum("im,jn->ijnm", np.eye(n), rho)
        beta = np.einsum("abc->bca", self.t[1, 2])
        return ReducedState(rho, alpha, r, t4.reshape(n * n, n * n), beta.reshape(n * n, n))

    def extra_blocks(self):
        """(m, q, zeta) in the squeezing-extended layout."""
        n = self.n
        m = np.einsum("abcd->bdac", self.t[1, 3]).reshape(n * n, n * n)
        q = np.einsum("abcd->bdac", self.t[0, 4]).reshape(n * n, n * n)
        z = np.einsum("abc->bca", self.t[0, 3]).reshape(n * n, n)
        return m, q, z


def _single_mode_table(kind: str, par) -> Dict[Tuple[int, int], complex]:
    out = {}
    for s, t in KEYS:
        if kind == "fock":
            v = math.factorial(par) / math.factorial(par - s) if (s == t and s <= par) else 0.0
        elif kind == "coherent":
            v = np.conj(par) ** s * par ** t
        elif kind == "thermal":
            v = math.factorial(s) * par ** s if s == t else 0.0
        else:
            raise ValueError(kind)
        out[s, t] = complex(v)
    return out


def _from_single_mode(table) -> NOMoments:
    return NOMoments(1, {k: np.full((1,) * sum(k), v) for k, v in table.items()})


def _wick(n, mean, n11, m02) -> NOMoments:
    """Normal-ordered moments of a Gaussian state.

    ``n11[p,q] = <a_p^dag a_q>_c`` and ``m02[q,q'] = <a_q a_q'>_c`` are the
    centred second moments.
    """
    pair = {("c", "c"): m02.conj(), ("c", "a"): n11, ("a", "a"): m02}
    single = {"c": mean.conj(), "a": mean}

    def rec(kinds):
        if not kinds:
            return np.array(1.0 + 0j)
        L = len(kinds)
        rest = rec(kinds[1:])
        total = np.multiply.outer(single[kinds[0]], rest)
        for k in range(1, L):
            sub = kinds[1:k] + kinds[k + 1:]
            t = np.multiply.outer(pair[kinds[0], kinds[k]], rec(sub))
            # axes now (0, k, others...) -> move axis 1 to position k
            total = total + np.moveaxis(t, 1, k)
        return total

    out = {}
    for s, t in KEYS:
        out[s, t] = rec(("c",) * s + ("a",) * t)
    return NOMoments(n, out)


def _embed(local: NOMoments, modes, n) -> NOMoments:
    out = NOMoments(n)
    for k in KEYS:
        if k == (0, 0):
            continue
        ix = np.ix_(*([list(modes)] * sum(k)))
        out.t[k][ix] = local.t[k]
    return out


def _product(n, factors) -> NOMoments:
    """Moments of a product over factors living on disjoint modes."""
    out = NOMoments(n)
    F = len(factors)
    if F == 0:
        return out
    letters = "abcd"
    for s, t in KEYS:
        if s + t == 0:
            continue
        total = 0
        L = s + t
        for owner in itertools.product(range(F), repeat=L):
            ops, subs = [], []
            for f, fac in enumerate(factors):
                pos = [p for p in range(L) if owner[p] == f]
                fs = sum(1 for p in pos if p < s)
                ops.append(fac.t[fs, len(pos) - fs])
                subs.append("".join(letters[p] for p in pos))
            total = total + np.einsum(",".join(subs) + "->" + letters[:L], *ops)
        out.t[s, t] = total
    return out


def _single_photon_pair() -> NOMoments:
    m = NOMoments(2)
    m.t[1, 1] = 0.5 * np.ones((2, 2), complex)
    return m


def _moments_local(preset) -> list:
    """List of (NOMoments, modes) factors for a preset on its own mode set."""
    if isinstance(preset, Vacuum):
        return []
    if isinstance(preset, Fock):
        return [(_from_single_mode(_single_mode_table("fock", k)), (i,))
                for i, k in enumerate(preset.occupations) if k]
    if isinstance(preset, Coherent):
        return [(_from_single_mode(_single_mode_table("coherent", a)), (i,))
                for i, a in enumerate(preset.amplitudes) if a != 0]
    if isinstance(preset, Thermal):
        return [(_from_single_mode(_single_mode_table("thermal", nb)), (i,))
                for i, nb in enumerate(preset.nbar) if nb > 0]
    if isinstance(preset, BSV):
        g = preset.gamma
        sh, ch = math.sinh(g), math.cosh(g)
        n11 = sh * sh * np.eye(4)
        m02 = np.zeros((4, 4))
        m02[0, 3] = m02[3, 0] = sh * ch
        m02[1, 2] = m02[2, 1] = -sh * ch
        return [(_wick(4, np.zeros(4), n11, m02), preset.modes)]
    if isinstance(preset, SinglePhotonSplit):
        return [(_single_photon_pair(), preset.modes)]
    if isinstance(preset, WeakHomodyne):
        q = preset.modes
        coh = _from_single_mode(_single_mode_table("coherent", preset.alpha))
        return [(_single_photon_pair(), (q[0], q[2])), (coh, (q[1],)), (coh, (q[3],))]
    raise TypeError(f"unknown preset {preset!r}")


def no_moments(preset) -> NOMoments:
    """Normal-ordered moments of a preset or a Product of placed presets."""
    n = preset.n_modes
    if isinstance(preset, Product):
        facs = []
        for part in preset.parts:
            for m, loc in _moments_local(part.preset):
                facs.append(_embed(m, [part.modes[j] for j in loc], n))
        return _product(n, facs)
    return _product(n, [_embed(m, loc, n) for m, loc in _moments_local(preset)])


def build(preset) -> ReducedState:
    """Analytic reduced state of a preset."""
    return no_moments(preset).to_reduced()


# convenience constructors ---------------------------------------------------

def vacuum(n_modes: int) -> ReducedState:
    return build(Vacuum(n_modes))


def fock(*occupations) -> ReducedState:
    return build(Fock(tuple(occupations)))


def coherent(*amplitudes) -> ReducedState:
    return build(Coherent(tuple(amplitudes)))


def thermal(*nbar) -> ReducedState:
    return build(Thermal(tuple(nbar)))


def bsv(gamma: float) -> ReducedState:
    return build(BSV(gamma))


def single_photon_split(n_modes: int = 2, modes=(0, 1)) -> ReducedState:
    return build(SinglePhotonSplit(n_modes, tuple(modes)))


def weak_homodyne(alpha: complex) -> ReducedState:
    return build(WeakHomodyne(alpha))
