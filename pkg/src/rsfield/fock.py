"""Truncated Fock-space oracle: preparation, master-equation integration, moments.

Basis ordering is mode-0 major: the occupation of mode 0 is the slowest index.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import presets as P
from .core import DimensionError, RSFError, ReducedState
from .evolution import (GeneratorSpec, PiecewiseGenerator, Trajectory, as_piecewise,
                        check_grid, rk4_propagate)

MAX_DIM = 4096
LEAK_WARN = 1e-8
LEAK_ABORT = 1e-6


class LeakageWarning(UserWarning):
    pass


class LeakageError(RSFError):
    pass


class CutoffError(RSFError, ValueError):
    pass


def _cutoffs(cutoffs, n_modes) -> tuple:
    if np.isscalar(cutoffs):
        cutoffs = (int(cutoffs),) * n_modes
    c = tuple(int(x) for x in cutoffs)
    if len(c) != n_modes or min(c) < 1:
        raise CutoffError(f"need {n_modes} cutoffs >= 1, got {c}")
    return c


@lru_cache(maxsize=64)
def ladder_ops(n_modes: int, cutoffs) -> tuple:
    """Annihilation operators a_k (sparse CSR) on the truncated product space."""
    c = _cutoffs(cutoffs, n_modes)
    dims = [x + 1 for x in c]
    ops = []
    for k in range(n_modes):
        a1 = sp.diags(np.sqrt(np.arange(1, dims[k])), 1, format="csr")
        left = sp.identity(int(np.prod(dims[:k])), format="csr")
        right = sp.identity(int(np.prod(dims[k + 1:])), format="csr")
        ops.append(sp.kron(sp.kron(left, a1), right, format="csr").astype(complex))
    return tuple(ops)


@dataclass(frozen=True, eq=False)
class FockState:
    """Truncated state, held either as a density matrix or as a pure ket."""
    n_modes: int
    cutoffs: tuple
    rho: Optional[np.ndarray] = None
    ket: Optional[np.ndarray] = None

    def __post_init__(self):
        c = _cutoffs(self.cutoffs, self.n_modes)
        object.__setattr__(self, "cutoffs", c)
        d = self.dim
        if (self.rho is None) == (self.ket is None):
            raise ValueError("give exactly one of rho or ket")
        if self.rho is not None:
            if d > MAX_DIM:
                raise DimensionError(f"dense density matrix of dimension {d} exceeds {MAX_DIM}")
            r = np.asarray(self.rho, dtype=complex)
            if r.shape != (d, d):
                raise DimensionError(f"rho has shape {r.shape}, expected {(d, d)}")
            object.__setattr__(self, "rho", r)
        else:
            k = np.asarray(self.ket, dtype=complex).ravel()
            if k.shape != (d,):
                raise DimensionError(f"ket has length {k.size}, expected {d}")
            object.__setattr__(self, "ket", k)

    @property
    def dims(self):
        return tuple(x + 1 for x in self.cutoffs)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def is_pure(self) -> bool:
        return self.ket is not None

    def density(self) -> np.ndarray:
        if self.rho is not None:
            return self.rho
        if self.dim > MAX_DIM:
            raise DimensionError(f"dimension {self.dim} exceeds {MAX_DIM} for a dense matrix")
        return np.outer(self.ket, self.ket.conj())

    def populations(self) -> np.ndarray:
        if self.ket is not None:
            return np.abs(self.ket) ** 2
        return np.real(np.diag(self.rho))

    def trace(self) -> float:
        return float(np.sum(self.populations()))

    def top_level_population(self) -> np.ndarray:
        """Per mode, probability of sitting at the cutoff."""
        p = self.populations().reshape(self.dims)
        out = []
        for k in range(self.n_modes):
            out.append(float(np.take(p, -1, axis=k).sum()))
        return np.array(out)

    def mode_populations(self) -> list:
        p = self.populations().reshape(self.dims)
        return [p.sum(axis=tuple(j for j in range(self.n_modes) if j != k))
                for k in range(self.n_modes)]


# ---------------------------------------------------------------------------
# preparation

def _coherent_ket(a: complex, c: int) -> np.ndarray:
    n = np.arange(c + 1)
    logf = np.array([math.lgamma(k + 1) for k in n])
    v = np.exp(-0.5 * abs(a) ** 2 - 0.5 * logf) * a ** n
    return v / np.linalg.norm(v)


def _fock_ket(n: int, c: int) -> np.ndarray:
    if n > c:
        raise CutoffError(f"occupation {n} exceeds cutoff {c}")
    v = np.zeros(c + 1, complex)
    v[n] = 1
    return v


def _thermal_diag(nbar: float, c: int) -> np.ndarray:
    n = np.arange(c + 1)
    w = nbar ** n / (nbar + 1) ** (n + 1)
    return w / w.sum()


def _tmsv(g: float, sign: float, c1: int, c2: int) -> np.ndarray:
    """(1/cosh g) sum_k (sign tanh g)^k |k,k>, truncated and renormalised."""
    m = np.zeros((c1 + 1, c2 + 1), complex)
    t = math.tanh(g)
    for k in range(min(c1, c2) + 1):
        m[k, k] = (sign * t) ** k
    return m / np.linalg.norm(m)


def _place(local: np.ndarray, modes, n_modes, dims) -> np.ndarray:
    """Reorder a tensor over ``modes`` into global axis order (others size 1)."""
    order = np.argsort(modes)
    t = np.transpose(local, order)
    shape = [1] * n_modes
    for k in modes:
        shape[k] = dims[k]
    return t.reshape(shape)


def _preset_factor(preset, cutoffs):
    """(kind, tensor, local modes) with kind 'ket' or 'rho' (rho as dims x dims tensor)."""
    if isinstance(preset, P.Vacuum):
        return [("ket", _fock_ket(0, cutoffs[k]), (k,)) for k in range(preset.n_modes)]
    if isinstance(preset, P.Fock):
        return [("ket", _fock_ket(n, cutoffs[k]), (k,)) for k, n in enumerate(preset.occupations)]
    if isinstance(preset, P.Coherent):
        return [("ket", _coherent_ket(a, cutoffs[k]), (k,)) for k, a in enumerate(preset.amplitudes)]
    if isinstance(preset, P.Thermal):
        return [("rho", np.diag(_thermal_diag(nb, cutoffs[k])), (k,))
                for k, nb in enumerate(preset.nbar)]
    if isinstance(preset, P.BSV):
        q = preset.modes
        out = [("ket", _tmsv(preset.gamma, 1.0, cutoffs[q[0]], cutoffs[q[3]]), (q[0], q[3])),
               ("ket", _tmsv(preset.gamma, -1.0, cutoffs[q[1]], cutoffs[q[2]]), (q[1], q[2]))]
        rest = [k for k in range(preset.n_modes) if k not in q]
        return out + [("ket", _fock_ket(0, cutoffs[k]), (k,)) for k in rest]
    if isinstance(preset, P.SinglePhotonSplit):
        p, q = preset.modes
        m = np.zeros((cutoffs[p] + 1, cutoffs[q] + 1), complex)
        m[1, 0] = m[0, 1] = 1 / math.sqrt(2)
        rest = [k for k in range(preset.n_modes) if k not in (p, q)]
        return [("ket", m, (p, q))] + [("ket", _fock_ket(0, cutoffs[k]), (k,)) for k in rest]
    if isinstance(preset, P.WeakHomodyne):
        q = preset.modes
        sub = _preset_factor(P.SinglePhotonSplit(2, (0, 1)), (cutoffs[q[0]], cutoffs[q[2]]))
        out = [("ket", sub[0][1], (q[0], q[2])),
               ("ket", _coherent_ket(preset.alpha, cutoffs[q[1]]), (q[1],)),
               ("ket", _coherent_ket(preset.alpha, cutoffs[q[3]]), (q[3],))]
        rest = [k for k in range(preset.n_modes) if k not in q]
        return out + [("ket", _fock_ket(0, cutoffs[k]), (k,)) for k in rest]
    raise TypeError(f"unknown preset {preset!r}")


def _factors(preset, cutoffs):
    if isinstance(preset, P.Product):
        out = []
        covered = set()
        for part in preset.parts:
            sub_c = tuple(cutoffs[k] for k in part.modes)
            for kind, t, loc in _preset_factor(part.preset, sub_c):
                out.append((kind, t, tuple(part.modes[j] for j in loc)))
            covered |= set(part.modes)
        out += [("ket", _fock_ket(0, cutoffs[k]), (k,))
                for k in range(preset.n_modes) if k not in covered]
        return out
    return _preset_factor(preset, cutoffs)


def prepare(preset, cutoffs) -> FockState:
    """Truncated, renormalised Fock representation of a preset."""
    n = preset.n_modes
    c = _cutoffs(cutoffs, n)
    dims = [x + 1 for x in c]
    facs = _factors(preset, c)
    if all(kind == "ket" for kind, _, _ in facs):
        psi = np.ones([1] * n, complex)
        for _, t, modes in facs:
            psi = psi * _place(t, modes, n, dims)
        psi = psi.ravel()
        return FockState(n, c, ket=psi / np.linalg.norm(psi))
    D = int(np.prod(dims))
    if D > MAX_DIM:
        raise DimensionError(f"mixed preparation of dimension {D} exceeds {MAX_DIM}")
    rho = np.ones([1] * (2 * n), complex)
    for kind, t, modes in facs:
        if kind == "ket":
            t = np.multiply.outer(t, t.conj())
        k = len(modes)
        # bring ket axes and bra axes into global order separately
        order = np.argsort(modes)
        t = np.transpose(t, list(order) + [k + j for j in order])
        shape = [1] * (2 * n)
        for j in modes:
            shape[j] = dims[j]
            shape[n + j] = dims[j]
        rho = rho * t.reshape(shape)
    rho = rho.reshape(D, D)
    return FockState(n, c, rho=rho / np.trace(rho))


# ---------------------------------------------------------------------------
# moments

def _expect(f: FockState, op) -> complex:
    if f.ket is not None:
        return complex(np.vdot(f.ket, op @ f.ket))
    return complex(op.multiply(f.rho.T).sum())


def _check_reducible(f: FockState, warn: bool = True):
    top = f.top_level_population()
    pops = f.mode_populations()
    for k, c in enumerate(f.cutoffs):
        occupied = 1.0 - pops[k][0]
        if c < 2 and occupied > 1e-12:
            raise CutoffError(
                f"mode {k} is populated but has cutoff {c}; fourth moments need cutoff >= 2")
    if warn and top.max() > LEAK_WARN:
        warnings.warn(f"population at the cutoff up to {top.max():.2e} (modes {np.flatnonzero(top > LEAK_WARN).tolist()})",
                      LeakageWarning, stacklevel=3)


def reduce_from_fock(f: FockState, warn: bool = True) -> ReducedState:
    """All reduced blocks of a truncated state.

    rho4 is traced normal ordered and commuted back with the exact
    commutator, so the a a^dag defect at the cutoff edge does not enter.
    """
    _check_reducible(f, warn)
    n = f.n_modes
    a = ladder_ops(n, f.cutoffs)
    ad = [x.conj().T.tocsr() for x in a]
    E = lambda op: _expect(f, op)
    alpha = np.array([E(a[k]) for k in range(n)])
    rho = np.array([[E(ad[kp] @ a[k]) for kp in range(n)] for k in range(n)])
    r = np.array([[E(a[kp] @ a[k]) for kp in range(n)] for k in range(n)])
    rho4 = np.zeros((n, n, n, n), complex)
    for nn in range(n):
        for m in range(n):
            cc = ad[nn] @ ad[m]
            for i in range(n):
                cca = cc @ a[i]
                for j in range(n):
                    # <a_n^dag a_i a_m^dag a_j> = <a_n^dag a_m^dag a_i a_j> + delta_im rho[j, n]
                    rho4[i, j, nn, m] = E(cca @ a[j]) + (rho[j, nn] if i == m else 0.0)
    beta = np.zeros((n, n, n), complex)
    for k1 in range(n):
        for k2 in range(n):
            l2 = ad[k1] @ a[k2]
            for k3 in range(n):
                beta[k2, k3, k1] = E(l2 @ a[k3])
    return ReducedState(rho, alpha, r, rho4.reshape(n * n, n * n), beta.reshape(n * n, n))


def reduce_extra_from_fock(f: FockState, warn: bool = True):
    """(m, q, zeta) blocks of the squeezing-extended state."""
    _check_reducible(f, warn)
    n = f.n_modes
    a = ladder_ops(n, f.cutoffs)
    ad = [x.conj().T.tocsr() for x in a]
    E = lambda op: _expect(f, op)
    m = np.zeros((n,) * 4, complex)
    q = np.zeros((n,) * 4, complex)
    z = np.zeros((n,) * 3, complex)
    for k1 in range(n):
        for k2 in range(n):
            c12 = ad[k1] @ a[k2]
            a12 = a[k1] @ a[k2]
            for k3 in range(n):
                c123 = c12 @ a[k3]
                a123 = a12 @ a[k3]
                z[k2, k3, k1] = E(a123)
                for k4 in range(n):
                    m[k2, k4, k1, k3] = E(c123 @ a[k4])
                    q[k2, k4, k1, k3] = E(a123 @ a[k4])
    return m.reshape(n * n, n * n), q.reshape(n * n, n * n), z.reshape(n * n, n)


# ---------------------------------------------------------------------------
# unitaries and channels

def _number_sectors(dims) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
    return sum(grids).ravel()


def lift_mode_unitary(u: np.ndarray, cutoffs) -> "BlockUnitary":
    """Fock lift U of a mode unitary with U^dag a_k U = sum_k' u[k,k'] a_k'.

    U = exp(-i G) with G = sum g[k,k'] a_k^dag a_k' and g = i log(u).  G
    conserves the total number, so U is block diagonal over number sectors;
    sectors with total number <= min(cutoff) are exact.
    """
    u = np.asarray(u, dtype=complex)
    n = u.shape[0]
    c = _cutoffs(cutoffs, n)
    g = 1j * sla.logm(u)
    g = 0.5 * (g + g.conj().T)
    a = ladder_ops(n, c)
    G = sum(g[k, kp] * (a[k].conj().T @ a[kp]) for k in range(n) for kp in range(n)
            if g[k, kp] != 0)
    sectors = _number_sectors([x + 1 for x in c])
    blocks = []
    Gd = G.tocsr() if sp.issparse(G) else sp.csr_matrix((len(sectors),) * 2)
    for s in np.unique(sectors):
        idx = np.flatnonzero(sectors == s)
        gs = Gd[idx][:, idx].toarray()
        blocks.append((idx, sla.expm(-1j * gs)))
    return BlockUnitary(len(sectors), blocks)


@dataclass(frozen=True, eq=False)
class BlockUnitary:
    dim: int
    blocks: list

    def dense(self) -> np.ndarray:
        U = np.zeros((self.dim, self.dim), complex)
        for idx, b in self.blocks:
            U[np.ix_(idx, idx)] = b
        return U

    def left(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x, dtype=complex)
        for idx, b in self.blocks:
            out[idx] = b @ x[idx]
        return out

    def conjugate(self, rho: np.ndarray) -> np.ndarray:
        """U rho U^dag."""
        y = self.left(rho)
        return self.left(y.conj().T).conj().T


def apply_unitary(f: FockState, u: np.ndarray) -> FockState:
    U = lift_mode_unitary(u, f.cutoffs)
    if f.ket is not None:
        return FockState(f.n_modes, f.cutoffs, ket=U.left(f.ket))
    return FockState(f.n_modes, f.cutoffs, rho=U.conjugate(f.rho))


def loss_channel(f: FockState, etas: Sequence[float]) -> FockState:
    """Pure-loss channel with transmissivity eta_k on each mode."""
    n = f.n_modes
    dims = f.dims
    rho = f.density().reshape(dims + dims)
    for k, eta in enumerate(etas):
        if not 0 <= eta <= 1:
            raise ValueError("efficiencies must lie in [0, 1]")
        if eta == 1:
            continue
        d = dims[k]
        out = np.zeros_like(rho)
        for l in range(d):
            K = np.zeros((d, d))
            for m in range(l, d):
                K[m - l, m] = math.sqrt(math.comb(m, l) * eta ** (m - l) * (1 - eta) ** l)
            t = np.tensordot(K, rho, axes=([1], [k]))
            t = np.moveaxis(t, 0, k)
            t = np.tensordot(t, K.conj(), axes=([n + k], [1]))
            out += np.moveaxis(t, -1, n + k)
        rho = out
    D = f.dim
    return FockState(n, f.cutoffs, rho=rho.reshape(D, D))


# ---------------------------------------------------------------------------
# master equation

class FockGenerator:
    """Compiled master-equation right-hand side on the truncated space."""

    def __init__(self, g: GeneratorSpec, cutoffs):
        n = g.n_modes
        c = _cutoffs(cutoffs, n)
        self.cutoffs = c
        a = ladder_ops(n, c)
        ad = [x.conj().T.tocsr() for x in a]
        D = a[0].shape[0]
        if D > MAX_DIM:
            raise DimensionError(f"oracle dimension {D} exceeds {MAX_DIM}")
        Z = sp.csr_matrix((D, D), dtype=complex)
        H = Z.copy()
        for k in range(n):
            for kp in range(n):
                if g.h[k, kp] != 0:
                    H = H + g.h[k, kp] * (ad[k] @ a[kp])
        if g.hs is not None:
            for k in range(n):
                for kp in range(n):
                    if g.hs[k, kp] != 0:
                        t = g.hs[k, kp] * (a[k] @ a[kp])
                        H = H + t + t.conj().T
        Pm = Z.copy()
        for k in range(n):
            if g.xi[k] != 0:
                Pm = Pm + g.xi[k] * ad[k] - np.conj(g.xi[k]) * a[k]
        # dissipators: sum gd[k,k'] a_k rho a_k'^dag and sum gu[k',k] a_k'^dag rho a_k,
        # applied as ladder shifts on the reshaped density matrix
        K = -1j * H + Pm
        for k in range(n):
            for kp in range(n):
                if g.gamma_down[k, kp] != 0:
                    K = K - 0.5 * g.gamma_down[k, kp] * (ad[kp] @ a[k])
                if g.gamma_up[kp, k] != 0:
                    K = K - 0.5 * g.gamma_up[kp, k] * (a[k] @ ad[kp])
        self.K = sp.csr_matrix(K)
        self.dims = tuple(x + 1 for x in c)
        self.gd = g.gamma_down if np.any(g.gamma_down != 0) else None
        self.gu = g.gamma_up if np.any(g.gamma_up != 0) else None
        self.scat = [(lift_mode_unitary(u, c), kap) for u, kap in g.scattering if kap > 0]
        self.dim = D

    def _shift(self, x, k, cols, up):
        """a_k (up=False) or a_k^dag (up=True) applied on rows; on columns the
        right product with a_k^dag (up=False) or a_k (up=True)."""
        dims = self.dims
        d = dims[k]
        lo, hi = int(np.prod(dims[:k])), int(np.prod(dims[k + 1:]))
        shape = (x.shape[0] * lo, d, hi) if cols else (lo, d, hi * x.shape[1])
        t = x.reshape(shape)
        out = np.zeros_like(t)
        w = np.sqrt(np.arange(1, d))[None, :, None]
        if up:
            out[:, 1:, :] = w * t[:, :-1, :]
        else:
            out[:, :-1, :] = w * t[:, 1:, :]
        return out.reshape(x.shape)

    def _sandwich(self, rho, m, up):
        """sum_{k,q} m[k,q] L_k rho R_q with L_k = a_k, R_q = a_q^dag (or both raised)."""
        n = len(self.dims)
        cols = np.stack([self._shift(rho, q, True, up) for q in range(n)])
        mixed = np.tensordot(m, cols, axes=([1], [0]))
        return sum(self._shift(mixed[k], k, False, up) for k in range(n))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        X = self.K @ rho
        out = X + X.conj().T
        if self.gd is not None:
            out += self._sandwich(rho, self.gd, False)
        if self.gu is not None:
            out += self._sandwich(rho, self.gu, True)
        for U, kap in self.scat:
            out += kap * (U.conjugate(rho) - rho)
        return out


def gkls_rhs(f: FockState, g: GeneratorSpec) -> np.ndarray:
    """d rho/dt of the truncated master equation (dense D x D)."""
    return FockGenerator(g, f.cutoffs)(f.density())


def evolve_fock(initial: FockState, g, t_grid, dt: Optional[float] = None,
                observer=None, leak_abort: float = LEAK_ABORT) -> Trajectory:
    """RK4 integration of the truncated master equation.

    ``observer`` maps each recorded FockState to what is stored (for example
    reduce_from_fock) so that large trajectories need not keep D x D matrices.
    """
    gen = as_piecewise(g)
    t = check_grid(t_grid)
    n, c = initial.n_modes, initial.cutoffs
    D = initial.dim
    cache = {}

    def make(spec):
        key = id(spec)
        if key not in cache:
            cache[key] = FockGenerator(spec, c)
        fg = cache[key]
        return lambda y: fg(y.reshape(D, D)).ravel()

    def check(fs, when):
        top = fs.top_level_population()
        if top.max() > leak_abort:
            raise LeakageError(
                f"population {top.max():.2e} at the cutoff of mode {int(np.argmax(top))} "
                f"at t={when:g}; raise the cutoff")

    obs = observer or (lambda s: s)
    y = initial.density().ravel()
    check(initial, t[0])
    states = [obs(initial)]
    for a_, b_ in zip(t[:-1], t[1:]):
        y = rk4_propagate(y, a_, b_, gen, make, dt)
        fs = FockState(n, c, rho=y.reshape(D, D))
        check(fs, b_)
        states.append(obs(fs))

    def propagate(state, t0, t1):
        yy = rk4_propagate(state.density().ravel(), t0, t1, gen, make, dt)
        return FockState(n, c, rho=yy.reshape(D, D))

    return Trajectory(t, states, propagate)
