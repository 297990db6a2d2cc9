"""Reduced-state containers, index conventions and tensor reshuffling.

Composite index convention: a pair of mode indices (i, j), both zero-based,
is stored at ``i * N + j``.  With that convention

    rho[k, k']            = <a_k'^dag a_k>
    alpha[k]              = <a_k>
    r[k, k']              = <a_k' a_k>
    rho4[(i,j), (n,m)]    = <a_n^dag a_i a_m^dag a_j>
    beta[(k2,k3), k1]     = <a_k1^dag a_k2 a_k3>
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

TOL = 1e-10
TOL_TRACE = 1e-12


class RSFError(Exception):
    """Base class for library errors."""


class DimensionError(RSFError, ValueError):
    pass


class TracelessState(RSFError):
    """Projected block has (numerically) zero trace."""


class BipartitionError(RSFError, ValueError):
    pass


def composite_index(i: int, j: int, n_modes: int) -> int:
    return i * n_modes + j


def _frozen(a, shape, name):
    a = np.array(a, dtype=complex)
    if a.shape != shape:
        raise DimensionError(f"{name} has shape {a.shape}, expected {shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ReducedState:
    rho: np.ndarray
    alpha: np.ndarray
    r: np.ndarray
    rho4: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        n = np.shape(self.alpha)[0]
        object.__setattr__(self, "rho", _frozen(self.rho, (n, n), "rho"))
        object.__setattr__(self, "alpha", _frozen(self.alpha, (n,), "alpha"))
        object.__setattr__(self, "r", _frozen(self.r, (n, n), "r"))
        object.__setattr__(self, "rho4", _frozen(self.rho4, (n * n, n * n), "rho4"))
        object.__setattr__(self, "beta", _frozen(self.beta, (n * n, n), "beta"))

    @property
    def n_modes(self) -> int:
        return self.alpha.shape[0]

    @classmethod
    def zeros(cls, n_modes: int) -> "ReducedState":
        n = n_modes
        return cls(np.zeros((n, n)), np.zeros(n), np.zeros((n, n)),
                   np.zeros((n * n, n * n)), np.zeros((n * n, n)))

    def tensor4(self) -> np.ndarray:
        """rho4 as T[i, j, n, m]."""
        n = self.n_modes
        return self.rho4.reshape(n, n, n, n)

    def tensor3(self) -> np.ndarray:
        """beta as B[k2, k3, k1]."""
        n = self.n_modes
        return self.beta.reshape(n, n, n)

    # flat packing, used by the integrators
    def pack(self) -> np.ndarray:
        return np.concatenate([self.rho.ravel(), self.alpha, self.r.ravel(),
                               self.rho4.ravel(), self.beta.ravel()])

    @classmethod
    def unpack(cls, v: np.ndarray, n_modes: int) -> "ReducedState":
        n = n_modes
        sizes = [n * n, n, n * n, n ** 4, n ** 3]
        parts = np.split(np.asarray(v), np.cumsum(sizes)[:-1])
        return cls(parts[0].reshape(n, n), parts[1], parts[2].reshape(n, n),
                   parts[3].reshape(n * n, n * n), parts[4].reshape(n * n, n))

    def blocks(self) -> dict:
        return {"rho": self.rho, "alpha": self.alpha, "r": self.r,
                "rho4": self.rho4, "beta": self.beta}

    def allclose(self, other: "ReducedState", atol=1e-12) -> bool:
        return all(np.allclose(a, b, rtol=0, atol=atol)
                   for a, b in zip(self.blocks().values(), other.blocks().values()))

    def max_deviation(self, other: "ReducedState") -> dict:
        return {k: float(np.max(np.abs(a - other.blocks()[k]), initial=0.0))
                for k, a in self.blocks().items()}

    def _combine(self, other, f):
        return ReducedState(*(f(a, b) for a, b in zip(self.blocks().values(),
                                                      other.blocks().values())))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, c):
        return ReducedState(*(c * a for a in self.blocks().values()))

    __rmul__ = __mul__


@dataclass(frozen=True)
class Bipartition:
    set_a: tuple
    set_b: tuple

    def __post_init__(self):
        a = tuple(sorted(int(i) for i in self.set_a))
        b = tuple(sorted(int(i) for i in self.set_b))
        if not a or not b:
            raise BipartitionError("both parties need at least one mode")
        if len(set(a)) != len(a) or len(set(b)) != len(b):
            raise BipartitionError("repeated mode index")
        if set(a) & set(b):
            raise BipartitionError(f"index sets overlap: {sorted(set(a) & set(b))}")
        object.__setattr__(self, "set_a", a)
        object.__setattr__(self, "set_b", b)

    def check(self, n_modes: int):
        for k in self.set_a + self.set_b:
            if not 0 <= k < n_modes:
                raise BipartitionError(f"mode {k} out of range for {n_modes} modes")

    @property
    def dims(self):
        return len(self.set_a), len(self.set_b)


@dataclass(frozen=True, eq=False)
class TwoQuditState:
    dim_a: int
    dim_b: int
    matrix: np.ndarray
    trace_norm: float

    def __post_init__(self):
        d = self.dim_a * self.dim_b
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (d, d):
            raise DimensionError(f"matrix shape {m.shape} does not match {self.dim_a}x{self.dim_b}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def swap_matrix(d: int) -> np.ndarray:
    """Permutation tau on C^d (x) C^d exchanging the two tensor factors."""
    if d < 1:
        raise DimensionError("dimension must be positive")
    tau = np.zeros((d * d, d * d))
    m, n = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    tau[(m + d * n).ravel(), (d * m + n).ravel()] = 1.0
    return tau


def _side(n2: int) -> int:
    d = int(round(np.sqrt(n2)))
    if d * d != n2:
        raise DimensionError(f"{n2} is not a square dimension")
    return d


def tau_left(o: np.ndarray) -> np.ndarray:
    o = np.asarray(o)
    return swap_matrix(_side(o.shape[0])) @ o


def tau_right(o: np.ndarray) -> np.ndarray:
    o = np.asarray(o)
    return o @ swap_matrix(_side(o.shape[-1]))


def partial_transpose_second(s: TwoQuditState) -> np.ndarray:
    da, db = s.dim_a, s.dim_b
    t = s.matrix.reshape(da, db, da, db).transpose(0, 3, 2, 1)
    return t.reshape(da * db, da * db)


def project_bipartition(rs: ReducedState, bp: Bipartition) -> np.ndarray:
    bp.check(rs.n_modes)
    a, b = np.array(bp.set_a), np.array(bp.set_b)
    sel = (a[:, None] * rs.n_modes + b[None, :]).ravel()
    return rs.rho4[np.ix_(sel, sel)].copy()


def normalize_projected(m: np.ndarray, dims=None, tol_trace: float = TOL_TRACE) -> TwoQuditState:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError("projected block must be square")
    tr = np.trace(m)
    if abs(tr) <= tol_trace:
        raise TracelessState(
            "projected block has zero trace: <N_A N_B> = 0, no two-party boson "
            "number correlations are visible in rho4")
    if dims is None:
        d = _side(m.shape[0])
        dims = (d, d)
    return TwoQuditState(dims[0], dims[1], m / tr, float(tr.real))


def two_qudit(rs: ReducedState, bp: Bipartition) -> TwoQuditState:
    """Project and normalize in one step."""
    return normalize_projected(project_bipartition(rs, bp), bp.dims)


def expectation(rs: ReducedState, o) -> complex:
    """tr(rho o) for an N x N weight, tr(rho4 o4) for an N^2 x N^2 weight."""
    o = np.asarray(o)
    n = rs.n_modes
    if o.shape == (n, n):
        return complex(np.sum(rs.rho * o.T))
    if o.shape == (n * n, n * n):
        return complex(np.sum(rs.rho4 * o.T))
    raise DimensionError(f"observable shape {o.shape} fits neither order for N={n}")


# ---------------------------------------------------------------------------
# product composition via ordered-word factorization

def _word_tensor(rs: ReducedState, kinds: str, proj: np.ndarray) -> np.ndarray:
    """Ordered moment <o_1 ... o_L> with o = a^dag for 'c' and a for 'a'.

    Axes follow the operator order.  ``proj`` is the identity restricted to the
    subsystem, standing in for the commutator delta.
    """
    rho, al, r = rs.rho, rs.alpha, rs.r
    B = rs.tensor3()
    if kinds == "":
        return np.array(1.0 + 0j)
    if kinds == "a":
        return al
    if kinds == "c":
        return al.conj()
    if kinds == "ca":
        return rho.T
    if kinds == "ac":
        return rho + proj
    if kinds == "cc":
        return r.conj()
    if kinds == "aa":
        return r
    if kinds == "cac":  # <a_n^dag a_i a_m^dag> -> [n, i, m]
        return (np.einsum("mni->nim", B.conj())
                + np.einsum("im,n->nim", proj, al.conj()))
    if kinds == "caa":  # <a_n^dag a_i a_j> -> [n, i, j]
        return np.einsum("ijn->nij", B)
    if kinds == "cca":  # <a_n^dag a_m^dag a_j> -> [n, m, j]
        return np.einsum("mnj->nmj", B.conj())
    if kinds == "aca":  # <a_i a_m^dag a_j> -> [i, m, j]
        return (np.einsum("ijm->imj", B)
                + np.einsum("im,j->imj", proj, al))
    if kinds == "caca":  # <a_n^dag a_i a_m^dag a_j> -> [n, i, m, j]
        return np.einsum("ijnm->nimj", rs.tensor4())
    raise ValueError(f"unsupported operator word {kinds!r}")


def _embed(rs: ReducedState, offset: int, n: int) -> ReducedState:
    k = rs.n_modes
    sl = slice(offset, offset + k)
    rho = np.zeros((n, n), complex); rho[sl, sl] = rs.rho
    al = np.zeros(n, complex); al[sl] = rs.alpha
    r = np.zeros((n, n), complex); r[sl, sl] = rs.r
    t4 = np.zeros((n,) * 4, complex); t4[sl, sl, sl, sl] = rs.tensor4()
    b3 = np.zeros((n,) * 3, complex); b3[sl, sl, sl] = rs.tensor3()
    return ReducedState(rho, al, r, t4.reshape(n * n, n * n), b3.reshape(n * n, n))


def _factorized_word(parts, kinds: str) -> np.ndarray:
    """Sum over all assignments of word positions to the product factors."""
    letters = "abcdefgh"[: len(kinds)]
    out = 0
    L = len(kinds)
    for mask in range(len(parts) ** L):
        owner = [(mask // len(parts) ** p) % len(parts) for p in range(L)]
        ops, subs = [], []
        for f, (st, proj) in enumerate(parts):
            pos = [p for p in range(L) if owner[p] == f]
            sub = "".join(kinds[p] for p in pos)
            ops.append(_word_tensor(st, sub, proj))
            subs.append("".join(letters[p] for p in pos))
        out = out + np.einsum(",".join(subs) + "->" + letters, *ops)
    return out


def compose_product(a: ReducedState, b: ReducedState) -> ReducedState:
    """Reduced state of rho_A (x) rho_B; modes of ``a`` come first."""
    na, nb = a.n_modes, b.n_modes
    n = na + nb
    pa = np.diag(np.r_[np.ones(na), np.zeros(nb)])
    parts = [(_embed(a, 0, n), pa), (_embed(b, na, n), np.eye(n) - pa)]
    rho = _factorized_word(parts, "ca").T
    alpha = a.alpha.tolist() + b.alpha.tolist()
    r = _factorized_word(parts, "aa")
    t4 = _factorized_word(parts, "caca")  # [n, i, m, j]
    rho4 = np.einsum("nimj->ijnm", t4).reshape(n * n, n * n)
    t3 = _factorized_word(parts, "caa")  # [k1, k2, k3]
    beta = np.einsum("abc->bca", t3).reshape(n * n, n)
    return ReducedState(rho, np.array(alpha), r, rho4, beta)


def hermiticity_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T), initial=0.0))


def check_unitary(u: np.ndarray, tol: float = 1e-10, name: str = "u") -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionError(f"{name} must be square")
    if np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) > tol:
        raise ValueError(f"{name} is not unitary within {tol}")
    return u


def modes_tuple(modes: Sequence[int], n_modes: int) -> tuple:
    out = tuple(int(k) for k in modes)
    if len(set(out)) != len(out):
        raise ValueError(f"mode indices must be distinct: {out}")
    for k in out:
        if not 0 <= k < n_modes:
            raise ValueError(f"mode {k} out of range for {n_modes} modes")
    return out
