"""PPT on the reduced two-qudit state, covariance-matrix PPT, Q parameters, entropy."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import xlogy

from .core import (Bipartition, RSFError, ReducedState, TwoQuditState, hermiticity_defect,
                   partial_transpose_second, two_qudit)

TOL_DETECT = 1e-10
HERMITICITY_GUARD = 1e-8


class EmptyMode(RSFError, ValueError):
    pass


class HermiticityError(RSFError):
    pass


@dataclass(frozen=True)
class PptReport:
    eigenvalues: tuple
    min_eigenvalue: float
    entangled: bool
    inconclusive: bool
    trace_norm: float


def _herm_eigvals(m: np.ndarray, what: str) -> np.ndarray:
    defect = hermiticity_defect(m)
    if defect > HERMITICITY_GUARD:
        raise HermiticityError(f"{what} is not Hermitian (defect {defect:.2e})")
    return np.linalg.eigvalsh(0.5 * (m + m.conj().T))


def ppt_report(s: TwoQuditState, dims=None) -> PptReport:
    if dims is not None and tuple(dims) != (s.dim_a, s.dim_b):
        if dims[0] * dims[1] != s.dim_a * s.dim_b:
            raise ValueError(f"dims {dims} do not match a {s.matrix.shape[0]}-dim state")
        s = TwoQuditState(dims[0], dims[1], s.matrix, s.trace_norm)
    ev = _herm_eigvals(partial_transpose_second(s), "partial transpose")
    lo = float(ev[0])
    return PptReport(tuple(float(x) for x in ev), lo, lo < -TOL_DETECT,
                     -TOL_DETECT <= lo < 0, s.trace_norm)


def _base(state) -> ReducedState:
    return state.base if hasattr(state, "base") else state


def min_ppt_eigenvalue(state, bp: Bipartition) -> float:
    return ppt_report(two_qudit(_base(state), bp)).min_eigenvalue


def critical_time(trajectory, bp: Bipartition, tol: float = 1e-8) -> Optional[float]:
    """First zero crossing of the minimum PPT eigenvalue, refined by bisection."""
    f = [min_ppt_eigenvalue(s, bp) for s in trajectory.states]
    times = trajectory.times
    for k in range(len(f) - 1):
        if f[k] == 0.0:
            return float(times[k])
        if (f[k] < 0) != (f[k + 1] < 0):
            a, b = float(times[k]), float(times[k + 1])
            sa, fa = trajectory.states[k], f[k]
            if trajectory.propagate is None:
                return a - fa * (b - a) / (f[k + 1] - fa)
            while b - a > tol:
                mid = 0.5 * (a + b)
                sm = trajectory.propagate(sa, a, mid)
                fm = min_ppt_eigenvalue(sm, bp)
                if (fm < 0) == (fa < 0):
                    a, sa, fa = mid, sm, fm
                else:
                    b = mid
            return 0.5 * (a + b)
    return None


# ---------------------------------------------------------------------------
# covariance matrix

@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Quadrature covariance, ordering (x_1, p_1, ..., x_N, p_N)."""
    v: np.ndarray

    @property
    def n_modes(self):
        return self.v.shape[0] // 2


def symplectic_form(n: int) -> np.ndarray:
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def covariance_from_reduced(rs: ReducedState) -> CovarianceMatrix:
    n = rs.n_modes
    al = rs.alpha
    rc = rs.r - np.outer(al, al)               # <da_k' da_k> at [k, k']
    pc = rs.rho - np.outer(al, al.conj())      # <da_k'^dag da_k> at [k, k']
    eye = np.eye(n)
    # K[u, v] = <dO_u dO_v> over O = (a_1..a_N, a_1^dag..a_N^dag)
    K = np.block([[rc.T, pc + eye], [pc.T, rc.conj()]])
    s = 1 / np.sqrt(2)
    T = np.zeros((2 * n, 2 * n), complex)
    for j in range(n):
        T[2 * j, j], T[2 * j, n + j] = s, s              # x = (a + a^dag)/sqrt2
        T[2 * j + 1, j], T[2 * j + 1, n + j] = -1j * s, 1j * s  # p = i(a^dag - a)/sqrt2
    v = np.real(T @ K @ T.T)
    return CovarianceMatrix(0.5 * (v + v.T))


def covariance_ppt(cov: CovarianceMatrix, bp: Bipartition) -> np.ndarray:
    """Eigenvalues of Q V Q - (i/2) J with momenta of party B flipped.

    Modes outside both parties are traced out (rows and columns dropped).
    """
    bp.check(cov.n_modes)
    modes = sorted(bp.set_a + bp.set_b)
    idx = [2 * k + e for k in modes for e in (0, 1)]
    v = cov.v[np.ix_(idx, idx)]
    q = np.ones(len(idx))
    for pos, k in enumerate(modes):
        if k in bp.set_b:
            q[2 * pos + 1] = -1.0
    m = (q[:, None] * v * q[None, :]) - 0.5j * symplectic_form(len(modes))
    return np.linalg.eigvalsh(m)


# ---------------------------------------------------------------------------
# photon statistics

def _occupation(rs, i, tol):
    n = float(np.real(rs.rho[i, i]))
    if n <= tol:
        raise EmptyMode(f"mode {i} has occupation {n:.3g}; the Q parameter is undefined")
    return n


def gen_q(rs: ReducedState, i: int, j: int, tol: float = 1e-12) -> float:
    """Q_ij = (<a_j^dag a_i a_i^dag a_j> - rho_ij rho_ji) / <n_j> - 1."""
    state = _base(rs)
    N = state.n_modes
    nj = _occupation(state, j, tol)
    num = state.rho4[i * N + j, j * N + i] - state.rho[i, j] * state.rho[j, i]
    return float(np.real(num)) / nj - 1.0


def mandel_q(rs: ReducedState, i: int, tol: float = 1e-12) -> float:
    return gen_q(rs, i, i, tol)


def rsf_entropy(rs: ReducedState) -> float:
    state = _base(rs)
    ra = state.rho - np.outer(state.alpha, state.alpha.conj())
    lam = np.clip(np.linalg.eigvalsh(0.5 * (ra + ra.conj().T)), 0.0, None)
    return float(np.sum(xlogy(lam + 1, lam + 1) - xlogy(lam, lam)))
