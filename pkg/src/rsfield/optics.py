"""Passive optical elements, detector inefficiency and Hamiltonian diagonalization.

A mode unitary u acts as a_k -> sum_k' u[k,k'] a_k'.
"""
from __future__ import annotations

import numpy as np

from .core import ReducedState, check_unitary
from .evolution import GeneratorSpec, PiecewiseGenerator, as_piecewise


def beamsplitter_unitary(t_coeff: float, i: int, j: int, n_modes: int) -> np.ndarray:
    if not 0.0 <= t_coeff <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    if i == j or not (0 <= i < n_modes and 0 <= j < n_modes):
        raise ValueError(f"beamsplitter needs two distinct modes in range, got {i}, {j}")
    u = np.eye(n_modes, dtype=complex)
    st, sr = np.sqrt(t_coeff), np.sqrt(1.0 - t_coeff)
    u[i, i] = u[j, j] = st
    u[i, j] = u[j, i] = 1j * sr
    return u


def _transform_no(c: dict, u: np.ndarray) -> dict:
    """Push normal-ordered tensors through a'=u a (creation axes get u*)."""
    out = {}
    for (s, t), x in c.items():
        for ax in range(s + t):
            m = u.conj() if ax < s else u
            x = np.moveaxis(np.tensordot(m, x, axes=([1], [ax])), 0, ax)
        out[s, t] = x
    return out


def apply_mode_unitary(rs, u: np.ndarray):
    """Transform every block of a (possibly second-order) reduced state."""
    u = check_unitary(u)
    if hasattr(rs, "base"):
        from .second_order import SecondOrderState
        return SecondOrderState.from_no(_transform_no(rs.to_no(), u), rs.n_modes)
    uu = np.kron(u, u)
    ud = u.conj().T
    return ReducedState(u @ rs.rho @ ud, u @ rs.alpha, u @ rs.r @ u.T,
                        uu @ rs.rho4 @ uu.conj().T, uu @ rs.beta @ ud)


def phase_unitary(n_modes: int, i: int, dphi: float) -> np.ndarray:
    u = np.eye(n_modes, dtype=complex)
    u[i, i] = np.exp(-1j * dphi)
    return u


def phase_shifter(rs, i: int, dphi: float):
    """Instantaneous phase shift; equals evolving under dphi * n_i for unit time."""
    return apply_mode_unitary(rs, phase_unitary(rs.n_modes, i, dphi))


def phase_segment(g, i: int, phi_rate: float, t0: float, t_e: float) -> PiecewiseGenerator:
    """Add phi_rate * n_i to the Hamiltonian on [t0, t_e)."""
    gen = as_piecewise(g)
    n = gen.n_modes
    if not 0 <= i < n:
        raise ValueError(f"mode {i} out of range")
    h = np.zeros((n, n))
    h[i, i] = phi_rate
    return gen.add_on_interval(t0, t_e, GeneratorSpec(n, h=h))


def detector_efficiency(rs, etas):
    """Loss before detection with efficiency eta_k on mode k.

    Normal-ordered moments scale by sqrt(eta) per operator; rho4, which is not
    normal ordered, picks up an extra delta_im (1 - eta_i) term from that.
    """
    n = rs.n_modes
    etas = np.asarray(etas, dtype=float)
    if etas.shape != (n,):
        raise ValueError(f"need {n} efficiencies, got {etas.shape}")
    if np.any(etas < 0) or np.any(etas > 1):
        raise ValueError("efficiencies must lie in [0, 1]")
    s = np.diag(np.sqrt(etas))
    second = hasattr(rs, "base")
    from .second_order import SecondOrderState, from_reduced
    st = rs if second else from_reduced(rs)
    out = SecondOrderState.from_no(_transform_no(st.to_no(), s), n)
    return out if second else out.base


def diagonalize_hamiltonian(h: np.ndarray, tol: float = 1e-12):
    """(u_d, h_d) with u_d h u_d^dag = h_d diagonal, eigenvalues ascending.

    Within a degenerate eigenspace the basis is the Gram-Schmidt image of the
    standard basis vectors taken in index order, with a real positive leading
    component, so diagonal input returns a permutation.
    """
    h = np.asarray(h, dtype=complex)
    if np.max(np.abs(h - h.conj().T), initial=0) > 1e-10:
        raise ValueError("h must be Hermitian")
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    n = len(w)
    scale = max(1.0, float(np.max(np.abs(w), initial=0)))
    cols = []
    k = 0
    while k < n:
        e = k
        while e + 1 < n and abs(w[e + 1] - w[k]) <= 1e-9 * scale:
            e += 1
        V = v[:, k:e + 1]
        proj = V @ V.conj().T
        basis = []
        for idx in range(n):
            x = proj[:, idx].copy()
            for b in basis:
                x -= b * np.vdot(b, x)
            nx = np.linalg.norm(x)
            if nx > 1e-8:
                basis.append(x / nx)
            if len(basis) == e - k + 1:
                break
        cols.extend(basis)
        k = e + 1
    vecs = []
    for x in cols:
        lead = x[np.argmax(np.abs(x) > tol)]
        vecs.append(x * (abs(lead) / lead))
    V = np.array(vecs).T
    u_d = V.conj().T
    h_d = np.real(np.diag(u_d @ h @ V))
    return u_d, np.diag(h_d)
