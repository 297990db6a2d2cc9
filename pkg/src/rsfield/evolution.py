"""Reduced equations of motion and the fixed-step integrator.

The master equation behind the reduced equations is

    d rho_F/dt = -i[H, rho_F] + [sum_k xi_k a_k^dag - xi_k^* a_k, rho_F]
                 + sum_j kappa_j (U_j rho_F U_j^dag - rho_F)
                 + sum_kk' G_dn[k,k'] (a_k rho_F a_k'^dag - 1/2 {a_k'^dag a_k, rho_F})
                 + sum_kk' G_up[k',k] (a_k'^dag rho_F a_k - 1/2 {a_k a_k'^dag, rho_F})

with H = sum h[k,k'] a_k^dag a_k' and U_j^dag a_k U_j = sum_k' u_j[k,k'] a_k'.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (Bipartition, DimensionError, RSFError, ReducedState,
                   check_unitary, swap_matrix)


class StepSizeError(RSFError, ValueError):
    pass


class NumericalError(RSFError, FloatingPointError):
    pass


class NonlocalGenerator(RSFError, ValueError):
    pass


def _mat(x, n, name):
    a = np.zeros((n, n), complex) if x is None else np.array(x, dtype=complex)
    if a.shape != (n, n):
        raise DimensionError(f"{name} has shape {a.shape}, expected {(n, n)}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    n_modes: int
    h: np.ndarray = None
    xi: np.ndarray = None
    gamma_up: np.ndarray = None
    gamma_down: np.ndarray = None
    scattering: tuple = ()
    hs: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.n_modes
        tol = 1e-10
        h = _mat(self.h, n, "h")
        if np.max(np.abs(h - h.conj().T), initial=0) > tol:
            raise ValueError("h must be Hermitian")
        xi = np.zeros(n, complex) if self.xi is None else np.array(self.xi, dtype=complex)
        if xi.shape != (n,):
            raise DimensionError(f"xi has shape {xi.shape}, expected {(n,)}")
        xi.flags.writeable = False
        gu = _mat(self.gamma_up, n, "gamma_up")
        gd = _mat(self.gamma_down, n, "gamma_down")
        for name, g in (("gamma_up", gu), ("gamma_down", gd)):
            if np.max(np.abs(g - g.conj().T), initial=0) > tol:
                raise ValueError(f"{name} must be Hermitian")
            if np.linalg.eigvalsh(g).min(initial=0) < -tol:
                raise ValueError(f"{name} must be positive semidefinite")
        scat = []
        for u, kappa in self.scattering:
            u = check_unitary(u, name="scattering unitary")
            if u.shape != (n, n):
                raise DimensionError("scattering unitary has wrong size")
            if kappa < 0:
                raise ValueError("scattering rate must be >= 0")
            u = u.copy()
            u.flags.writeable = False
            scat.append((u, float(kappa)))
        hs = None
        if self.hs is not None:
            hs = _mat(self.hs, n, "hs")
            if np.max(np.abs(hs - hs.T), initial=0) > tol:
                raise ValueError("hs must be symmetric")
        for k, v in (("h", h), ("xi", xi), ("gamma_up", gu), ("gamma_down", gd),
                     ("scattering", tuple(scat)), ("hs", hs)):
            object.__setattr__(self, k, v)

    @property
    def has_squeezing(self) -> bool:
        return self.hs is not None and bool(np.any(self.hs != 0))

    def rate(self) -> float:
        """Norm bound entering the default step rule."""
        r = max(np.linalg.norm(self.h, 2),
                np.linalg.norm(self.gamma_up, 2) + np.linalg.norm(self.gamma_down, 2),
                sum(k for _, k in self.scattering), 1.0)
        if self.hs is not None:
            r = max(r, 2 * np.linalg.norm(self.hs, 2))
        return float(r)

    def default_dt(self) -> float:
        return 0.01 / self.rate()

    def with_(self, **kw) -> "GeneratorSpec":
        return replace(self, **kw)

    def __add__(self, other: "GeneratorSpec") -> "GeneratorSpec":
        hs = None
        if self.hs is not None or other.hs is not None:
            hs = (0 if self.hs is None else self.hs) + (0 if other.hs is None else other.hs)
        return GeneratorSpec(self.n_modes, self.h + other.h, self.xi + other.xi,
                             self.gamma_up + other.gamma_up,
                             self.gamma_down + other.gamma_down,
                             self.scattering + other.scattering, hs)


@dataclass(frozen=True)
class ThermalBathSpec:
    n_omega: float
    gamma_omega: float
    coupled_modes: tuple

    def __post_init__(self):
        if self.n_omega < 0:
            raise ValueError("N(omega) must be >= 0")
        if self.gamma_omega <= 0:
            raise ValueError("gamma_omega must be > 0")
        object.__setattr__(self, "coupled_modes", tuple(int(k) for k in self.coupled_modes))


def bath_to_gamma(b: ThermalBathSpec, n_modes: int):
    up = np.zeros((n_modes, n_modes))
    down = np.zeros((n_modes, n_modes))
    for k in b.coupled_modes:
        if not 0 <= k < n_modes:
            raise ValueError(f"bath mode {k} out of range")
        up[k, k] = b.gamma_omega * b.n_omega
        down[k, k] = b.gamma_omega * (b.n_omega + 1)
    return up, down


def bath_generator(b: ThermalBathSpec, n_modes: int, h=None) -> GeneratorSpec:
    up, down = bath_to_gamma(b, n_modes)
    return GeneratorSpec(n_modes, h=h, gamma_up=up, gamma_down=down)


# ---------------------------------------------------------------------------
# right-hand side

class _Compiled:
    """Generator-dependent matrices reused at every evaluation."""

    def __init__(self, g: GeneratorSpec):
        n = g.n_modes
        self.n = n
        self.g = g
        eye = np.eye(n)
        self.eye = eye
        self.tau = swap_matrix(n)
        G = g.gamma_up - g.gamma_down.T
        self.A = -1j * g.h + 0.5 * G
        self.A1 = np.kron(self.A, eye)
        self.A2 = self.A1 + np.kron(eye, self.A)
        self.A2h = self.A2.conj().T
        self.Ah = self.A.conj().T
        self.gu_src = self.tau @ np.kron(g.gamma_up, eye)
        self.scat = [(u, np.kron(u, u), k) for u, k in g.scattering]
        self.pump = bool(np.any(g.xi != 0))

    def __call__(self, rho, alpha, r, rho4, beta):
        g, tau, A = self.g, self.tau, self.A
        xi, gu, gd = g.xi, g.gamma_up, g.gamma_down

        d_rho = A @ rho + rho @ self.Ah + gu
        d_alpha = A @ alpha + xi
        X = A @ r + np.outer(xi, alpha)
        d_r = X + X.T

        d4 = self.A2 @ rho4 + rho4 @ self.A2h
        d4 += tau @ (np.kron(rho, gd.T) + np.kron(gu, rho))
        d4 += np.kron(gu, rho) + np.kron(rho, gu) + self.gu_src

        db = self.A2 @ beta + beta @ self.Ah
        gsrc = np.kron(gu, alpha[:, None])
        db += gsrc + tau @ gsrc

        if self.pump:
            d_rho += np.outer(alpha, xi.conj()) + np.outer(xi, alpha.conj())
            xb = np.kron(beta.conj().T, xi[:, None])
            bx = np.kron(beta, xi.conj()[None, :])
            d4 += xb + tau @ xb + bx + bx @ tau
            d4 += tau @ np.kron(np.outer(xi, alpha.conj()), self.eye)
            d4 += np.kron(self.eye, np.outer(alpha, xi.conj())) @ tau
            rx = np.kron(rho, xi[:, None])
            db += rx + tau @ rx + np.outer(r.ravel(), xi.conj())

        for u, uu, k in self.scat:
            d_rho += k * (u @ rho @ u.conj().T - rho)
            d_alpha += k * (u @ alpha - alpha)
            d_r += k * (u @ r @ u.T - r)
            d4 += k * (uu @ rho4 @ uu.conj().T - rho4)
            db += k * (uu @ beta @ u.conj().T - beta)
        return d_rho, d_alpha, d_r, d4, db


def rhs(rs: ReducedState, g: GeneratorSpec) -> ReducedState:
    """Time derivative of every block of the reduced state."""
    if g.has_squeezing:
        raise ValueError("squeezing generators need rsfield.second_order")
    if rs.n_modes != g.n_modes:
        raise DimensionError(f"state has {rs.n_modes} modes, generator {g.n_modes}")
    return ReducedState(*_Compiled(g)(rs.rho, rs.alpha, rs.r, rs.rho4, rs.beta))


def _block_sets(bp: Bipartition, n):
    rest = tuple(k for k in range(n) if k not in bp.set_a + bp.set_b)
    return [s for s in (bp.set_a, bp.set_b, rest) if s]


def check_local(g: GeneratorSpec, bp: Bipartition, tol: float = 1e-10):
    """Raise NonlocalGenerator unless every generator matrix is block diagonal."""
    n = g.n_modes
    bp.check(n)
    label = np.empty(n, int)
    for b, s in enumerate(_block_sets(bp, n)):
        label[list(s)] = b
    off = label[:, None] != label[None, :]
    mats = [("h", g.h), ("gamma_up", g.gamma_up), ("gamma_down", g.gamma_down)]
    mats += [(f"scattering[{j}]", u) for j, (u, _) in enumerate(g.scattering)]
    if g.hs is not None:
        mats.append(("hs", g.hs))
    for name, m in mats:
        bad = np.abs(m) * off
        if bad.max(initial=0) > tol:
            i, j = np.unravel_index(np.argmax(bad), bad.shape)
            raise NonlocalGenerator(
                f"{name}[{i},{j}] = {m[i, j]:.3g} couples modes across the bipartition")


def rhs_projected(p: np.ndarray, rho: np.ndarray, g: GeneratorSpec, bp: Bipartition,
                  alpha=None, beta=None) -> np.ndarray:
    """Closed evolution of the projected block for a local generator.

    Pumping couples the block to alpha and beta, which must then be supplied.
    """
    check_local(g, bp)
    a, b = list(bp.set_a), list(bp.set_b)
    A = -1j * g.h + 0.5 * (g.gamma_up - g.gamma_down.T)
    ia, ib = np.eye(len(a)), np.eye(len(b))
    A2 = np.kron(A[np.ix_(a, a)], ib) + np.kron(ia, A[np.ix_(b, b)])
    gu = g.gamma_up
    d = A2 @ p + p @ A2.conj().T
    d += np.kron(gu[np.ix_(a, a)], rho[np.ix_(b, b)])
    d += np.kron(rho[np.ix_(a, a)], gu[np.ix_(b, b)])
    for u, k in g.scattering:
        uu = np.kron(u[np.ix_(a, a)], u[np.ix_(b, b)])
        d += k * (uu @ p @ uu.conj().T - p)
    if np.any(g.xi != 0):
        if alpha is None or beta is None:
            raise ValueError("pumped generator: the projected block needs alpha and beta")
        n = g.n_modes
        zero4 = np.zeros((n * n, n * n))
        full = _Compiled(g.with_(gamma_up=None, gamma_down=None, h=None, scattering=()))
        d4 = full(np.zeros((n, n)), np.asarray(alpha), np.zeros((n, n)), zero4,
                  np.asarray(beta))[3]
        sel = (np.array(a)[:, None] * n + np.array(b)[None, :]).ravel()
        d += d4[np.ix_(sel, sel)]
    return d


# ---------------------------------------------------------------------------
# time dependence and integration

@dataclass(frozen=True, eq=False)
class PiecewiseGenerator:
    """Generator constant on [breaks[k-1], breaks[k]); specs has one more entry than breaks."""
    breaks: tuple
    specs: tuple

    def __post_init__(self):
        if len(self.specs) != len(self.breaks) + 1:
            raise ValueError("need len(breaks) + 1 generator specs")
        if any(b2 <= b1 for b1, b2 in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breakpoints must increase")

    @classmethod
    def constant(cls, g: GeneratorSpec) -> "PiecewiseGenerator":
        return cls((), (g,))

    @property
    def n_modes(self):
        return self.specs[0].n_modes

    def at(self, t: float) -> GeneratorSpec:
        return self.specs[int(np.searchsorted(self.breaks, t, side="right"))]

    def pieces(self, t0: float, t1: float):
        """Yield (start, end, spec) covering [t0, t1]."""
        cuts = [t0] + [b for b in self.breaks if t0 < b < t1] + [t1]
        for a, b in zip(cuts, cuts[1:]):
            yield a, b, self.at(0.5 * (a + b))

    def add_on_interval(self, t0: float, t1: float, extra: GeneratorSpec) -> "PiecewiseGenerator":
        if t1 <= t0:
            raise ValueError("interval end must follow its start")
        breaks = sorted(set(self.breaks) | {t0, t1})
        reps = [breaks[0] - 1.0] + [0.5 * (a + b) for a, b in zip(breaks, breaks[1:])]
        reps.append(breaks[-1] + 1.0)
        specs = [self.at(x) + extra if t0 <= x < t1 else self.at(x) for x in reps]
        return PiecewiseGenerator(tuple(breaks), tuple(specs))

    def then(self, t_switch: float, g: GeneratorSpec) -> "PiecewiseGenerator":
        """Replace the generator from ``t_switch`` on."""
        breaks = [b for b in self.breaks if b < t_switch] + [t_switch]
        specs = list(self.specs[: len(breaks)]) + [g]
        return PiecewiseGenerator(tuple(breaks), tuple(specs))


def as_piecewise(g) -> PiecewiseGenerator:
    return g if isinstance(g, PiecewiseGenerator) else PiecewiseGenerator.constant(g)


def rk4_propagate(y: np.ndarray, t0: float, t1: float, gen: PiecewiseGenerator,
                  make_rhs: Callable, dt: Optional[float] = None,
                  rate: Callable = GeneratorSpec.rate) -> np.ndarray:
    """Fixed-step classical RK4 from t0 to t1, restarting at every breakpoint."""
    for a, b, spec in gen.pieces(t0, t1):
        length = b - a
        if length <= 0:
            continue
        lam = rate(spec)
        step = 0.01 / lam if dt is None else dt
        if not step > 0:
            raise StepSizeError(f"step size must be positive, got {step}")
        if step * lam > 1.0:
            raise StepSizeError(
                f"step {step:g} too large for generator rate {lam:g} (needs dt*rate <= 1)")
        nsteps = max(1, math.ceil(length / step - 1e-9))
        hstep = length / nsteps
        f = make_rhs(spec)
        for k in range(nsteps):
            k1 = f(y)
            k2 = f(y + 0.5 * hstep * k1)
            k3 = f(y + 0.5 * hstep * k2)
            k4 = f(y + hstep * k3)
            y = y + (hstep / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NumericalError(
                f"non-finite state between t={a:g} and t={b:g} (step {hstep:g})")
    return y


def check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1-d sequence")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return t


@dataclass(eq=False)
class Trajectory:
    """States at the grid times plus the means to re-integrate locally."""
    times: np.ndarray
    states: list
    propagate: Callable = field(repr=False, default=None)

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(zip(self.times, self.states))


def _unpacked_rhs_factory(n):
    sizes = np.cumsum([n * n, n, n * n, n ** 4, n ** 3])[:-1]

    def make(spec):
        if spec.has_squeezing:
            raise ValueError("squeezing generators need rsfield.second_order")
        c = _Compiled(spec)

        def f(y):
            rho, al, r, r4, b = np.split(y, sizes)
            out = c(rho.reshape(n, n), al, r.reshape(n, n), r4.reshape(n * n, n * n),
                    b.reshape(n * n, n))
            return np.concatenate([x.ravel() for x in out])
        return f
    return make


def integrate(initial: ReducedState, g, t_grid: Sequence[float], method: str = "rk4",
              dt: Optional[float] = None) -> Trajectory:
    """Integrate the reduced equations, recording the state at every grid time.

    ``g`` is a GeneratorSpec or a PiecewiseGenerator.  The first grid time is
    the time of ``initial``.
    """
    if method != "rk4":
        raise ValueError(f"unknown method {method!r}; only 'rk4' is available")
    gen = as_piecewise(g)
    n = initial.n_modes
    if gen.n_modes != n:
        raise DimensionError("generator and state sizes differ")
    t = check_grid(t_grid)
    make = _unpacked_rhs_factory(n)

    def propagate(state: ReducedState, t0: float, t1: float) -> ReducedState:
        return ReducedState.unpack(rk4_propagate(state.pack(), t0, t1, gen, make, dt), n)

    y = initial.pack()
    states = [initial]
    for a, b in zip(t[:-1], t[1:]):
        y = rk4_propagate(y, a, b, gen, make, dt)
        states.append(ReducedState.unpack(y, n))
    return Trajectory(t, states, propagate)
