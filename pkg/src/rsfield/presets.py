"""Preset state descriptions shared by the analytic factory and the Fock oracle.

Mode indices are zero-based here; the scenario layer converts from the
one-based labels used in config files.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


class PresetError(ValueError):
    pass


def _check_modes(modes, n_modes, count=None):
    modes = tuple(int(k) for k in modes)
    if count is not None and len(modes) != count:
        raise PresetError(f"expected {count} modes, got {len(modes)}")
    if len(set(modes)) != len(modes):
        raise PresetError(f"mode indices must be distinct: {modes}")
    for k in modes:
        if not 0 <= k < n_modes:
            raise PresetError(f"mode {k} out of range for {n_modes} modes")
    return modes


@dataclass(frozen=True)
class Vacuum:
    n_modes: int

    def __post_init__(self):
        if self.n_modes < 1:
            raise PresetError("n_modes must be positive")


@dataclass(frozen=True)
class Fock:
    occupations: Tuple[int, ...]

    def __post_init__(self):
        occ = tuple(int(n) for n in self.occupations)
        if not occ or min(occ) < 0:
            raise PresetError("occupations must be non-negative integers")
        object.__setattr__(self, "occupations", occ)

    @property
    def n_modes(self):
        return len(self.occupations)


@dataclass(frozen=True)
class Coherent:
    amplitudes: Tuple[complex, ...]

    def __post_init__(self):
        amps = tuple(complex(a) for a in self.amplitudes)
        if not amps or not all(np.isfinite(a) for a in amps):
            raise PresetError("amplitudes must be finite")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_modes(self):
        return len(self.amplitudes)


@dataclass(frozen=True)
class Thermal:
    nbar: Tuple[float, ...]

    def __post_init__(self):
        nb = tuple(float(x) for x in self.nbar)
        if not nb or min(nb) < 0 or not all(np.isfinite(nb)):
            raise PresetError("nbar must be finite and >= 0")
        object.__setattr__(self, "nbar", nb)

    @property
    def n_modes(self):
        return len(self.nbar)


@dataclass(frozen=True)
class BSV:
    """Two pairs of two-mode squeezed vacuum with gain ``gamma``.

    Pairs are (modes[0], modes[3]) and (modes[1], modes[2]), the second one
    with opposite sign of the squeezing parameter.
    """
    gamma: float
    n_modes: int = 4
    modes: Tuple[int, ...] = (0, 1, 2, 3)

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise PresetError("gain must be >= 0")
        object.__setattr__(self, "modes", _check_modes(self.modes, self.n_modes, 4))


@dataclass(frozen=True)
class SinglePhotonSplit:
    """(|1,0> + |0,1>)/sqrt2 on a pair of modes, vacuum elsewhere."""
    n_modes: int = 2
    modes: Tuple[int, ...] = (0, 1)

    def __post_init__(self):
        object.__setattr__(self, "modes", _check_modes(self.modes, self.n_modes, 2))


@dataclass(frozen=True)
class WeakHomodyne:
    """Split single photon on modes[0], modes[2]; coherent alpha on modes[1], modes[3]."""
    alpha: complex
    n_modes: int = 4
    modes: Tuple[int, ...] = (0, 1, 2, 3)

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "modes", _check_modes(self.modes, self.n_modes, 4))


StatePreset = (Vacuum, Fock, Coherent, Thermal, BSV, SinglePhotonSplit, WeakHomodyne)


@dataclass(frozen=True)
class Placed:
    """A preset living on a subset of the modes of a larger system."""
    preset: object
    modes: Tuple[int, ...]


@dataclass(frozen=True)
class Product:
    """Product state of placed components; uncovered modes are vacuum."""
    n_modes: int
    parts: Tuple[Placed, ...] = field(default_factory=tuple)

    def __post_init__(self):
        seen = set()
        for p in self.parts:
            modes = _check_modes(p.modes, self.n_modes, p.preset.n_modes)
            if seen & set(modes):
                raise PresetError(f"components overlap on modes {sorted(seen & set(modes))}")
            seen |= set(modes)
