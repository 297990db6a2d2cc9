"""Named scenario builders used by ``rsfield scenario <name>``."""
from __future__ import annotations

import inspect

from .scenario import ConfigError, Scenario, scenario_from_dict


def bsv_thermal(gamma=1.0, n_omega=0.1, gamma_omega=1.0, t_max=5.0, samples=101):
    """Bright squeezed vacuum, every mode damped by the same thermal bath."""
    return scenario_from_dict({
        "name": "bsv_thermal", "n_modes": 4,
        "initial": {"preset": "bsv", "gamma": gamma},
        "bipartition": {"a": [1, 2], "b": [3, 4]},
        "pipeline": [{"evolve": {"duration": t_max, "bath": {
            "n_omega": n_omega, "gamma_omega": gamma_omega, "modes": [1, 2, 3, 4]}}}],
        "time_grid": {"t_max": t_max, "samples": samples},
        "observables": ["ppt", "critical_time", "occupations"],
    })


def single_photon_thermal(alpha=0.5, n_omega=0.1, gamma_omega=1.0, t_max=5.0, samples=101):
    """Split single photon with weak coherent references; the photon modes see the bath."""
    return scenario_from_dict({
        "name": "single_photon_thermal", "n_modes": 4,
        "initial": {"preset": "single_photon_weak_homodyne", "alpha": alpha},
        "bipartition": {"a": [1, 2], "b": [3, 4]},
        "pipeline": [{"evolve": {"duration": t_max, "bath": {
            "n_omega": n_omega, "gamma_omega": gamma_omega, "modes": [1, 3]}}}],
        "time_grid": {"t_max": t_max, "samples": samples},
        "observables": ["ppt", "critical_time", "gen_q(1,3)", "occupations"],
    })


def bsv_generation(gamma=1.0, t_max=1.0, samples=51):
    """Vacuum driven by the four-mode squeezing Hamiltonian."""
    return scenario_from_dict({
        "name": "bsv_generation", "n_modes": 4,
        "initial": {"preset": "vacuum"},
        "bipartition": {"a": [1, 2], "b": [3, 4]},
        "pipeline": [{"evolve": {"duration": t_max, "squeezing": {"bsv": gamma}}}],
        "time_grid": {"t_max": t_max, "samples": samples},
        "observables": ["ppt", "covariance_ppt", "occupations"],
    })


def statistics_transfer(n=2, t=0.5):
    """Fock state |n,0> through a beamsplitter of transmissivity t."""
    return scenario_from_dict({
        "name": "statistics_transfer", "n_modes": 2,
        "initial": {"preset": "fock", "occupations": [n, 0]},
        "pipeline": [{"beamsplitter": {"t": t, "modes": [1, 2]}}],
        "observables": ["mandel_q(1)", "mandel_q(2)", "gen_q(1,2)", "gen_q(2,1)", "occupations"],
    })


def homodyne_efficiency(alpha=0.5, eta=0.5):
    """Weak-homodyne state read out by detectors of efficiency eta."""
    return scenario_from_dict({
        "name": "homodyne_efficiency", "n_modes": 4,
        "initial": {"preset": "single_photon_weak_homodyne", "alpha": alpha},
        "bipartition": {"a": [1, 2], "b": [3, 4]},
        "pipeline": [{"detector_efficiency": {"etas": [eta] * 4}}],
        "observables": ["ppt", "covariance_ppt", "gen_q(1,3)"],
    })


LIBRARY = {f.__name__: f for f in (bsv_thermal, single_photon_thermal, bsv_generation,
                                   statistics_transfer, homodyne_efficiency)}


def make_scenario(name: str, **params) -> Scenario:
    if name not in LIBRARY:
        raise ConfigError(f"unknown scenario {name!r} (known: {', '.join(LIBRARY)})")
    f = LIBRARY[name]
    allowed = inspect.signature(f).parameters
    for k in params:
        if k not in allowed:
            raise ConfigError(f"scenario {name}: unknown parameter {k!r} "
                              f"(allowed: {', '.join(allowed)})")
    try:
        return f(**params)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"scenario {name}: {e}") from None
