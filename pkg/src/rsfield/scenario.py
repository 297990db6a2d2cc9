"""Scenario configuration: schema, parsing, serialization, execution, oracle check.

Config files are YAML.  Mode labels in configs are one-based.  Example::

    name: bsv_thermal
    n_modes: 4
    initial: {preset: bsv, gamma: 1.0}
    bipartition: {a: [1, 2], b: [3, 4]}
    pipeline:
      - evolve:
          duration: 5.0
          bath: {n_omega: 0.1, gamma_omega: 1.0, modes: [1, 2, 3, 4]}
    time_grid: {t_max: 5.0, samples: 101}
    observables: [ppt, critical_time]
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import entanglement as ent
from . import fock as fk
from . import optics
from . import presets as P
from . import second_order as so
from .core import Bipartition, RSFError, TracelessState, project_bipartition
from .evolution import (GeneratorSpec, PiecewiseGenerator, ThermalBathSpec, Trajectory,
                        bath_to_gamma, integrate)
from .states import build


class ConfigError(RSFError, ValueError):
    """Invalid scenario configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# value coercion

def _num(x, where, real=False):
    if isinstance(x, bool):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, complex):
        z = x
    elif isinstance(x, str):
        try:
            z = complex(x.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"{where}: cannot read {x!r} as a number") from None
    else:
        raise ConfigError(f"{where}: expected a number, got {type(x).__name__}")
    if real and z.imag != 0:
        raise ConfigError(f"{where}: must be real")
    return float(z.real) if z.imag == 0 else z


def _real(x, where, lo=None, hi=None, lo_open=False):
    v = _num(x, where, real=True)
    if not math.isfinite(v):
        raise ConfigError(f"{where}: must be finite")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"{where}: must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{where}: must be <= {hi}")
    return v


def _int(x, where, lo=None):
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(f"{where}: expected an integer, got {x!r}")
    if lo is not None and x < lo:
        raise ConfigError(f"{where}: must be >= {lo}")
    return x


def _list(x, where, length=None):
    if not isinstance(x, list):
        raise ConfigError(f"{where}: expected a list")
    if length is not None and len(x) != length:
        raise ConfigError(f"{where}: expected {length} entries, got {len(x)}")
    return x


def _map(x, where, allowed, required=()):
    if not isinstance(x, dict):
        raise ConfigError(f"{where}: expected a mapping")
    for k in x:
        if k not in allowed:
            raise ConfigError(f"{where}: unknown key {k!r} (allowed: {', '.join(sorted(allowed))})")
    for k in required:
        if k not in x:
            raise ConfigError(f"{where}: missing key {k!r}")
    return x


def _modes(x, where, n, length=None):
    out = [_int(k, f"{where}[{i}]", 1) for i, k in enumerate(_list(x, where, length))]
    for k in out:
        if k > n:
            raise ConfigError(f"{where}: mode {k} out of range 1..{n}")
    if len(set(out)) != len(out):
        raise ConfigError(f"{where}: repeated mode")
    return out


def _matrix(x, where, n):
    """N x N matrix, or a length-N list meaning a diagonal matrix."""
    rows = _list(x, where)
    if rows and not isinstance(rows[0], list):
        _list(rows, where, n)
        return [_num(v, f"{where}[{i}]") for i, v in enumerate(rows)]
    _list(rows, where, n)
    return [[_num(v, f"{where}[{i}][{j}]") for j, v in enumerate(_list(r, f"{where}[{i}]", n))]
            for i, r in enumerate(rows)]


def _as_array(m, n):
    a = np.array(m, dtype=complex)
    return np.diag(a) if a.ndim == 1 else a


# ---------------------------------------------------------------------------
# schema

PRESET_KEYS = {
    "vacuum": (),
    "fock": ("occupations",),
    "coherent": ("amplitudes",),
    "thermal": ("nbar",),
    "bsv": ("gamma",),
    "single_photon_split": (),
    "single_photon_weak_homodyne": ("alpha",),
}
PRESET_SIZE = {"bsv": 4, "single_photon_split": 2, "single_photon_weak_homodyne": 4}
OBS_SIMPLE = ("ppt", "critical_time", "covariance_ppt", "entropy", "occupations")
_OBS_RE = re.compile(r"^(mandel_q)\((\d+)\)$|^(gen_q)\((\d+),\s*(\d+)\)$")
TERMS = ("hamiltonian", "pump", "gain", "loss", "scattering", "squeezing")


@dataclass
class Scenario:
    n_modes: int
    initial: list
    pipeline: list = field(default_factory=list)
    bipartition: Optional[tuple] = None
    observables: list = field(default_factory=list)
    t_max: float = 0.0
    samples: int = 1
    name: str = "scenario"
    dt: Optional[float] = None

    @property
    def uses_squeezing(self) -> bool:
        return any("evolve" in st and "squeezing" in st["evolve"] for st in self.pipeline)

    @property
    def duration(self) -> float:
        return sum(st["evolve"]["duration"] for st in self.pipeline if "evolve" in st)

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.samples) if self.samples > 1 else np.array([0.0])

    def bp(self) -> Optional[Bipartition]:
        if self.bipartition is None:
            return None
        a, b = self.bipartition
        return Bipartition(tuple(k - 1 for k in a), tuple(k - 1 for k in b))


def _parse_component(c, where, n):
    c = dict(_map(c, where, {"preset", "modes", "occupations", "amplitudes", "nbar",
                            "gamma", "alpha"}, ("preset",)))
    name = c["preset"]
    if name not in PRESET_KEYS:
        raise ConfigError(f"{where}.preset: unknown preset {name!r} "
                          f"(known: {', '.join(PRESET_KEYS)})")
    allowed = set(PRESET_KEYS[name]) | {"preset", "modes"}
    _map(c, where, allowed, PRESET_KEYS[name])
    out = {"preset": name}
    size = PRESET_SIZE.get(name)
    if name in ("fock", "coherent", "thermal"):
        key = PRESET_KEYS[name][0]
        vals = _list(c[key], f"{where}.{key}")
        size = len(vals)
        if name == "fock":
            out[key] = [_int(v, f"{where}.{key}[{i}]", 0) for i, v in enumerate(vals)]
        elif name == "coherent":
            out[key] = [_num(v, f"{where}.{key}[{i}]") for i, v in enumerate(vals)]
        else:
            out[key] = [_real(v, f"{where}.{key}[{i}]", 0) for i, v in enumerate(vals)]
    elif name == "bsv":
        out["gamma"] = _real(c["gamma"], f"{where}.gamma", 0)
    elif name == "single_photon_weak_homodyne":
        out["alpha"] = _num(c["alpha"], f"{where}.alpha")
    if name == "vacuum":
        size = len(c["modes"]) if "modes" in c else n
    if "modes" in c:
        out["modes"] = _modes(c["modes"], f"{where}.modes", n, size)
    else:
        if size > n:
            raise ConfigError(f"{where}: preset {name} needs {size} modes, scenario has {n}")
        if name in ("fock", "coherent", "thermal") and size != n:
            raise ConfigError(f"{where}: {size} values given for {n} modes; add 'modes'")
    return out


def _parse_initial(x, n):
    comps = x if isinstance(x, list) else [x]
    where = "initial"
    out = [_parse_component(c, f"{where}[{i}]" if isinstance(x, list) else where, n)
           for i, c in enumerate(comps)]
    used = []
    for c in out:
        used += _component_modes(c, n)
    if len(set(used)) != len(used):
        raise ConfigError(f"{where}: components overlap on modes")
    return out if isinstance(x, list) else out[0]


def _component_modes(c, n):
    if "modes" in c:
        return list(c["modes"])
    name = c["preset"]
    size = PRESET_SIZE.get(name) or (len(c[PRESET_KEYS[name][0]]) if PRESET_KEYS[name] else n)
    return list(range(1, size + 1))


def _parse_unitary_spec(x, where, n):
    x = _map(x, where, {"unitary", "beamsplitter", "phase", "rate"}, ("rate",))
    kinds = [k for k in ("unitary", "beamsplitter", "phase") if k in x]
    if len(kinds) != 1:
        raise ConfigError(f"{where}: give exactly one of unitary, beamsplitter, phase")
    out = {"rate": _real(x["rate"], f"{where}.rate", 0)}
    k = kinds[0]
    if k == "unitary":
        out["unitary"] = _matrix(x["unitary"], f"{where}.unitary", n)
    elif k == "beamsplitter":
        out["beamsplitter"] = _parse_bs(x[k], f"{where}.beamsplitter", n)
    else:
        out["phase"] = _parse_phase(x[k], f"{where}.phase", n, "phi")
    return out


def _parse_bs(x, where, n):
    x = _map(x, where, {"t", "modes"}, ("t", "modes"))
    return {"t": _real(x["t"], f"{where}.t", 0, 1), "modes": _modes(x["modes"], f"{where}.modes", n, 2)}


def _parse_phase(x, where, n, key):
    x = _map(x, where, {"mode", key}, ("mode", key))
    m = _int(x["mode"], f"{where}.mode", 1)
    if m > n:
        raise ConfigError(f"{where}.mode: {m} out of range 1..{n}")
    return {"mode": m, key: _real(x[key], f"{where}.{key}")}


def _parse_evolve(x, where, n):
    x = _map(x, where, {"duration", "hamiltonian", "pump", "gamma_up", "gamma_down", "bath",
                        "scattering", "squeezing", "phase"}, ("duration",))
    out = {"duration": _real(x["duration"], f"{where}.duration", 0, lo_open=True)}
    for key in ("hamiltonian", "gamma_up", "gamma_down"):
        if key in x:
            out[key] = _matrix(x[key], f"{where}.{key}", n)
    if "pump" in x:
        out["pump"] = [_num(v, f"{where}.pump[{i}]")
                       for i, v in enumerate(_list(x["pump"], f"{where}.pump", n))]
    if "bath" in x:
        b = _map(x["bath"], f"{where}.bath", {"n_omega", "gamma_omega", "modes"},
                 ("n_omega", "gamma_omega"))
        out["bath"] = {"n_omega": _real(b["n_omega"], f"{where}.bath.n_omega", 0),
                       "gamma_omega": _real(b["gamma_omega"], f"{where}.bath.gamma_omega", 0,
                                            lo_open=True)}
        if "modes" in b:
            out["bath"]["modes"] = _modes(b["modes"], f"{where}.bath.modes", n)
    if "scattering" in x:
        out["scattering"] = [_parse_unitary_spec(s, f"{where}.scattering[{i}]", n)
                             for i, s in enumerate(_list(x["scattering"], f"{where}.scattering"))]
    if "squeezing" in x:
        sq = x["squeezing"]
        if isinstance(sq, dict):
            sq = _map(sq, f"{where}.squeezing", {"bsv", "modes"}, ("bsv",))
            s_out = {"bsv": _real(sq["bsv"], f"{where}.squeezing.bsv")}
            if "modes" in sq:
                s_out["modes"] = _modes(sq["modes"], f"{where}.squeezing.modes", n, 4)
            elif n < 4:
                raise ConfigError(f"{where}.squeezing: bsv squeezing needs 4 modes")
            out["squeezing"] = s_out
        else:
            out["squeezing"] = _matrix(sq, f"{where}.squeezing", n)
    if "phase" in x:
        out["phase"] = [_parse_phase(p, f"{where}.phase[{i}]", n, "rate")
                        for i, p in enumerate(_list(x["phase"], f"{where}.phase"))]
    # build once to surface physics errors (non-Hermitian h, ...) as config errors
    try:
        _generator(out, n)
    except (ValueError, RSFError) as e:
        raise ConfigError(f"{where}: {e}") from None
    return out


def _parse_step(x, where, n):
    if not isinstance(x, dict) or len(x) != 1:
        raise ConfigError(f"{where}: each step is a mapping with one key")
    (kind, body), = x.items()
    if kind == "evolve":
        return {"evolve": _parse_evolve(body, f"{where}.evolve", n)}
    if kind == "beamsplitter":
        return {"beamsplitter": _parse_bs(body, f"{where}.beamsplitter", n)}
    if kind == "phase_shifter":
        return {"phase_shifter": _parse_phase(body, f"{where}.phase_shifter", n, "phi")}
    if kind == "detector_efficiency":
        body = _map(body, f"{where}.detector_efficiency", {"etas"}, ("etas",))
        etas = _list(body["etas"], f"{where}.detector_efficiency.etas", n)
        return {"detector_efficiency": {"etas": [
            _real(e, f"{where}.detector_efficiency.etas[{i}]", 0, 1) for i, e in enumerate(etas)]}}
    if kind == "mode_unitary":
        body = _map(body, f"{where}.mode_unitary", {"unitary"}, ("unitary",))
        u = _matrix(body["unitary"], f"{where}.mode_unitary.unitary", n)
        ua = _as_array(u, n)
        if np.max(np.abs(ua @ ua.conj().T - np.eye(n))) > 1e-10:
            raise ConfigError(f"{where}.mode_unitary.unitary: not unitary")
        return {"mode_unitary": {"unitary": u}}
    raise ConfigError(f"{where}: unknown step {kind!r} (known: evolve, beamsplitter, "
                      "phase_shifter, detector_efficiency, mode_unitary)")


def _parse_observable(o, where, n):
    if not isinstance(o, str):
        raise ConfigError(f"{where}: expected an observable name")
    o = o.replace(" ", "")
    if o in OBS_SIMPLE:
        return o
    m = _OBS_RE.match(o)
    if not m:
        raise ConfigError(f"{where}: unknown observable {o!r}")
    idx = [int(g) for g in m.groups()[1:] if g is not None and g.isdigit()]
    for k in idx:
        if not 1 <= k <= n:
            raise ConfigError(f"{where}: mode {k} out of range 1..{n}")
    return o


def scenario_from_dict(d) -> Scenario:
    d = _map(d, "config", {"name", "n_modes", "initial", "bipartition", "pipeline", "time_grid",
                           "observables", "dt"}, ("n_modes", "initial"))
    n = _int(d["n_modes"], "n_modes", 1)
    s = Scenario(n_modes=n, initial=_parse_initial(d["initial"], n))
    if "name" in d:
        if not isinstance(d["name"], str):
            raise ConfigError("name: expected a string")
        s.name = d["name"]
    s.pipeline = [_parse_step(x, f"pipeline[{i}]", n)
                  for i, x in enumerate(_list(d.get("pipeline", []), "pipeline"))]
    if "bipartition" in d:
        b = _map(d["bipartition"], "bipartition", {"a", "b"}, ("a", "b"))
        a_, b_ = _modes(b["a"], "bipartition.a", n), _modes(b["b"], "bipartition.b", n)
        if not a_ or not b_:
            raise ConfigError("bipartition: both parties need at least one mode")
        if set(a_) & set(b_):
            raise ConfigError(f"bipartition: sets a and b overlap on modes {sorted(set(a_) & set(b_))}")
        s.bipartition = (sorted(a_), sorted(b_))
    s.observables = [_parse_observable(o, f"observables[{i}]", n)
                     for i, o in enumerate(_list(d.get("observables", []), "observables"))]
    needs_bp = {"ppt", "critical_time", "covariance_ppt"} & set(s.observables)
    if needs_bp and s.bipartition is None:
        raise ConfigError(f"observables {sorted(needs_bp)} need a bipartition")
    tg = _map(d.get("time_grid", {}), "time_grid", {"t_max", "samples"})
    s.t_max = _real(tg.get("t_max", s.duration), "time_grid.t_max", 0)
    s.samples = _int(tg.get("samples", 101 if s.t_max > 0 else 1), "time_grid.samples", 1)
    if s.t_max > s.duration + 1e-12:
        raise ConfigError(f"time_grid.t_max = {s.t_max} exceeds the evolution time {s.duration}")
    if s.samples > 1 and s.t_max == 0:
        raise ConfigError("time_grid: several samples need t_max > 0")
    if "dt" in d:
        s.dt = _real(d["dt"], "dt", 0, lo_open=True)
    return s


def parse_scenario(text: str, source: str = "<config>") -> Scenario:
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        msg = getattr(e, "problem", None) or str(e)
        raise ConfigError(f"{where}: syntax error: {msg}") from None
    try:
        return scenario_from_dict(d)
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}") from None


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), str(path))


def _plain(x):
    if isinstance(x, complex):
        return repr(x)
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def scenario_to_dict(s: Scenario) -> dict:
    d = {"name": s.name, "n_modes": s.n_modes, "initial": _plain(s.initial)}
    if s.bipartition is not None:
        d["bipartition"] = {"a": list(s.bipartition[0]), "b": list(s.bipartition[1])}
    if s.pipeline:
        d["pipeline"] = _plain(s.pipeline)
    d["time_grid"] = {"t_max": s.t_max, "samples": s.samples}
    d["observables"] = list(s.observables)
    if s.dt is not None:
        d["dt"] = s.dt
    return d


def serialize_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=None, width=100)


# ---------------------------------------------------------------------------
# conversion to library objects

def _component_preset(c, n):
    name = c["preset"]
    if name == "vacuum":
        return P.Vacuum(len(_component_modes(c, n)))
    if name == "fock":
        return P.Fock(tuple(c["occupations"]))
    if name == "coherent":
        return P.Coherent(tuple(c["amplitudes"]))
    if name == "thermal":
        return P.Thermal(tuple(c["nbar"]))
    if name == "bsv":
        return P.BSV(c["gamma"])
    if name == "single_photon_split":
        return P.SinglePhotonSplit()
    if name == "single_photon_weak_homodyne":
        return P.WeakHomodyne(c["alpha"])
    raise ConfigError(f"unknown preset {name!r}")


def initial_preset(s: Scenario) -> P.Product:
    comps = s.initial if isinstance(s.initial, list) else [s.initial]
    parts = tuple(P.Placed(_component_preset(c, s.n_modes),
                           tuple(k - 1 for k in _component_modes(c, s.n_modes)))
                  for c in comps)
    return P.Product(s.n_modes, parts)


def _unitary(spec, n):
    if "unitary" in spec:
        return _as_array(spec["unitary"], n)
    if "beamsplitter" in spec:
        bs = spec["beamsplitter"]
        return optics.beamsplitter_unitary(bs["t"], bs["modes"][0] - 1, bs["modes"][1] - 1, n)
    ph = spec["phase"]
    return optics.phase_unitary(n, ph["mode"] - 1, ph["phi"])


def _generator(ev, n) -> GeneratorSpec:
    h = _as_array(ev["hamiltonian"], n) if "hamiltonian" in ev else np.zeros((n, n), complex)
    for ph in ev.get("phase", []):
        h = h.copy()
        h[ph["mode"] - 1, ph["mode"] - 1] += ph["rate"]
    gu = _as_array(ev["gamma_up"], n) if "gamma_up" in ev else np.zeros((n, n))
    gd = _as_array(ev["gamma_down"], n) if "gamma_down" in ev else np.zeros((n, n))
    if "bath" in ev:
        b = ev["bath"]
        modes = [k - 1 for k in b.get("modes", range(1, n + 1))]
        up, down = bath_to_gamma(ThermalBathSpec(b["n_omega"], b["gamma_omega"], modes), n)
        gu, gd = gu + up, gd + down
    xi = np.array(ev["pump"], dtype=complex) if "pump" in ev else None
    scat = tuple((_unitary(sc, n), sc["rate"]) for sc in ev.get("scattering", []))
    hs = None
    if "squeezing" in ev:
        sq = ev["squeezing"]
        if isinstance(sq, dict):
            hs = so.bsv_squeezing(sq["bsv"], n, tuple(k - 1 for k in sq.get("modes", (1, 2, 3, 4))))
        else:
            hs = _as_array(sq, n)
    return GeneratorSpec(n, h=h, xi=xi, gamma_up=gu, gamma_down=gd, scattering=scat, hs=hs)


def term_only(g: GeneratorSpec, term: str) -> GeneratorSpec:
    n = g.n_modes
    kw = dict(n_modes=n)
    if term == "hamiltonian":
        kw["h"] = g.h
    elif term == "pump":
        kw["xi"] = g.xi
    elif term == "gain":
        kw["gamma_up"] = g.gamma_up
    elif term == "loss":
        kw["gamma_down"] = g.gamma_down
    elif term == "scattering":
        kw["scattering"] = g.scattering
    elif term == "squeezing":
        kw["hs"] = g.hs
    else:
        raise ValueError(term)
    return GeneratorSpec(**kw)


def terms_present(g: GeneratorSpec) -> list:
    flags = {"hamiltonian": np.any(g.h != 0), "pump": np.any(g.xi != 0),
             "gain": np.any(g.gamma_up != 0), "loss": np.any(g.gamma_down != 0),
             "scattering": any(k > 0 for _, k in g.scattering),
             "squeezing": g.has_squeezing}
    return [t for t in TERMS if flags[t]]


# ---------------------------------------------------------------------------
# execution

class _ReducedBackend:
    def __init__(self, s: Scenario, second: bool, initial=None):
        self.second = second
        self.s = s
        pre = initial_preset(s)
        if initial is not None:
            self.init = initial
        else:
            self.init = so.build_second_order(pre) if second else build(pre)

    def element(self, state, kind, body, n):
        if kind == "detector_efficiency":
            return optics.detector_efficiency(state, body["etas"])
        return optics.apply_mode_unitary(state, _element_unitary(kind, body, n))

    def evolve(self, state, gen, times, dt):
        if self.second:
            return so.integrate_second_order(state, gen, times, dt=dt)
        return integrate(state, gen, times, dt=dt)


def _element_unitary(kind, body, n):
    if kind == "beamsplitter":
        return optics.beamsplitter_unitary(body["t"], body["modes"][0] - 1, body["modes"][1] - 1, n)
    if kind == "phase_shifter":
        return optics.phase_unitary(n, body["mode"] - 1, body["phi"])
    return _as_array(body["unitary"], n)


class _FockBackend:
    def __init__(self, s: Scenario, cutoff):
        self.init = fk.prepare(initial_preset(s), cutoff)

    def element(self, state, kind, body, n):
        if kind == "detector_efficiency":
            return fk.loss_channel(state, body["etas"])
        return fk.apply_unitary(state, _element_unitary(kind, body, n))

    def evolve(self, state, gen, times, dt):
        if state.is_pure:
            state = fk.FockState(state.n_modes, state.cutoffs, rho=state.density())
        return fk.evolve_fock(state, gen, times, dt=dt)


def _execute(s: Scenario, backend, dt=None, generator_map=None):
    """Run the pipeline; returns (grid times, states, segment trajectories)."""
    n = s.n_modes
    grid = s.time_grid()
    recorded = {}
    segments = []
    t, state = 0.0, backend.init
    eps = 1e-12

    def record_now():
        for k, tau in enumerate(grid):
            if k not in recorded and tau <= t + eps:
                recorded[k] = state

    for step in s.pipeline:
        (kind, body), = step.items()
        if kind != "evolve":
            state = backend.element(state, kind, body, n)
            continue
        record_now()
        t1 = t + body["duration"]
        g = _generator(body, n)
        if generator_map is not None:
            g = generator_map(g)
        inner = [(k, tau) for k, tau in enumerate(grid) if t + eps < tau < t1 - eps]
        times = [t] + [tau for _, tau in inner] + [t1]
        traj = backend.evolve(state, PiecewiseGenerator.constant(g), times, dt or s.dt)
        for (k, _), st in zip(inner, traj.states[1:-1]):
            recorded[k] = st
        segments.append(traj)
        t, state = t1, traj.states[-1]
    record_now()
    return grid, [recorded[k] for k in range(len(grid))], segments


@dataclass
class ResultTable:
    columns: list
    rows: np.ndarray
    critical_time: Optional[float] = None


def _safe(f):
    try:
        return f()
    except (TracelessState, ent.EmptyMode):
        return float("nan")


def _critical_time(segments, bp) -> Optional[float]:
    prev = None
    for traj in segments:
        f0 = _safe(lambda: ent.min_ppt_eigenvalue(traj.states[0], bp))
        if prev is not None and np.isfinite(prev) and np.isfinite(f0) and (prev < 0) != (f0 < 0):
            return float(traj.times[0])
        try:
            tc = ent.critical_time(traj, bp)
        except TracelessState:
            tc = None
        if tc is not None:
            return tc
        prev = _safe(lambda: ent.min_ppt_eigenvalue(traj.states[-1], bp))
    return None


def observe(s: Scenario, states, segments) -> ResultTable:
    bp = s.bp()
    n = s.n_modes
    cols, funcs = [], []
    tc = None
    for o in s.observables:
        if o == "ppt":
            cols += ["ppt_min", "ppt_trace"]
            funcs.append(lambda st: _safe(lambda: ent.min_ppt_eigenvalue(st, bp)))
            funcs.append(lambda st: float(np.real(np.trace(project_bipartition(ent._base(st), bp)))))
        elif o == "critical_time":
            tc = _critical_time(segments, bp)
            cols.append("critical_time")
            funcs.append(lambda st, tc=tc: float("nan") if tc is None else tc)
        elif o == "covariance_ppt":
            cols.append("cov_ppt_min")
            funcs.append(lambda st: float(ent.covariance_ppt(
                ent.covariance_from_reduced(ent._base(st)), bp)[0]))
        elif o == "entropy":
            cols.append("entropy")
            funcs.append(lambda st: ent.rsf_entropy(st))
        elif o == "occupations":
            for k in range(n):
                cols.append(f"n_{k + 1}")
                funcs.append(lambda st, k=k: float(np.real(ent._base(st).rho[k, k])))
        else:
            m = _OBS_RE.match(o)
            if m.group(1):
                i = int(m.group(2))
                cols.append(f"mandel_q_{i}")
                funcs.append(lambda st, i=i: _safe(lambda: ent.mandel_q(st, i - 1)))
            else:
                i, j = int(m.group(4)), int(m.group(5))
                cols.append(f"gen_q_{i}_{j}")
                funcs.append(lambda st, i=i, j=j: _safe(lambda: ent.gen_q(st, i - 1, j - 1)))
    grid = s.time_grid()
    rows = np.array([[tau] + [f(st) for f in funcs] for tau, st in zip(grid, states)], dtype=float)
    return ResultTable(["t"] + cols, rows.reshape(len(grid), len(cols) + 1), tc)


def run_scenario(s: Scenario, dt: Optional[float] = None) -> ResultTable:
    try:
        grid, states, segments = _execute(s, _ReducedBackend(s, s.uses_squeezing), dt)
        return observe(s, states, segments)
    except ConfigError:
        raise
    except RSFError as e:
        raise type(e)(f"scenario {s.name!r}: {e}") from e


def format_csv(table: ResultTable) -> str:
    lines = [",".join(table.columns)]
    for row in table.rows:
        lines.append(",".join(format(float(x), ".17g") for x in row))
    return "\n".join(lines) + "\n"


def emit_csv(table: ResultTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_csv(table))


def gnuplot_script(table: ResultTable, csv_path: str) -> str:
    plots = ", ".join(f"'{csv_path}' using 1:{k + 2} with lines title '{c}'"
                      for k, c in enumerate(table.columns[1:]))
    return ("set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\n"
            + (f"plot {plots}\n" if plots else ""))


# ---------------------------------------------------------------------------
# oracle cross-check

@dataclass
class CheckLine:
    term: str
    block: str
    max_dev: float
    worst: tuple
    passed: bool
    gating: bool = True


@dataclass
class OracleReport:
    lines: list
    tol: float

    @property
    def passed(self) -> bool:
        return all(l.passed for l in self.lines if l.gating)

    def format(self) -> str:
        out = [f"{'term':<12} {'block':<6} {'max_dev':>10}  status  worst (t, index)"]
        for l in self.lines:
            status = ("PASS" if l.passed else "FAIL") if l.gating else "info"
            out.append(f"{l.term:<12} {l.block:<6} {l.max_dev:10.3e}  {status:<6}  {l.worst}")
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'} (tol {self.tol:g})")
        return "\n".join(out)


def _reduce_any(f, second):
    base = fk.reduce_from_fock(f, warn=False)
    if second:
        return so.SecondOrderState(base, *fk.reduce_extra_from_fock(f, warn=False))
    return base


def _compare(term, grid, a_states, b_states, tol, gating=True):
    lines = []
    keys = a_states[0].blocks().keys()
    for key in keys:
        best, where = -1.0, ()
        for tau, x, y in zip(grid, a_states, b_states):
            d = np.abs(x.blocks()[key] - y.blocks()[key])
            if d.size and d.max() > best:
                best = float(d.max())
                where = (float(tau),) + tuple(int(i) for i in np.unravel_index(np.argmax(d), d.shape))
        lines.append(CheckLine(term, key, best, where, best <= tol, gating))
    return lines


def oracle_check(s: Scenario, cutoff: int, tol: float = 1e-6, dt=None, per_term: bool = True) -> OracleReport:
    """Run the reduced path and the Fock oracle side by side.

    Both start from the oracle's truncated initial state, so the comparison
    isolates the dynamics; the analytic-vs-truncated preparation gap is
    reported as an informational line.
    """
    second = s.uses_squeezing
    fb = _FockBackend(s, cutoff)
    init = _reduce_any(fb.init, second)
    lines = []
    analytic = so.build_second_order(initial_preset(s)) if second else build(initial_preset(s))
    lines += _compare("preparation", [0.0], [analytic], [init], tol, gating=False)

    variants = [("combined", None)]
    if per_term:
        present = []
        for st in s.pipeline:
            if "evolve" in st:
                for t in terms_present(_generator(st["evolve"], s.n_modes)):
                    if t not in present:
                        present.append(t)
        if len(present) > 1:
            variants += [(t, t) for t in present]
    for label, term in variants:
        gmap = None if term is None else (lambda g, term=term: term_only(g, term))
        grid, red, _ = _execute(s, _ReducedBackend(s, second, initial=init), dt, gmap)
        _, orc, _ = _execute(s, fb, dt, gmap)
        orc_red = [_reduce_any(f, second) for f in orc]
        lines += _compare(label, grid, red, orc_red, tol)
    return OracleReport(lines, tol)
