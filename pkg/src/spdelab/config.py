"""Experiment configuration: YAML loading, validation and object builders.

A config is a mapping with the sections

    experiment: check | simulate | solve | converge | regularity | grr
    measure:    {type: fractional_line, H: 0.5}            (single measure)
    family:     {type: fractional, ns: [1, 2, 4], H: 0.5, scale: 0.2}
    equation:   {kind: heat, d: 1, T: 1.0, L: 0.5, nt: 16, dx: 0.05,
                 drift: {name: sine, amp: 0.5}, data: {name: constant, c: 0.0}}
    lattice:    {eps: 0.01, gamma: 2.0}
    ensemble:   {samples: 100, seed: 1, batch: 64}
    solver:     {tol: 1.0e-10, max_iter: 200}
    analysis:   {...}                 (experiment specific, see SCHEMA)
    output:     {dir: out}

`validate_config` lists every problem found, each prefixed with the field
path; `run` refuses configs with problems, so both accept the same set.
"""

import hashlib
import math

import yaml

from . import measures as ms
from .errors import ConfigError, SpdeLabError
from .kernels import BUILTIN_DATA, KernelSpec, data_from_dict
from .solver import BUILTIN_DRIFTS, EquationSpec, SpaceTimeGrid, drift_from_dict

EXPERIMENTS = ("check", "simulate", "solve", "converge", "regularity", "grr")
SECTIONS = ("experiment", "measure", "family", "equation", "lattice", "ensemble", "solver",
            "analysis", "output")
MEASURE_TYPES = {
    "fractional_line": {"H"},
    "isotropic_fractional": {"H", "d"},
    "riesz": {"alpha", "d"},
    "anisotropic_fractional": {"H"},
    "white": set(),
}
FAMILY_TYPES = {"fractional": {"ns"}, "riesz": {"ns", "alpha", "d"}}
NEEDS = {
    "check": ("measure|family",),
    "simulate": ("measure", "equation", "ensemble"),
    "solve": ("measure", "equation", "ensemble"),
    "converge": ("family",),
    "regularity": ("family|measure", "equation", "ensemble", "analysis"),
    "grr": ("measure", "equation", "ensemble", "analysis"),
}

SCHEMA = """\
experiment  required, one of check simulate solve converge regularity grr
measure     type + parameters (fractional_line H; isotropic_fractional H d;
            riesz alpha d; anisotropic_fractional H: [..]; white)
family      type fractional (ns, H=0.5, scale=0.2) or riesz (ns, alpha, d, scale=0.2)
equation    kind heat|wave, d, T > 0, L > 0, nt >= 1 (or dt), dx > 0,
            drift {name, params}, data {name, params}
lattice     eps in (0, 0.1], gamma >= 1
ensemble    samples >= 1, seed >= 0, batch >= 1
solver      tol > 0, max_iter >= 1
analysis    check: q; converge: pairs, pair_seed, tol, final_factor, energy_samples,
            n_perm, points; regularity: direction, lags, p, q, max_spread;
            grr: gamma, m, k, time
output      dir
"""


def load_config(path):
    """Parse a YAML config file; syntax errors carry the line number."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError([f"{where}{getattr(exc, 'problem', exc)}"]) from exc
    if cfg is None:
        cfg = {}
    if not isinstance(cfg, dict):
        raise ConfigError(["top level must be a mapping"])
    return cfg


def config_hash(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# --- validation -------------------------------------------------------------------------

def _num(problems, sec, key, cond, msg, required=True, integer=False):
    if key not in sec:
        if required:
            problems.append(f"{msg.split(':')[0]}: missing")
        return None
    v = sec[key]
    ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok_type:
        problems.append(f"{msg.split(':')[0]}: expected {'an integer' if integer else 'a number'}, "
                        f"got {v!r}")
        return None
    if not cond(v):
        problems.append(msg.replace(":", f": got {v!r},", 1) if ":" in msg else msg)
        return None
    return v


def _check_measure(sec, path, problems):
    if not isinstance(sec, dict):
        problems.append(f"{path}: expected a mapping")
        return None
    t = sec.get("type")
    if t not in MEASURE_TYPES:
        problems.append(f"{path}.type: unknown measure type {t!r} "
                        f"(known: {', '.join(MEASURE_TYPES)})")
        return None
    missing = MEASURE_TYPES[t] - set(sec)
    for k in sorted(missing):
        problems.append(f"{path}.{k}: missing")
    if missing:
        return None
    try:
        return ms.measure_from_dict(sec)
    except (ValueError, TypeError, SpdeLabError) as exc:
        problems.append(f"{path}: {exc}")
        return None


def build_family(sec):
    t = sec.get("type")
    ns = list(sec["ns"])
    if t == "fractional":
        return ms.fractional_family(ns, sec.get("H", 0.5), sec.get("scale", 0.2))
    if t == "riesz":
        return ms.riesz_family(ns, sec["alpha"], sec["d"], sec.get("scale", 0.2))
    raise ValueError(f"unknown family type {t!r}")


def _check_family(sec, problems):
    if not isinstance(sec, dict):
        problems.append("family: expected a mapping")
        return None
    t = sec.get("type")
    if t not in FAMILY_TYPES:
        problems.append(f"family.type: unknown family type {t!r} (known: fractional, riesz)")
        return None
    for k in sorted(FAMILY_TYPES[t] - set(sec)):
        problems.append(f"family.{k}: missing")
    ns = sec.get("ns")
    if ns is not None and (not isinstance(ns, list) or not ns
                           or not all(isinstance(n, int) and n >= 1 for n in ns)):
        problems.append("family.ns: expected a non-empty list of positive integers")
        return None
    if FAMILY_TYPES[t] - set(sec):
        return None
    try:
        return build_family(sec)
    except (ValueError, TypeError, SpdeLabError) as exc:
        problems.append(f"family: {exc}")
        return None


def build_grid(sec):
    T = float(sec["T"])
    nt = int(sec["nt"]) if "nt" in sec else int(round(T / float(sec["dt"])))
    return SpaceTimeGrid(T, nt, float(sec["L"]), float(sec["dx"]), int(sec.get("d", 1)))


def build_equation(sec):
    kernel = KernelSpec(sec["kind"], int(sec.get("d", 1)))
    drift = drift_from_dict(sec.get("drift", {"name": "zero"}))
    data = data_from_dict(sec.get("data", {"name": "constant", "c": 0.0}))
    return EquationSpec(kernel, drift, data, build_grid(sec))


def _check_equation(sec, problems):
    if not isinstance(sec, dict):
        problems.append("equation: expected a mapping")
        return None
    p0 = len(problems)
    kind = sec.get("kind")
    if kind not in ("heat", "wave"):
        problems.append(f"equation.kind: expected heat or wave, got {kind!r}")
    d = _num(problems, sec, "d", lambda v: v >= 1, "equation.d: must be >= 1", False, True)
    if kind == "wave" and d is not None and d > 3:
        problems.append("equation.d: the wave equation is supported for d <= 3")
    _num(problems, sec, "T", lambda v: v > 0, "equation.T: must be positive")
    _num(problems, sec, "L", lambda v: v > 0, "equation.L: must be positive")
    _num(problems, sec, "dx", lambda v: v > 0, "equation.dx: must be positive")
    if "nt" in sec:
        _num(problems, sec, "nt", lambda v: v >= 1, "equation.nt: must be >= 1", True, True)
    elif "dt" in sec:
        dt = _num(problems, sec, "dt", lambda v: v > 0, "equation.dt: must be positive")
        T = sec.get("T")
        if dt and isinstance(T, (int, float)) and T > 0:
            r = T / dt
            if abs(r - round(r)) > 1e-9 * r:
                problems.append("equation.dt: T must be a whole number of steps")
    else:
        problems.append("equation.nt: missing (give nt or dt)")
    drift = sec.get("drift", {"name": "zero"})
    if not isinstance(drift, dict) or drift.get("name") not in BUILTIN_DRIFTS:
        name = drift.get("name") if isinstance(drift, dict) else drift
        problems.append(f"equation.drift.name: unknown drift {name!r} "
                        f"(known: {', '.join(BUILTIN_DRIFTS)})")
    data = sec.get("data", {"name": "constant"})
    if not isinstance(data, dict) or data.get("name") not in BUILTIN_DATA:
        name = data.get("name") if isinstance(data, dict) else data
        problems.append(f"equation.data.name: unknown initial data {name!r} "
                        f"(known: {', '.join(BUILTIN_DATA)})")
    if len(problems) > p0:
        return None
    try:
        dr = drift_from_dict(drift)
    except TypeError as exc:
        problems.append(f"equation.drift: {exc}")
        return None
    for msg in dr.spot_check():
        problems.append(f"equation.drift: {msg}")
    try:
        dat = data_from_dict(data)
    except (TypeError, ValueError) as exc:
        problems.append(f"equation.data: {exc}")
        return None
    kernel_kind, dim = kind, int(sec.get("d", 1))
    if not dr.zero:
        if kernel_kind == "wave" and dim != 1:
            problems.append("equation: nonlinear wave requires d=1")
        if kernel_kind == "heat" and dim not in (1, 2):
            problems.append("equation: nonlinear heat requires d in {1, 2}")
        if kernel_kind == "heat" and dr.bound is None and dat.holder_exponent is None:
            problems.append("equation: heat with an unbounded (general Lipschitz) drift needs "
                            "Holder-tagged initial data u0")
    if len(problems) > p0:
        return None
    try:
        return build_equation(sec)
    except (ValueError, SpdeLabError) as exc:
        problems.append(f"equation: {exc}")
        return None


def validate_config(cfg):
    """Every schema and invariant violation in `cfg` (empty when valid)."""
    problems = []
    if not isinstance(cfg, dict):
        return ["top level must be a mapping"]
    for k in cfg:
        if k not in SECTIONS:
            problems.append(f"{k}: unknown section (known: {', '.join(SECTIONS)})")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        problems.append(f"experiment: expected one of {', '.join(EXPERIMENTS)}, got {exp!r}")
    for need in NEEDS.get(exp, ()):
        opts = need.split("|")
        if not any(o in cfg for o in opts):
            problems.append(f"{opts[0]}: section required for experiment {exp!r}")
    measure = family = eq = None
    if "measure" in cfg:
        measure = _check_measure(cfg["measure"], "measure", problems)
    if "family" in cfg:
        family = _check_family(cfg["family"], problems)
    if "equation" in cfg:
        eq = _check_equation(cfg["equation"], problems)
    dims = {}
    if measure is not None:
        dims["measure"] = measure.dimension
    if family is not None:
        dims["family"] = family.dimension
    if eq is not None:
        dims["equation"] = eq.kernel.d
    if len(set(dims.values())) > 1:
        problems.append("dimensions differ across sections: "
                        + ", ".join(f"{k} d={v}" for k, v in dims.items()))
    lat = cfg.get("lattice", {})
    if not isinstance(lat, dict):
        problems.append("lattice: expected a mapping")
    else:
        _num(problems, lat, "eps", lambda v: 0 < v <= 0.1, "lattice.eps: must lie in (0, 0.1]",
             False)
        _num(problems, lat, "gamma", lambda v: v >= 1, "lattice.gamma: must be >= 1", False)
    ens = cfg.get("ensemble", {})
    if not isinstance(ens, dict):
        problems.append("ensemble: expected a mapping")
    else:
        _num(problems, ens, "samples", lambda v: v >= 1, "ensemble.samples: must be >= 1",
             "ensemble" in cfg and exp in ("simulate", "solve", "regularity", "grr"), True)
        _num(problems, ens, "seed", lambda v: 0 <= v < 2 ** 64, "ensemble.seed: must be a "
             "non-negative 64-bit integer", False, True)
        _num(problems, ens, "batch", lambda v: v >= 1, "ensemble.batch: must be >= 1", False,
             True)
    sol = cfg.get("solver", {})
    if not isinstance(sol, dict):
        problems.append("solver: expected a mapping")
    else:
        _num(problems, sol, "tol", lambda v: v > 0, "solver.tol: must be positive", False)
        _num(problems, sol, "max_iter", lambda v: v >= 1, "solver.max_iter: must be >= 1",
             False, True)
    an = cfg.get("analysis", {})
    if not isinstance(an, dict):
        problems.append("analysis: expected a mapping")
        an = {}
    if "q" in an:
        _num(problems, an, "q", lambda v: 0 < v < 2, "analysis.q: must lie in (0, 2)")
    if exp == "regularity":
        if an.get("direction") not in ("space", "time"):
            problems.append(f"analysis.direction: expected space or time, got "
                            f"{an.get('direction')!r}")
        lags = an.get("lags")
        if (not isinstance(lags, list) or len(lags) < 2
                or not all(isinstance(h, (int, float)) and h > 0 for h in lags)):
            problems.append("analysis.lags: expected a list of at least 2 positive lags")
        _num(problems, an, "p", lambda v: v > 0, "analysis.p: must be positive", False)
    if exp == "grr":
        g = an.get("grr", {})
        if not isinstance(g, dict):
            problems.append("analysis.grr: expected a mapping")
        else:
            _num(problems, g, "gamma", lambda v: v >= 1, "analysis.grr.gamma: must be >= 1")
            _num(problems, g, "k", lambda v: v > 0, "analysis.grr.k: must be positive")
            _num(problems, g, "m", lambda v: v >= 1, "analysis.grr.m: must be >= 1", False,
                 True)
        if eq is not None and eq.kernel.d != 1:
            problems.append("analysis.grr: paths are checked in d=1 only")
    if exp == "converge":
        for k in ("pairs", "energy_samples", "n_perm"):
            if k in an:
                _num(problems, an, k, lambda v: v >= 0, f"analysis.{k}: must be >= 0", True, True)
        if an.get("energy_samples", 0) and eq is None:
            problems.append("equation: section required for energy distances")
    if exp in ("simulate", "grr") and eq is not None and not eq.drift.zero:
        problems.append(f"equation.drift: experiment {exp!r} simulates the linear field; "
                        "use drift zero (or the solve experiment)")
    if exp in ("simulate", "solve", "regularity", "grr") and measure is not None:
        if ms.is_divergent(ms.dalang_integral(measure)):
            problems.append("measure: not Dalang-integrable, no linear solution exists")
    out = cfg.get("output", {})
    if not isinstance(out, dict) or not isinstance(out.get("dir", "out"), str):
        problems.append("output.dir: expected a string")
    return problems


def check_config(cfg):
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def lattice_options(cfg):
    lat = cfg.get("lattice", {})
    return {"eps": float(lat.get("eps", 1e-2)), "gamma": float(lat.get("gamma", 2.0))}


def is_finite(x):
    return not ms.is_divergent(x) and math.isfinite(x)
