"""JSON experiment configs: validation with field-path diagnostics, defaults, parsing."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .gns import SequenceVector, apply_word
from .nccore import DampingProfile, GaussianPacket, GridSpec, StarVariant, TestFunction, ThetaMatrix, make_theta
from .wightman import DEFAULT_BUDGET, ModeField

EXPERIMENTS = ("star_eval", "gram", "quotient_krein", "limit_sweep", "hermiticity", "cyclicity")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "field": {"mass": 1.0, "box_length": 2 * math.pi, "cutoff": 0},
    "tolerances": {
        "isotropic": 1e-10,
        "hermiticity": 1e-10,
        "wightman_hermiticity": 1e-11,
        "fft_vs_closed": 1e-8,
        "series_vs_closed": 1e-6,
        "trace": 1e-8,
        "conjugation": 1e-10,
        "diagonal": 1e-8,
        "grid_decay": 1e-10,
        "reconstruction": 1e-10,
        "sweep_noise": 0.05,
        "min_slope": 0.9,
    },
    "budget": {"max_terms": DEFAULT_BUDGET},
    "output": {"dir": "out", "csv": True},
}

EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "star_eval": {"pair": ["f", "g"], "series_order": 8, "grid": None, "two_point_grid": None,
                  "variant": {"tag": "plain_star"}, "random_chains": 20},
    "gram": {},
    "quotient_krein": {"matrix": None, "expected_null_dim": None, "expected_signature": None},
    "limit_sweep": {"theta_values": [0.1, 0.03, 0.01, 0.003, 0.0]},
    "hermiticity": {"orders": [2, 4, 6], "samples": {"2": 1000, "4": 200, "6": 50}},
    "cyclicity": {"generators": [], "max_level": 2, "expected_ranks": None},
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_raw(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(p), f"cannot read config ({exc.strerror})") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}", f"invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    return raw


def resolve(raw: dict, experiment: str, seed: int | None = None) -> dict:
    """Fill defaults; the result is echoed verbatim into the report."""
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    named = raw.get("experiment")
    if named is not None and named != experiment:
        raise ConfigError("experiment", f"config is for {named!r}, not {experiment!r}")
    cfg = _merge(DEFAULTS, EXPERIMENT_DEFAULTS[experiment])
    cfg = _merge(cfg, raw)
    cfg["experiment"] = experiment
    if seed is not None:
        cfg["seed"] = seed
    return cfg


# ----------------------------------------------------------------------------
# typed readers
# ----------------------------------------------------------------------------

def _num(v, path: str, positive: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if positive and v <= 0:
        raise ConfigError(path, "must be positive")
    return v


def _int(v, path: str, lo: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be >= {lo}")
    return v


def _complex(v, path: str) -> complex:
    if isinstance(v, list):
        if len(v) != 2:
            raise ConfigError(path, "complex numbers are [re, im]")
        return complex(_num(v[0], f"{path}[0]"), _num(v[1], f"{path}[1]"))
    return complex(_num(v, path))


def _vec(v, path: str, n: int | None = None) -> np.ndarray:
    if not isinstance(v, list):
        raise ConfigError(path, "expected a list of numbers")
    out = np.array([_num(x, f"{path}[{i}]") for i, x in enumerate(v)])
    if n is not None and out.size != n:
        raise ConfigError(path, f"expected {n} components, got {out.size}")
    return out


def parse_theta(spec, path: str = "theta") -> ThetaMatrix:
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object with 'matrix' or 'dim'/'upper'")
    if "matrix" in spec:
        rows = spec["matrix"]
        if not isinstance(rows, list) or not rows:
            raise ConfigError(f"{path}.matrix", "expected a square list of rows")
        m = np.array([_vec(r, f"{path}.matrix[{i}]", len(rows)) for i, r in enumerate(rows)])
        for i in range(len(rows)):
            for j in range(i, len(rows)):
                if m[i, j] != -m[j, i]:
                    raise ConfigError(f"{path}.matrix[{i}][{j}]",
                                      f"not antisymmetric: {m[i, j]!r} vs matrix[{j}][{i}] = {m[j, i]!r}")
        try:
            return ThetaMatrix(m)
        except ValueError as exc:
            raise ConfigError(f"{path}.matrix", str(exc)) from exc
    dim = _int(spec.get("dim", 2), f"{path}.dim", 2)
    upper = spec.get("upper", [])
    entries = []
    for i, e in enumerate(upper):
        if not isinstance(e, list) or len(e) != 3:
            raise ConfigError(f"{path}.upper[{i}]", "entries are [mu, nu, value]")
        entries.append((_int(e[0], f"{path}.upper[{i}][0]", 0), _int(e[1], f"{path}.upper[{i}][1]", 0),
                        _num(e[2], f"{path}.upper[{i}][2]")))
    try:
        return make_theta(dim, entries)
    except ValueError as exc:
        raise ConfigError(f"{path}.upper", str(exc)) from exc


def parse_packet(spec, path: str, dim: int) -> GaussianPacket:
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected a packet object")
    center = _vec(spec.get("center", [0.0] * dim), f"{path}.center", dim)
    momentum = _vec(spec.get("momentum", [0.0] * dim), f"{path}.momentum", dim)
    w = spec.get("width", 1.0)
    if isinstance(w, list) and w and isinstance(w[0], list):
        width = np.array([_vec(r, f"{path}.width[{i}]", dim) for i, r in enumerate(w)])
    elif isinstance(w, list):
        width = _vec(w, f"{path}.width", dim)
    else:
        width = _num(w, f"{path}.width", positive=True)
    try:
        return GaussianPacket(_complex(spec.get("coeff", 1.0), f"{path}.coeff"), center, momentum, width)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_functions(spec, dim: int, path: str = "functions") -> dict[str, TestFunction]:
    if not isinstance(spec, dict) or not spec:
        raise ConfigError(path, "expected a non-empty object of named test functions")
    out = {}
    for name, f in spec.items():
        p = f"{path}.{name}"
        if isinstance(f, dict) and "terms" in f:
            terms = f["terms"]
            if not isinstance(terms, list):
                raise ConfigError(f"{p}.terms", "expected a list of packets")
            out[name] = TestFunction(tuple(parse_packet(t, f"{p}.terms[{i}]", dim) for i, t in enumerate(terms)), dim)
        else:
            out[name] = TestFunction.of(parse_packet(f, p, dim))
    return out


def _lookup(name, functions: dict, path: str) -> TestFunction:
    if name not in functions:
        raise ConfigError(path, f"unknown function {name!r}")
    return functions[name]


def parse_basis(spec, functions: dict, path: str = "basis") -> list[SequenceVector]:
    """Each entry is a word [f, g, ...] (phi_f phi_g ... vacuum) or {"terms": [{"coeff", "word"}]}."""
    if not isinstance(spec, list) or not spec:
        raise ConfigError(path, "expected a non-empty list of vectors")
    out = []
    for i, v in enumerate(spec):
        p = f"{path}[{i}]"
        if isinstance(v, list):
            out.append(apply_word([_lookup(n, functions, f"{p}[{j}]") for j, n in enumerate(v)]))
        elif isinstance(v, dict) and isinstance(v.get("terms"), list):
            total = SequenceVector()
            for j, t in enumerate(v["terms"]):
                tp = f"{p}.terms[{j}]"
                if not isinstance(t, dict) or not isinstance(t.get("word"), list):
                    raise ConfigError(tp, "terms need a 'word' list")
                word = [_lookup(n, functions, f"{tp}.word[{k}]") for k, n in enumerate(t["word"])]
                total = total + apply_word(word) * _complex(t.get("coeff", 1.0), f"{tp}.coeff")
            out.append(total)
        else:
            raise ConfigError(p, "expected a word list or an object with 'terms'")
    return out


def parse_field(spec, path: str = "field") -> ModeField:
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object")
    return ModeField(
        mass=_num(spec.get("mass"), f"{path}.mass", positive=True),
        box_length=_num(spec.get("box_length"), f"{path}.box_length", positive=True),
        cutoff=_int(spec.get("cutoff"), f"{path}.cutoff", 0),
    )


def parse_variant(spec, path: str = "variant") -> StarVariant:
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object")
    profile = None
    if spec.get("profile") is not None:
        ps = spec["profile"]
        if not isinstance(ps, dict):
            raise ConfigError(f"{path}.profile", "expected an object")
        kw = {k: _num(ps[k], f"{path}.profile.{k}", positive=True)
              for k in ("C", "theta_sup", "alpha", "epsilon") if k in ps}
        try:
            profile = DampingProfile(kind=ps.get("kind", "none"), **kw)
        except ValueError as exc:
            raise ConfigError(f"{path}.profile", str(exc)) from exc
    try:
        return StarVariant(spec.get("tag", "plain_star"), profile)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_grid(spec, dim: int, path: str) -> GridSpec | None:
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object with 'n' and 'half_width'")
    n = _int(spec.get("n"), f"{path}.n", 2)
    half = _num(spec.get("half_width"), f"{path}.half_width", positive=True)
    try:
        return GridSpec.cube(dim, half, n)
    except ValueError as exc:
        raise ConfigError(f"{path}.n", str(exc)) from exc


def parse_matrix(spec, path: str = "matrix") -> np.ndarray:
    if not isinstance(spec, list) or not spec:
        raise ConfigError(path, "expected a square list of rows")
    n = len(spec)
    rows = []
    for i, r in enumerate(spec):
        if not isinstance(r, list) or len(r) != n:
            raise ConfigError(f"{path}[{i}]", f"expected {n} entries")
        rows.append([_complex(x, f"{path}[{i}][{j}]") for j, x in enumerate(r)])
    return np.array(rows, dtype=complex)


@dataclass
class Tolerances:
    values: dict

    def __getitem__(self, key: str) -> float:
        return _num(self.values[key], f"tolerances.{key}", positive=True)
