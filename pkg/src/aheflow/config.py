"""Experiment configuration: an INI file whose values are JSON literals.

Bare words (``rk4``, ``inf``) are read as strings.  Complex numbers are
written as strings such as ``"0.1+0.2j"``.  Unknown sections and keys are
rejected.  Example::

    [geometry]
    N = 16

    [bundle]
    rank = 2
    beta = 0.0
    modes = [{"wavevector": [1, 0, 0, 0], "amplitude": [[0.1, "0.05j"], ["-0.05j", 0]], "kind": "cos"}]

    [flow]
    k = 20
    dt = 0.001
    t_end = 0.5
"""

from __future__ import annotations

import configparser
import copy
import json
import math
from pathlib import Path

import numpy as np

from . import validation
from .bundle import exp_metric, identity_metric, mode_field, random_hermitian_field
from .flow import INTEGRATORS, FlowConfig
from .topology import integral_beta

ENV_PREFIX = "AHEFLOW_"

# section -> key -> (default, kind)
SCHEMA = {
    "geometry": {
        "N": (16, "int"),
        "g": (None, "list?"),
        "normalize_volume": (False, "bool"),
        "dealias": (False, "bool"),
    },
    "bundle": {
        "rank": (1, "int"),
        "beta": (0.0, "float"),
        "degree": (None, "float?"),
        "modes": (
            [
                {"wavevector": [1, 0, 0, 0], "amplitude": 0.2, "kind": "cos"},
                {"wavevector": [0, 0, 1, 0], "amplitude": 0.15, "kind": "sin"},
            ],
            "list",
        ),
        "random": (False, "bool"),
        "amplitude": (0.1, "float"),
        "band": (2, "int"),
        "seed": (0, "int"),
    },
    "flow": {
        "k": (20.0, "k"),
        "dt": (1e-3, "float"),
        "t_end": (1.0, "float"),
        "integrator": ("rk4", "str"),
        "tol": (1e-8, "float?"),
        "stability_constant": (1.0, "float"),
        "max_residual": (1e6, "float"),
        "min_margin": (1e-8, "float"),
    },
    "output": {
        "csv": ("trajectory.csv", "str"),
        "report": ("report.json", "str"),
        "snapshot_every": (0, "int"),
        "snapshot_dir": ("snapshots", "str"),
    },
    "chi": {"k": ([1, 2, 3, 4], "list")},
    "check_path": {
        "k": (20.0, "k"),
        "steps": (256, "int"),
        "modes": ([{"wavevector": [1, 0, 0, 0], "amplitude": 0.3, "kind": "cos"}], "list"),
        "bow": (
            [
                {"wavevector": [1, 0, 0, 0], "amplitude": 0.2, "kind": "cos"},
                {"wavevector": [0, 1, 0, 0], "amplitude": 0.15, "kind": "sin"},
            ],
            "list",
        ),
        "profile": ("sine", "str"),
        "tol": (1e-6, "float"),
    },
    "check_moment": {
        "k": (10.0, "k"),
        "dt": ([1e-3, 5e-4], "list"),
        "t_check": (0.01, "float"),
        "tol": (1e-3, "float"),
    },
    "check_identities": {"tol": (1e-8, "float")},
    "check_k_limit": {"k": ([25, 50, 100, 200], "list"), "tol": (0.1, "float")},
}

_MODE_KEYS = {"wavevector", "amplitude", "kind"}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _parse_value(section, key, raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        text = raw.strip()
        if text.startswith(("[", "{", '"')):
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None
        return text


def _as_complex(x, where):
    if isinstance(x, list):
        return [_as_complex(v, where) for v in x]
    if isinstance(x, bool):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, str):
        try:
            return complex(x.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"{where}: cannot read {x!r} as a complex number") from None
    raise ConfigError(f"{where}: expected a number, got {x!r}")


def _check_type(section, key, value):
    where = f"[{section}] {key}"
    kind = SCHEMA[section][key][1]
    if kind.endswith("?"):
        if value is None:
            return None
        kind = kind[:-1]
    if kind == "k":
        try:
            return validation.check_k(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if kind == "bool" and isinstance(value, bool):
        return value
    if kind == "int" and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind == "float" and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind == "str" and isinstance(value, str):
        return value
    if kind == "list" and isinstance(value, list):
        return value
    names = {"bool": "true or false", "int": "an integer", "float": "a number", "str": "a string", "list": "a list"}
    raise ConfigError(f"{where} must be {names[kind]}, got {value!r}")


def _validate_modes(section, key, modes):
    for i, mode in enumerate(modes):
        where = f"[{section}] {key}[{i}]"
        if not isinstance(mode, dict):
            raise ConfigError(f"{where} must be an object with keys {sorted(_MODE_KEYS)}")
        extra = set(mode) - _MODE_KEYS
        if extra:
            raise ConfigError(f"{where}: unknown key {sorted(extra)[0]!r}")
        if "wavevector" not in mode or "amplitude" not in mode:
            raise ConfigError(f"{where} needs 'wavevector' and 'amplitude'")
        try:
            validation.check_wavevector(mode["wavevector"])
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        if mode.get("kind", "cos") not in ("cos", "sin"):
            raise ConfigError(f"{where}: kind must be 'cos' or 'sin'")
        _as_complex(mode["amplitude"], where)


def _positive_list(section, key, values, allow_zero=False):
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 or (v == 0 and not allow_zero):
            raise ConfigError(f"[{section}] {key} entries must be positive numbers, got {v!r}")
    if not values:
        raise ConfigError(f"[{section}] {key} must not be empty")


def _validate(cfg):
    flow = cfg["flow"]
    if flow["integrator"] not in INTEGRATORS:
        raise ConfigError(f"[flow] integrator must be one of {INTEGRATORS}, got {flow['integrator']!r}")
    for key in ("dt", "stability_constant", "max_residual"):
        if not flow[key] > 0:
            raise ConfigError(f"[flow] {key} must be positive")
    if flow["t_end"] < 0:
        raise ConfigError("[flow] t_end must be non-negative")
    b = cfg["bundle"]
    if b["rank"] < 1:
        raise ConfigError("[bundle] rank must be at least 1")
    if b["degree"] is not None and b["beta"] != 0.0:
        raise ConfigError("[bundle] give either beta or degree, not both")
    if b["seed"] < 0 or b["seed"] >= 2 ** 64:
        raise ConfigError("[bundle] seed must be an unsigned 64-bit integer")
    if b["band"] < 1:
        raise ConfigError("[bundle] band must be at least 1")
    _validate_modes("bundle", "modes", b["modes"])
    _validate_modes("check_path", "modes", cfg["check_path"]["modes"])
    _validate_modes("check_path", "bow", cfg["check_path"]["bow"])
    if cfg["check_path"]["steps"] < 4 or cfg["check_path"]["steps"] % 4:
        raise ConfigError("[check_path] steps must be a positive multiple of 4")
    if cfg["check_path"]["profile"] not in ("quadratic", "sine"):
        raise ConfigError("[check_path] profile must be 'quadratic' or 'sine'")
    _positive_list("chi", "k", cfg["chi"]["k"], allow_zero=True)
    _positive_list("check_moment", "dt", cfg["check_moment"]["dt"])
    _positive_list("check_k_limit", "k", cfg["check_k_limit"]["k"])
    if cfg["output"]["snapshot_every"] < 0:
        raise ConfigError("[output] snapshot_every must be non-negative")
    g = cfg["geometry"]["g"]
    if g is not None:
        G = np.array(_as_complex(g, "[geometry] g"))
        if G.shape != (2, 2):
            raise ConfigError(f"[geometry] g must be 2x2, got shape {G.shape}")
    try:
        build_geometry(cfg)
    except ValueError as exc:
        raise ConfigError(f"[geometry] {exc}") from None
    return cfg


def defaults():
    return {sec: {key: copy.deepcopy(v[0]) for key, v in keys.items()} for sec, keys in SCHEMA.items()}


def parse_config(text, source="<string>"):
    """Parse INI text into a fully populated, validated config dict."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            value = _parse_value(section, key, raw)
            cfg[section][key] = _check_type(section, key, value)
    return _validate(cfg)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path))


def echo(cfg):
    """Normalized JSON-safe form of a config (``inf`` spelled as a string)."""

    def norm(x):
        if isinstance(x, float) and math.isinf(x):
            return "inf"
        if isinstance(x, dict):
            return {k: norm(v) for k, v in x.items()}
        if isinstance(x, list):
            return [norm(v) for v in x]
        return x

    return norm(cfg)


# -- builders --------------------------------------------------------------------


def build_geometry(cfg):
    geo = cfg["geometry"]
    g = None if geo["g"] is None else np.array(_as_complex(geo["g"], "[geometry] g"))
    return validation.check_geometry(geo["N"], g, geo["normalize_volume"], geo["dealias"])


def _modes(spec, rank):
    out = []
    for mode in spec:
        A = validation.check_hermitian_amplitude(np.array(_as_complex(mode["amplitude"], "amplitude")), rank)
        out.append((tuple(mode["wavevector"]), A, mode.get("kind", "cos")))
    return out


def mode_sum(geometry, spec, rank):
    return mode_field(geometry, _modes(spec, rank), rank)


def bundle_beta(cfg):
    b = cfg["bundle"]
    return integral_beta(b["degree"]) if b["degree"] is not None else b["beta"]


def build_metric(cfg, geometry=None, seed=None):
    """Initial metric ``exp(X)`` with ``X`` from the listed modes plus optional noise."""
    geometry = geometry or build_geometry(cfg)
    b = cfg["bundle"]
    rank = b["rank"]
    beta = bundle_beta(cfg)
    try:
        X = mode_sum(geometry, b["modes"], rank)
        if b["random"]:
            X = X + random_hermitian_field(
                geometry, rank, b["amplitude"], b["band"], b["seed"] if seed is None else seed
            )
    except ValueError as exc:
        raise ConfigError(f"[bundle] {exc}") from None
    if not np.any(X):
        return identity_metric(geometry, rank, beta)
    return exp_metric(geometry, X, beta)


def build_flow_config(cfg):
    f = cfg["flow"]
    try:
        return _flow_config(f, cfg)
    except ValueError as exc:
        raise ConfigError(f"[flow] {exc}") from None


def _flow_config(f, cfg):
    return FlowConfig(
        k=f["k"],
        dt=f["dt"],
        t_end=f["t_end"],
        integrator=f["integrator"],
        tol=f["tol"],
        max_residual=f["max_residual"],
        min_margin=f["min_margin"],
        stability_constant=f["stability_constant"],
        snapshot_every=cfg["output"]["snapshot_every"],
    )
