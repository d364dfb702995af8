"""Experiment configuration: YAML in, fully materialized defaults out."""

from __future__ import annotations

import copy
import hashlib

import yaml

from .devices import ADC_RESOLUTION, READ_TARGET_I2, MemristorParams, MosfetGeometry
from .solver import SupplyConfig, SynapseSizing

EXPERIMENTS = ("calibrate", "sweep-set", "sweep-read", "mc-set", "mc-read", "readability",
               "snn-train", "snn-cases", "report-all")

DEFAULTS = {
    "experiment": "report-all",
    "seed": 0,
    "threads": 1,
    "output": None,
    "model": {
        "read_target": READ_TARGET_I2,
        "adc_resolution": ADC_RESOLUTION,
        "memristor": {
            "r_hrs": 100e3,
            "r_min": 4e3,
            "r_max": 100e3,
            "sigma0": 250.0,
            "gamma": 1.5,
        },
    },
    "supplies": {
        "vdd_set": 3.3,
        "vdd_read": 1.2,
        "v_readb": 0.0,
        "v_gate": 0.6,
        "energy_window": 1e-6,
    },
    "case": None,
    "sizing": {
        "mp1": {"width": 2.5, "length": 0.5},
        "mn1": {"width": 5.0, "length": 0.5},
        "mn2": {"width": 0.5, "length": 2.5},
    },
    "sweep_set": {"v_gates": [0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3]},
    "sweep_read": {
        "v_gates": [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8],
        "r_pair": [5e3, 20e3],
    },
    "monte_carlo": {
        "n": 5000,
        "set_gates": [0.7, 0.8, 1.0, 1.2],
        "read_resistances": [5e3, 25e3, 50e3, 100e3],
        "a_vth": None,
        "a_beta": 1.0,
        "core_vth_scale": 0.5,
        "memristor_noise": False,
        "calibration_gate": 1.2,
        "calibration_ratio": 0.0974,
    },
    "readability": {"cases": [1, 2, 3, 4, 5, 6]},
    "snn": {
        "datasets": ["wine", "breast_cancer"],
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
        "split_fraction": 0.7,
        "label_column": -1,
        "population": 64,
        "generations": 200,
        "mutation_rate": 0.1,
        "hidden": 0,
        "max_delay": 2,
        "sim_window": 100,
        "max_rate": 0.2,
        "levels": None,
    },
}

# Keys whose value is free-form (no nested key checking).
_OPAQUE = {("snn", "levels")}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _merge(base, override, path=()):
    out = copy.deepcopy(base)
    if not isinstance(override, dict):
        raise ConfigError(f"{'.'.join(path) or 'config'}: expected a mapping")
    for key, value in override.items():
        here = path + (str(key),)
        if key not in base:
            raise ConfigError(f"unknown key: {'.'.join(here)}")
        if isinstance(base[key], dict) and here not in _OPAQUE:
            out[key] = _merge(base[key], value if value is not None else {}, here)
        else:
            out[key] = value
    return out


def resolve(raw: dict | None = None, **overrides) -> dict:
    """Merge a user mapping and flat overrides (seed, threads, ...) into the defaults."""
    cfg = _merge(DEFAULTS, raw or {})
    for key, value in overrides.items():
        if value is not None:
            cfg = _merge(cfg, {key: value})
    validate(cfg)
    return cfg


def load(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data or {}


def _number(cfg, *path, positive=False, integer=False, allow_none=False):
    v = cfg
    for p in path:
        v = v[p]
    name = ".".join(path)
    if v is None and allow_none:
        return
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok:
        raise ConfigError(f"{name}: expected {'an integer' if integer else 'a number'}, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{name}: must be positive, got {v!r}")


def _number_list(cfg, *path, positive=False):
    v = cfg
    for p in path:
        v = v[p]
    name = ".".join(path)
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{name}: expected a non-empty list")
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or (positive and not x > 0):
            raise ConfigError(f"{name}: invalid entry {x!r}")


def validate(cfg: dict) -> None:
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment: must be one of {', '.join(EXPERIMENTS)}")
    _number(cfg, "seed", integer=True)
    if cfg["seed"] < 0:
        raise ConfigError("seed: must be non-negative")
    _number(cfg, "threads", integer=True, positive=True)
    for dev in ("mp1", "mn1", "mn2"):
        for dim in ("width", "length"):
            _number(cfg, "sizing", dev, dim, positive=True)
    if cfg["case"] is not None and cfg["case"] not in (1, 2, 3, 4, 5, 6):
        raise ConfigError(f"case: must be 1..6 or null, got {cfg['case']!r}")
    for key in cfg["supplies"]:
        _number(cfg, "supplies", key)
    for key in cfg["model"]["memristor"]:
        _number(cfg, "model", "memristor", key, positive=key != "sigma0")
    _number(cfg, "model", "read_target", positive=True)
    _number(cfg, "model", "adc_resolution", positive=True)
    _number_list(cfg, "sweep_set", "v_gates")
    _number_list(cfg, "sweep_read", "v_gates")
    _number_list(cfg, "sweep_read", "r_pair", positive=True)
    if len(cfg["sweep_read"]["r_pair"]) != 2:
        raise ConfigError("sweep_read.r_pair: expected two resistances")
    mc = cfg["monte_carlo"]
    _number(cfg, "monte_carlo", "n", integer=True)
    if mc["n"] < 100:
        raise ConfigError("monte_carlo.n: must be >= 100")
    _number_list(cfg, "monte_carlo", "set_gates")
    _number_list(cfg, "monte_carlo", "read_resistances", positive=True)
    _number(cfg, "monte_carlo", "a_vth", allow_none=True)
    for key in ("a_beta", "core_vth_scale", "calibration_gate", "calibration_ratio"):
        _number(cfg, "monte_carlo", key)
    if not isinstance(mc["memristor_noise"], bool):
        raise ConfigError("monte_carlo.memristor_noise: expected true/false")
    cases = cfg["readability"]["cases"]
    if not isinstance(cases, list) or not cases or any(c not in (1, 2, 3, 4, 5, 6) for c in cases):
        raise ConfigError("readability.cases: expected a list of case ids 1..6")
    s = cfg["snn"]
    if not isinstance(s["datasets"], list) or not s["datasets"]:
        raise ConfigError("snn.datasets: expected a non-empty list of names or paths")
    if not isinstance(s["seeds"], list) or not s["seeds"] or \
            any(isinstance(x, bool) or not isinstance(x, int) or x < 0 for x in s["seeds"]):
        raise ConfigError("snn.seeds: expected a list of non-negative integers")
    for key in ("population", "generations", "hidden", "max_delay", "sim_window", "label_column"):
        _number(cfg, "snn", key, integer=True)
    for key in ("split_fraction", "mutation_rate", "max_rate"):
        _number(cfg, "snn", key)
    if s["levels"] is not None:
        if not isinstance(s["levels"], dict) or any(
                isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in s["levels"].values()):
            raise ConfigError("snn.levels: expected a mapping of case label to level count >= 1")
    # Domain checks done by the library types, re-raised with the key name.
    build_supplies(cfg)
    build_sizing(cfg)
    build_memristor(cfg)


def _named(section, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def build_supplies(cfg) -> SupplyConfig:
    return _named("supplies", lambda: SupplyConfig(**cfg["supplies"]))


def build_sizing(cfg) -> SynapseSizing:
    if cfg["case"] is not None:
        from .analysis import DESIGN_CASES
        return DESIGN_CASES[cfg["case"]].sizing
    geoms = {}
    for dev, g in cfg["sizing"].items():
        geoms[dev] = _named(f"sizing.{dev}", lambda g=g: MosfetGeometry(g["width"], g["length"]))
    return SynapseSizing(**geoms)


def build_memristor(cfg) -> MemristorParams:
    return _named("model.memristor", lambda: MemristorParams(**cfg["model"]["memristor"]))


def dump(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def digest(cfg: dict) -> str:
    return hashlib.sha256(dump(cfg).encode("utf-8")).hexdigest()
