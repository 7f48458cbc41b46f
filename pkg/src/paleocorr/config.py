"""Run configuration: nested YAML over built-in defaults.

Precedence, lowest first: defaults, config file, ``PALEOCORR_*`` environment
variables, command-line flags.  Environment keys nest with ``__``, e.g.
``PALEOCORR_INFERENCE__N_STEPS=5000``; their values are parsed as YAML
scalars.  Unknown keys are an error at every level.
"""
from __future__ import annotations

import copy
import os

import yaml

from . import bayes, chronology as chron, experiments as exp, pseudoproxy as pp
from .alignment import DEFAULT_SPECS, AlignmentSpec
from .errors import ConfigError, PaleocorrError

ENV_PREFIX = "PALEOCORR_"
RESOLVED_NAME = "config.resolved.yaml"

_geo = exp.Geometry()

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "inference": {
        "n_steps": bayes.InferenceConfig.n_steps,
        "burn_fraction": bayes.InferenceConfig.burn_fraction,
        "n_keep": bayes.InferenceConfig.n_keep,
        "proposal_scales": list(bayes.DEFAULT_PROPOSAL_SCALES),
        "adapt": True,
        "alpha": 0.05,
    },
    "alignment": {"method": "LI", "scale": 1.0},
    "scenario": {"kind": "agemodel_ensemble", "n_ens": 10},
    "geometry": {
        "sample_interval": _geo.sample_interval,
        "dt": _geo.dt,
        "years_per_unit": _geo.years_per_unit,
        "top_age": _geo.top_age,
        "n_dates": _geo.n_dates,
        "meas_sigma": _geo.meas_sigma,
        "grid_step": _geo.grid_step,
        "n_median": _geo.n_median,
        "retry_cap": _geo.retry_cap,
    },
    "simulate": {
        "n_obs": 150,
        "coupling": 0.7,
        "drag": 0.3,
        "sed_mean": 0.35,
        "sed_skew": 1.5,
    },
    "sweep": {
        "n_pairs": 200,
        "methods": [s.label for s in DEFAULT_SPECS],
        "scenarios": list(exp.SCENARIOS),
        "null_sweep": True,
        "ranges": {k: list(v) for k, v in pp.PARAM_RANGES.items()},
    },
    "correlate": {
        "axis": "age",
        "ensemble": 0,
        "detrend_cutoff": None,
        "meas_sigma_default": chron.DEFAULT_MEAS_SIGMA,
    },
    "windows": {
        "width": 5000.0,
        "step": 2500.0,
        "min_obs": 5,
        "lag_scan": False,
        "lag_min": -3000.0,
        "lag_max": 3000.0,
        "lag_step": 50.0,
    },
    "paths": {"curve": None},
}

# keys whose value may legitimately be null or of a different type than the default
_NULLABLE = {("correlate", "detrend_cutoff"), ("paths", "curve")}


def _check(tree, defaults, path=()):
    if not isinstance(tree, dict):
        raise ConfigError(f"{'.'.join(path) or 'config'}: expected a mapping")
    for key, val in tree.items():
        here = path + (key,)
        name = ".".join(here)
        if key not in defaults:
            raise ConfigError(f"unknown config key {name!r}")
        ref = defaults[key]
        if isinstance(ref, dict):
            if path == ("sweep",) and key == "ranges":
                for k in val or {}:
                    if k not in ref:
                        raise ConfigError(f"unknown config key {name}.{k}")
                continue
            _check(val, ref, here)
        elif val is None:
            if here not in _NULLABLE:
                raise ConfigError(f"{name}: null is not allowed")
        elif isinstance(ref, bool):
            if not isinstance(val, bool):
                raise ConfigError(f"{name}: expected true/false, got {val!r}")
        elif isinstance(ref, (int, float)) or here in _NULLABLE:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"{name}: expected a number, got {val!r}")
            if isinstance(ref, int) and not isinstance(ref, bool) and not float(val).is_integer():
                raise ConfigError(f"{name}: expected an integer, got {val!r}")
        elif isinstance(ref, list) and not isinstance(val, list):
            raise ConfigError(f"{name}: expected a list, got {val!r}")
        elif isinstance(ref, str) and not isinstance(val, str):
            raise ConfigError(f"{name}: expected a string, got {val!r}")


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _env_overrides(environ):
    tree = {}
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in key[len(ENV_PREFIX):].split("__")]
        try:
            val = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{key}: cannot parse value {raw!r}: {exc}") from None
        node = tree
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return tree


def load_config(path=None, overrides=None, environ=None) -> dict:
    """Resolved configuration as a nested dict."""
    cfg = copy.deepcopy(DEFAULTS)
    layers = []
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        layers.append(data)
    layers.append(_env_overrides(os.environ if environ is None else environ))
    if overrides:
        layers.append(overrides)
    for layer in layers:
        _check(layer, DEFAULTS)
        cfg = _merge(cfg, layer)
    # integers given as 3.0 in YAML are normalized to int
    _coerce_ints(cfg, DEFAULTS)
    return cfg


def _coerce_ints(cfg, ref):
    for k, v in ref.items():
        if isinstance(v, dict) and isinstance(cfg.get(k), dict):
            if k != "ranges":
                _coerce_ints(cfg[k], v)
        elif isinstance(v, int) and not isinstance(v, bool) and cfg.get(k) is not None:
            cfg[k] = int(cfg[k])


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True, default_flow_style=False)


def _built(fn, what):
    try:
        return fn()
    except PaleocorrError as exc:
        raise ConfigError(f"invalid {what} settings: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what} settings: {exc}") from None


def inference_config(cfg, seed=None) -> bayes.InferenceConfig:
    c = cfg["inference"]
    return _built(lambda: bayes.InferenceConfig(
        n_steps=c["n_steps"], burn_fraction=c["burn_fraction"], n_keep=c["n_keep"],
        proposal_scales=tuple(c["proposal_scales"]), adapt=c["adapt"],
        seed=cfg["seed"] if seed is None else seed), "inference")


def alignment_spec(cfg) -> AlignmentSpec:
    a = cfg["alignment"]
    return _built(lambda: AlignmentSpec(a["method"], a["scale"]), "alignment")


def scenario_spec(cfg) -> exp.ScenarioSpec:
    s = cfg["scenario"]
    return _built(lambda: exp.ScenarioSpec(s["kind"], s["n_ens"]), "scenario")


def geometry(cfg) -> exp.Geometry:
    return _built(lambda: exp.Geometry(**cfg["geometry"]), "geometry")


def suite_settings(cfg) -> exp.SuiteSettings:
    s = cfg["sweep"]

    def build():
        ranges = {**pp.PARAM_RANGES, **{k: tuple(v) for k, v in s["ranges"].items()}}
        return exp.SuiteSettings(
            n_pairs=s["n_pairs"],
            methods=tuple(AlignmentSpec.parse(m) for m in s["methods"]),
            scenarios=tuple(exp.ScenarioSpec(k, cfg["scenario"]["n_ens"]) for k in s["scenarios"]),
            seed=cfg["seed"],
            inference=inference_config(cfg),
            geometry=geometry(cfg),
            ranges=tuple(sorted(ranges.items())),
            null_sweep=s["null_sweep"],
            alpha=cfg["inference"]["alpha"],
        )
    return _built(build, "sweep")
