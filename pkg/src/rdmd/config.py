"""Run configuration: one JSON document that reproduces a run exactly.

CLI flags override file values, file values override defaults.  Unknown
keys are rejected so typos fail loudly, and every command writes its
fully resolved configuration next to its outputs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from .errors import ParameterError
from .schedule import ScheduleSpec
from .solver import SolverConfig

_TOP_KEYS = {"seed", "solver", "schedule", "operator", "backend"}
_SOLVER_KEYS = {"lambda", "tau", "zeta", "eta", "sigma_n", "trace_every"}
_SCHEDULE_KEYS = {"t_train", "beta_start", "beta_end", "t_solve", "det_mode", "det_params"}
_DET_PARAM_KEYS = {"sigma", "sigma_max", "sigma_min"}
_OPERATOR_KEYS = {"kind", "scale", "kernel_path", "gaussian", "motion", "mask_path"}
_GAUSSIAN_KEYS = {"size", "std"}
_MOTION_KEYS = {"size", "length", "angle_deg"}
_BACKEND_KEYS = {"kind", "prior", "block", "threshold_scale", "spec", "timeout"}
_PRIOR_KEYS = {"type", "s2", "rho"}


def default_config() -> dict[str, Any]:
    return {
        "seed": 0,
        "solver": {
            "lambda": 20.0,
            "tau": 0.1,
            "zeta": 0.8,
            "eta": 0.25,
            "sigma_n": 0.05,
            "trace_every": 1,
        },
        "schedule": {
            "t_train": 1000,
            "beta_start": 1e-4,
            "beta_end": 0.02,
            "t_solve": 100,
            "det_mode": "log_spaced",
        },
        "operator": {"kind": "identity"},
        "backend": {"kind": "wiener", "prior": {"type": "smoothness", "s2": 1.0, "rho": 16.0}},
    }


def _reject_unknown(d: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ParameterError(f"unknown {where} keys: {sorted(unknown)}")


def validate_config(cfg: Mapping[str, Any]) -> None:
    _reject_unknown(cfg, _TOP_KEYS, "config")
    _reject_unknown(cfg.get("solver", {}), _SOLVER_KEYS, "solver")
    sched = cfg.get("schedule", {})
    _reject_unknown(sched, _SCHEDULE_KEYS, "schedule")
    _reject_unknown(sched.get("det_params", {}), _DET_PARAM_KEYS, "schedule.det_params")
    op = cfg.get("operator", {})
    _reject_unknown(op, _OPERATOR_KEYS, "operator")
    _reject_unknown(op.get("gaussian", {}), _GAUSSIAN_KEYS, "operator.gaussian")
    _reject_unknown(op.get("motion", {}), _MOTION_KEYS, "operator.motion")
    backend = cfg.get("backend", {})
    _reject_unknown(backend, _BACKEND_KEYS, "backend")
    _reject_unknown(backend.get("prior", {}), _PRIOR_KEYS, "backend.prior")


def merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    """Deep merge: override wins, nested dicts merge, other values replace."""
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config_file(path) -> dict[str, Any]:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ParameterError(f"config file {path} must hold a JSON object")
    validate_config(cfg)
    return cfg


def resolve(file_cfg: Mapping[str, Any] | None, overrides: Mapping[str, Any]) -> dict[str, Any]:
    """defaults <- file <- flags, then fill derived defaults and validate."""
    cfg = default_config()
    if file_cfg:
        cfg = merge(cfg, file_cfg)
    cfg = merge(cfg, overrides)
    validate_config(cfg)
    sched = cfg["schedule"]
    if "det_params" not in sched:
        if sched.get("det_mode", "log_spaced") == "log_spaced":
            # Descending-strength default: start strong, end at the noise floor.
            sigma_n = float(cfg["solver"].get("sigma_n", 0.05))
            sigma_min = max(sigma_n, 0.01)
            sched["det_params"] = {
                "sigma_max": max(0.2, sigma_min),
                "sigma_min": sigma_min,
            }
        else:
            raise ParameterError("constant det schedule requires det_params.sigma")
    return cfg


def solver_config_from(cfg: Mapping[str, Any]) -> SolverConfig:
    s = cfg["solver"]
    return SolverConfig(
        lam=float(s["lambda"]),
        tau=float(s["tau"]),
        zeta=float(s["zeta"]),
        eta=float(s["eta"]),
        sigma_n=float(s["sigma_n"]),
        t_solve=int(cfg["schedule"]["t_solve"]),
        seed=int(cfg["seed"]),
        trace_every=int(s["trace_every"]),
    )


def schedule_spec_from(cfg: Mapping[str, Any]) -> ScheduleSpec:
    return ScheduleSpec.from_dict(cfg["schedule"])


def dump_config(cfg: Mapping[str, Any]) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
