"""Experiment configuration: a flat JSON document with unit-suffixed keys.

Loading enters every model only through ``A_over_Cs``, so absolute loadings
in mg/mL are never needed.  ``A_over_Cs`` and ``d_m`` may be lists to run a
family of curves in one experiment.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .core import ChannelParams, ConfigError, MatrixParams
from .pbs import MODES, RELEASE_MODES

EXPERIMENTS = (
    "release-profile",
    "channel-response",
    "absorption-rate",
    "regime-nrmse",
    "regime-deviation",
    "micelle-release",
    "micelle-response",
    "regime-report",
)

SPACINGS = ("linear", "log")

DEFAULTS: Dict[str, Any] = {
    "M_inf": 1e4,
    "sigma": 0.99,
    "n_points": 200,
    "spacing": "linear",
    "seed": 0,
    "realizations": 0,
    "absorption_mode": "intra-step-crossing",
    "release_mode": "intra-step-crossing",
}

# key -> (required, kind)
SCHEMA: Dict[str, Tuple[bool, str]] = {
    "experiment": (True, "str"),
    "a_m": (True, "pos"),
    "D_m_m2s": (True, "nonneg"),
    "A_over_Cs": (True, "pos_list"),
    "M_inf": (False, "pos"),
    "D_c_m2s": (False, "pos"),
    "d_m": (False, "pos_list"),
    "r_rx_m": (False, "pos"),
    "sigma": (False, "unit"),
    "t_end_s": (False, "pos"),
    "t_start_s": (False, "pos"),
    "n_points": (False, "count"),
    "spacing": (False, "str"),
    "dt_s": (False, "pos"),
    "seed": (False, "int"),
    "realizations": (False, "int"),
    "absorption_mode": (False, "str"),
    "release_mode": (False, "str"),
    "taus": (False, "pos_list"),
    "note": (False, "str"),
}


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_field(key, kind, value, errors):
    if kind == "str":
        if not isinstance(value, str):
            errors.append(f"{key}: expected a string, got {value!r}")
        return
    if kind in ("int", "count"):
        if not isinstance(value, int) or isinstance(value, bool):
            errors.append(f"{key}: expected an integer, got {value!r}")
        elif value < 0 or (kind == "count" and value < 2):
            errors.append(f"{key}: out of range ({value!r})")
        return
    values = value if (kind == "pos_list" and isinstance(value, list)) else [value]
    if kind == "pos_list" and isinstance(value, list) and not value:
        errors.append(f"{key}: empty list")
    for v in values:
        if not _is_number(v) or v != v:
            errors.append(f"{key}: expected a number, got {v!r}")
        elif kind in ("pos", "pos_list") and not v > 0:
            errors.append(f"{key}: must be positive, got {v!r}")
        elif kind == "nonneg" and v < 0:
            errors.append(f"{key}: must be non-negative, got {v!r}")
        elif kind == "unit" and not 0 < v < 1:
            errors.append(f"{key}: must lie in (0, 1), got {v!r}")


def _as_list(v):
    return [float(x) for x in v] if isinstance(v, list) else [float(v)]


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    matrices: Tuple[MatrixParams, ...]
    channels: Tuple[ChannelParams, ...]
    raw: Dict[str, Any] = field(compare=False, repr=False)

    @property
    def matrix(self) -> MatrixParams:
        return self.matrices[0]

    @property
    def channel(self) -> Optional[ChannelParams]:
        return self.channels[0] if self.channels else None

    def get(self, key, default=None):
        return self.raw.get(key, DEFAULTS.get(key, default))

    def to_dict(self):
        return copy.deepcopy(self.raw)

    def to_json(self):
        return json.dumps(self.raw, sort_keys=True, indent=2)

    def hash(self):
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        errors: List[str] = []
        for key in data:
            if key not in SCHEMA:
                errors.append(f"{key}: unknown key")
        for key, (required, kind) in SCHEMA.items():
            if key not in data:
                if required:
                    errors.append(f"{key}: missing")
                continue
            _check_field(key, kind, data[key], errors)
        exp = data.get("experiment")
        if isinstance(exp, str) and exp not in EXPERIMENTS:
            errors.append(f"experiment: unknown {exp!r}, expected one of {', '.join(EXPERIMENTS)}")
        if data.get("spacing", "linear") not in SPACINGS:
            errors.append(f"spacing: expected one of {', '.join(SPACINGS)}")
        if data.get("absorption_mode", DEFAULTS["absorption_mode"]) not in MODES:
            errors.append(f"absorption_mode: expected one of {', '.join(MODES)}")
        if data.get("release_mode", DEFAULTS["release_mode"]) not in RELEASE_MODES:
            errors.append(f"release_mode: expected one of {', '.join(RELEASE_MODES)}")
        channel_keys = ("D_c_m2s", "d_m", "r_rx_m")
        needs_channel = exp not in ("release-profile", "micelle-release")
        if needs_channel:
            for key in channel_keys:
                if key not in data:
                    errors.append(f"{key}: missing (required by {exp})")
        if data.get("realizations", 0) and "dt_s" not in data:
            errors.append("dt_s: missing (required when realizations > 0)")
        if errors:
            raise ConfigError("invalid config:\n  " + "\n  ".join(errors))

        merged = dict(data)
        try:
            matrices = tuple(
                MatrixParams(float(data["a_m"]), float(data["D_m_m2s"]), r, float(data.get("M_inf", DEFAULTS["M_inf"])))
                for r in _as_list(data["A_over_Cs"])
            )
            channels: Tuple[ChannelParams, ...] = ()
            if all(k in data for k in channel_keys):
                channels = tuple(
                    ChannelParams(float(data["D_c_m2s"]), d, float(data["r_rx_m"])) for d in _as_list(data["d_m"])
                )
                for c in channels:
                    for m in matrices:
                        c.check_clearance(m)
        except ValueError as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        return cls(exp, matrices, channels, merged)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

_DRUG_GEOMETRY = {"a_m": 4.5e-9, "d_m": 10e-6, "r_rx_m": 5e-6, "M_inf": 1e4, "sigma": 0.99}

PRESETS: Dict[str, Dict[str, Any]] = {
    "dox-ph5": {
        "experiment": "micelle-response",
        **_DRUG_GEOMETRY,
        "D_m_m2s": 1.82e-22,
        "A_over_Cs": 63.7,
        "D_c_m2s": 5e-11,
        "t_end_s": 2.0e6,
        "n_points": 400,
    },
    "dox-ph74": {
        "experiment": "micelle-response",
        **_DRUG_GEOMETRY,
        "D_m_m2s": 1.82e-22,
        "A_over_Cs": 757.5,
        "D_c_m2s": 5e-11,
        "t_end_s": 60 * 86400.0,
        "n_points": 400,
    },
    "beta-lap": {
        "experiment": "micelle-response",
        **_DRUG_GEOMETRY,
        "D_m_m2s": 2.42e-21,
        "A_over_Cs": 370.4,
        "D_c_m2s": 1e-9,
        "t_end_s": 7 * 86400.0,
        "n_points": 400,
        "note": "D_c for beta-lapachone is an assumed value, not a measured one",
    },
    "eval-secVIA": {
        "experiment": "channel-response",
        "a_m": 1e-6,
        "D_m_m2s": 1e-9,
        "A_over_Cs": [1.0, 25.0, 100.0, 400.0],
        "M_inf": 1e4,
        "D_c_m2s": 1e-9,
        "d_m": [2e-6, 5e-6],
        "r_rx_m": 1e-6,
        "sigma": 0.99,
        "t_end_s": 0.5,
        "t_start_s": 1e-5,
        "n_points": 200,
        "spacing": "log",
    },
    "eval-secVIC": {
        "experiment": "regime-nrmse",
        "a_m": 1e-6,
        "D_m_m2s": 1e-8,
        "A_over_Cs": 1.0,
        "M_inf": 1e4,
        "D_c_m2s": 1e-8,
        "d_m": 20e-6,
        "r_rx_m": 1e-6,
        "sigma": 0.99,
        "taus": [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4],
        "n_points": 400,
    },
}


def preset_dict(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid names: {', '.join(PRESETS)}")
    return copy.deepcopy(PRESETS[name])


def preset(name: str) -> ExperimentConfig:
    return ExperimentConfig.from_dict(preset_dict(name))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)
