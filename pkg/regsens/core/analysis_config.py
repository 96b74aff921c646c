"""
Analysis Configuration Module

Collects data paths, column roles and sensitivity settings for one run.
Defaults come from DEFAULT_CONFIG, are overridden by an optional
`.regsens.json` in the working directory, and finally by command-line flags.
"""

import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .. import config
from .error_handler import ConfigError, ErrorLevel, FileError, InputError, error_handler
from .moments import DENOMINATORS, ColumnRoles, R2Rule
from .osterset import MagnitudeBound

logger = logging.getLogger(__name__)

CONFIG_FILENAME = ".regsens.json"

DEFAULT_CONFIG: Dict[str, Any] = {
    "data": {
        "path": None,
        "moments": None,
        "outcome": None,
        "treatment": None,
        "w0": [],
        "w1": [],
        "cov_denominator": config.DEFAULT_DENOMINATOR,
    },
    "sensitivity": {
        "r2long": ["1.0"],
        "delta": [1.0],
        "delta_bar": [],
        "m": ["inf"],
    },
    "curve": {
        "b_min": None,
        "b_max": None,
        "points": 2001,
    },
    "output": {
        "dir": None,
        "json": False,
        "svg": False,
    },
    "oracle": {
        "seed": 7,
        "instances": config.SUITE_INSTANCES,
        "fault": 0.0,
    },
}


def deep_update(d: Dict[str, Any], u: Dict[str, Any]) -> Dict[str, Any]:
    for k, v in u.items():
        if isinstance(v, dict):
            d[k] = deep_update(d.get(k, {}), v)
        else:
            d[k] = v
    return d


def read_config_json(path: Path) -> Dict[str, Any]:
    """Parse a configuration file; every known section must be an object."""
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read {path}: {e}", kind="invalid_config", field=str(path),
                          expected="a JSON object", actual=str(e)) from e
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} is not a JSON object", kind="invalid_config", field=str(path),
                          expected="a JSON object", actual=type(payload).__name__)
    for section, value in payload.items():
        if section in DEFAULT_CONFIG and not isinstance(value, dict):
            raise ConfigError(f"section {section!r} is not an object", kind="invalid_config",
                              field=f"{path}: {section}", expected="a JSON object",
                              actual=type(value).__name__)
    return payload


def split_list(value: Any) -> List[str]:
    """'a,b' or ['a', 'b,c'] -> ['a', 'b', 'c']."""
    if value is None:
        return []
    if isinstance(value, str):
        value = [value]
    items: List[str] = []
    for part in value:
        items.extend(s.strip() for s in str(part).split(',') if s.strip())
    return items


def parse_floats(values: Sequence[Any], flag: str, nonnegative: bool = False) -> List[float]:
    flat: List[Any] = []
    for value in values:
        flat.extend([value] if isinstance(value, (int, float)) else split_list(value))
    parsed = []
    for raw in flat:
        try:
            number = float(raw)
        except (TypeError, ValueError):
            raise InputError(f"bad value for {flag}", kind="bad_flag", flag=flag, value=raw,
                             expected="a finite number")
        if not math.isfinite(number) or (nonnegative and number < 0):
            raise InputError(f"bad value for {flag}", kind="bad_flag", flag=flag, value=raw,
                             expected="a finite number >= 0" if nonnegative else "a finite number")
        parsed.append(number)
    return parsed


@dataclass
class AnalysisConfig:
    """Everything one command needs, validated."""

    data_path: Optional[str]
    moments_path: Optional[str]
    roles: Optional[ColumnRoles]
    r2_rules: List[R2Rule]
    deltas: List[float]
    delta_bars: List[float]
    m_bounds: List[MagnitudeBound]
    out_dir: Optional[str] = None
    json_output: bool = False
    svg_output: bool = False
    seed: int = 7
    instances: int = config.SUITE_INSTANCES
    fault: float = 0.0
    cov_denominator: str = config.DEFAULT_DENOMINATOR
    b_range: Optional[Tuple[float, float]] = None
    curve_points: int = 2001
    raw: Dict[str, Any] = field(default_factory=dict)

    @staticmethod
    def load_file(project_root: Optional[str] = None) -> Dict[str, Any]:
        """Defaults merged with `.regsens.json` when present."""
        merged = copy.deepcopy(DEFAULT_CONFIG)
        path = Path(project_root or os.getcwd()) / CONFIG_FILENAME
        if path.exists():
            try:
                deep_update(merged, read_config_json(path))
                logger.debug("Loaded defaults from %s", path)
            except ConfigError as e:
                error_handler.handle_error(e, level=ErrorLevel.WARNING)
                logger.debug("Ignoring %s; using defaults", path)
        return merged

    @classmethod
    def from_options(cls, project_root: Optional[str] = None, **options: Any) -> 'AnalysisConfig':
        """
        Build from file defaults and flag values.

        Flag values that are None or empty leave the file/default value in place.
        """
        merged = cls.load_file(project_root)
        overrides: Dict[str, Dict[str, Any]] = {}
        mapping = {
            "data": ("data", "path"), "moments": ("data", "moments"),
            "outcome": ("data", "outcome"), "treatment": ("data", "treatment"),
            "w0": ("data", "w0"), "w1": ("data", "w1"),
            "cov_denominator": ("data", "cov_denominator"),
            "r2long": ("sensitivity", "r2long"), "delta": ("sensitivity", "delta"),
            "delta_bar": ("sensitivity", "delta_bar"), "m": ("sensitivity", "m"),
            "b_min": ("curve", "b_min"), "b_max": ("curve", "b_max"), "points": ("curve", "points"),
            "out": ("output", "dir"), "json_output": ("output", "json"), "svg": ("output", "svg"),
            "seed": ("oracle", "seed"), "instances": ("oracle", "instances"), "fault": ("oracle", "fault"),
        }
        for name, value in options.items():
            if name not in mapping:
                raise InputError(f"unknown option {name}", kind="bad_flag", flag=name, value=value,
                                 expected=", ".join(sorted(mapping)))
            if value is None or value == () or value == [] or value is False:
                continue
            section, key = mapping[name]
            overrides.setdefault(section, {})[key] = list(value) if isinstance(value, tuple) else value
        deep_update(merged, overrides)
        return cls.from_dict(merged)

    @classmethod
    def from_dict(cls, merged: Dict[str, Any]) -> 'AnalysisConfig':
        data, sens = merged["data"], merged["sensitivity"]
        curve, output, oracle = merged["curve"], merged["output"], merged["oracle"]

        roles = None
        if data.get("outcome") or data.get("treatment"):
            if not (data.get("outcome") and data.get("treatment")):
                raise InputError("outcome and treatment must both be given", kind="bad_flag",
                                 flag="--outcome/--treatment", value=(data.get("outcome"), data.get("treatment")),
                                 expected="both column names")
            roles = ColumnRoles(data["outcome"], data["treatment"],
                                tuple(split_list(data.get("w0"))), tuple(split_list(data.get("w1"))))

        rules = [R2Rule.parse(r) for r in split_list(sens.get("r2long"))]
        if not rules:
            raise InputError("at least one R2_long rule is required", kind="bad_flag", flag="--r2long",
                             value=sens.get("r2long"), expected="e.g. 1.0 or 1.3x")

        denominator = data.get("cov_denominator") or config.DEFAULT_DENOMINATOR
        if denominator not in DENOMINATORS:
            raise InputError(f"unknown denominator {denominator!r}", kind="bad_flag",
                             flag="--cov-denominator", value=denominator, expected=" or ".join(DENOMINATORS))

        b_range = None
        if curve.get("b_min") is not None and curve.get("b_max") is not None:
            b_range = (float(curve["b_min"]), float(curve["b_max"]))
            if not b_range[0] < b_range[1]:
                raise InputError("empty curve range", kind="bad_flag", flag="--b-min/--b-max",
                                 value=b_range, expected="b_min < b_max")

        return cls(
            data_path=data.get("path"),
            moments_path=data.get("moments"),
            roles=roles,
            r2_rules=rules,
            deltas=parse_floats(list(sens.get("delta") or []), "--delta"),
            delta_bars=parse_floats(list(sens.get("delta_bar") or []), "--delta-bar", nonnegative=True),
            m_bounds=[MagnitudeBound.parse(m) for m in split_list(sens.get("m"))] or [MagnitudeBound()],
            out_dir=output.get("dir"),
            json_output=bool(output.get("json")),
            svg_output=bool(output.get("svg")),
            seed=int(oracle.get("seed", 7)),
            instances=int(oracle.get("instances", config.SUITE_INSTANCES)),
            fault=float(oracle.get("fault", 0.0)),
            cov_denominator=denominator,
            b_range=b_range,
            curve_points=int(curve.get("points", 2001)),
            raw=merged,
        )

    def require_source(self) -> None:
        """Either a data file with roles or a moments JSON file."""
        if self.moments_path:
            return
        if not self.data_path:
            raise InputError("no input", kind="bad_flag", flag="--data/--moments", value=None,
                             expected="a CSV file with --outcome/--treatment/--w1, or a moments JSON")
        if self.roles is None:
            raise InputError("column roles missing", kind="bad_flag", flag="--outcome/--treatment",
                             value=None, expected="outcome and treatment column names")
        self.roles.validate()

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.raw)

    def save(self, path: str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str) -> 'AnalysisConfig':
        p = Path(path)
        if not p.exists():
            raise FileError(f"File not found: {path}", kind="not_found", file_path=str(path))
        merged = copy.deepcopy(DEFAULT_CONFIG)
        deep_update(merged, read_config_json(p))
        return cls.from_dict(merged)
