"""Loading of vehicle/controller profiles and CLI configuration files."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import fields
from importlib import resources
from pathlib import Path

from .controller import ControllerParams
from .vehicle import VehicleParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def load_mapping(path) -> dict:
    """Parse a ``.toml`` or ``.json`` file into a dict."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text)
    raise ValueError(f"unsupported config format {path.suffix!r} (use .toml or .json)")


def default_profile() -> dict:
    text = resources.files("ldceval").joinpath("profiles/table1.toml").read_text()
    return tomllib.loads(text)


def _build(cls, section: dict, base):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} field(s): {sorted(unknown)}")
    values = {f.name: getattr(base, f.name) for f in fields(cls)}
    values.update(section)
    return cls(**values)


def load_profile(path=None) -> tuple[VehicleParams, ControllerParams, dict]:
    """Vehicle and controller parameters, defaulting to the bundled profile.

    Sections of a user profile override the defaults field by field. The
    ``[simulation]`` table (sample time and the unused ``D_y``) is returned
    as a plain dict.
    """
    doc = default_profile()
    if path is not None:
        user = load_mapping(path)
        for key in ("vehicle", "controller", "simulation"):
            doc[key] = {**doc.get(key, {}), **user.get(key, {})}
    vehicle = _build(VehicleParams, doc.get("vehicle", {}), VehicleParams())
    ctrl = _build(ControllerParams, doc.get("controller", {}), ControllerParams())
    if not ctrl.w_l > vehicle.w_v:
        raise ValueError("lane width must exceed vehicle width")
    return vehicle, ctrl, dict(doc.get("simulation", {}))


def config_hash(config: dict) -> str:
    """Short stable digest of a JSON-serializable configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
