"""Layered YAML configuration and its translation into simulation objects.

Layers, lowest first: bundled ``defaults``, the named profile, the user
file, then ``key.path=value`` overrides.  A ``profiles.yaml`` under the
directory named by ``PORELBM_CONFIG_ROOT`` adds or replaces profiles, and
relative config paths are resolved against that directory.
"""
import copy
import os
from importlib import resources
from pathlib import Path

import yaml

from .collision import CollisionConfig, ConfigurationError
from .engine import SimulationConfig
from .geometry import Channel, read_pack, single_sphere_rev

ENV_ROOT = "PORELBM_CONFIG_ROOT"


def merge(base, over):
    """Recursive dict merge; ``over`` wins, nested dicts are merged."""
    out = copy.deepcopy(base)
    for key, val in (over or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _bundled():
    text = resources.files("porelbm").joinpath("data/profiles.yaml").read_text()
    return yaml.safe_load(text)


def config_root():
    root = os.environ.get(ENV_ROOT)
    return Path(root) if root else None


def available_profiles():
    data = _bundled()
    profiles = dict(data["profiles"])
    root = config_root()
    if root is not None and (root / "profiles.yaml").is_file():
        extra = yaml.safe_load((root / "profiles.yaml").read_text()) or {}
        profiles.update(extra.get("profiles", {}))
    return data["defaults"], profiles


def resolve_path(path):
    p = Path(path)
    root = config_root()
    if not p.is_absolute() and not p.exists() and root is not None:
        return root / p
    return p


def parse_override(text):
    """``a.b.c=value`` to a nested dict; the value is parsed as YAML."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    node = yaml.safe_load(raw)
    for part in reversed(key.strip().split(".")):
        node = {part: node}
    return node


def load_config(path=None, profile=None, overrides=()):
    """Merge all layers into one plain dict."""
    defaults, profiles = available_profiles()
    user = {}
    if path is not None:
        p = resolve_path(path)
        user = yaml.safe_load(p.read_text()) or {}
    profile = profile or user.pop("profile", None)
    cfg = copy.deepcopy(defaults)
    if profile is not None:
        if profile not in profiles:
            raise ConfigurationError(f"unknown profile {profile!r}; known: {', '.join(sorted(profiles))}")
        cfg = merge(cfg, profiles[profile])
        cfg["profile"] = profile
    cfg = merge(cfg, user)
    for text in overrides:
        cfg = merge(cfg, parse_override(text))
    return cfg


def build_geometry(gcfg):
    kind = gcfg.get("kind", "sphere")
    if kind == "sphere":
        if gcfg.get("diameter") is not None:
            radius = 0.5 * float(gcfg["diameter"])
        else:
            radius = float(gcfg["radius"])
        return single_sphere_rev(
            radius,
            float(gcfg["chi"]),
            offset=float(gcfg.get("offset", 0.0)),
            axis=int(gcfg.get("axis", 0)),
            exact_fraction=bool(gcfg.get("exact_fraction", True)),
        )
    if kind == "pack":
        return read_pack(resolve_path(gcfg["file"]))
    if kind == "channel":
        return Channel(
            shape=tuple(gcfg["shape"]),
            lower=float(gcfg["lower"]),
            upper=float(gcfg["upper"]),
            normal=int(gcfg.get("normal", 1)),
        )
    raise ConfigurationError(f"unknown geometry kind {kind!r}")


def build_simulation_config(cfg):
    """:class:`SimulationConfig` from a merged config dict."""
    col = cfg["collision"]
    collision = CollisionConfig(
        kind=col["kind"],
        nu=float(col["nu"]),
        magic=float(col.get("magic", 0.25)),
        energy_ratio=float(col.get("energy_ratio", 4.6)),
    )
    r = cfg["run"]
    wft = r.get("window_flow_through")
    return SimulationConfig(
        geometry=build_geometry(cfg["geometry"]),
        collision=collision,
        wall=str(cfg["wall"]).upper(),
        wall_fallback=str(cfg.get("wall_fallback", "cascade")).lower(),
        drho=float(cfg["drho"]),
        axis=int(cfg["geometry"].get("axis", 0)),
        max_steps=int(r["max_steps"]),
        cadence=int(r["cadence"]),
        window_steps=int(r["window_steps"]),
        window_flow_through=None if wft is None else float(wft),
        warmup_steps=int(r.get("warmup_steps", 0)),
        tol=float(r["tol"]),
        monitor=r.get("monitor", "cd"),
        cd_area=r.get("cd_area", "domain"),
        velocity_average=r.get("velocity_average", "superficial"),
        check_interval=int(r.get("check_interval", 100)),
    )
