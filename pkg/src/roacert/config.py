"""Run configuration: TOML (or JSON) files mapped onto the stage configs."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .cegis import CegisConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class VerifySettings:
    c1: float = 0.01
    c2: float = 0.99
    eps: float = 1e-4
    batch: int = 512
    timeout: float = 3600.0
    max_subdomains: int = 5_000_000
    adaptive: bool = True
    thin_band: bool = False
    thin_band_eps: float = 1e-5
    pgd_restarts: int = 5
    pgd_steps: int = 50


@dataclass
class EmpiricalSettings:
    pgd_restarts: int = 10000
    pgd_steps: int = 100
    n_trajectories: int = 100000
    horizon: float = 30.0
    dt: float = 0.005
    conv_tol: float = 1e-2
    volume_samples: int = 1_000_000


@dataclass
class RunConfig:
    system: str = "van_der_pol"
    seed: int = 0
    out_dir: str = "runs/default"
    system_params: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    cegis: CegisConfig = field(default_factory=CegisConfig)
    verify: VerifySettings = field(default_factory=VerifySettings)
    empirical: EmpiricalSettings = field(default_factory=EmpiricalSettings)

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "system_params": self.system_params,
            "train": dataclasses.asdict(self.train),
            "cegis": dataclasses.asdict(self.cegis),
            "verify": dataclasses.asdict(self.verify),
            "empirical": dataclasses.asdict(self.empirical),
        }


def _apply(section_obj, data: dict, section: str):
    valid = {f.name: f for f in dataclasses.fields(section_obj)}
    for key, value in data.items():
        if key not in valid:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        f = valid[key]
        if f.type in ("int",) and isinstance(value, float) and value.is_integer():
            value = int(value)
        try:
            setattr(section_obj, key, type(getattr(section_obj, key))(value)
                    if getattr(section_obj, key) is not None
                    and not isinstance(value, (dict, list, tuple))
                    else value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from exc


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Build a RunConfig from a TOML/JSON file plus CLI overrides."""
    cfg = RunConfig()
    data = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        if p.suffix == ".json":
            data = json.loads(p.read_text())
        else:
            with open(p, "rb") as fh:
                data = tomllib.load(fh)
    for key, value in data.items():
        if key in ("train", "cegis", "verify", "empirical"):
            _apply(getattr(cfg, key), value, key)
        elif key == "system_params":
            cfg.system_params = dict(value)
        elif key in ("system", "seed", "out_dir"):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown top-level config key {key!r}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        obj = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            obj = getattr(obj, part)
        setattr(obj, parts[-1], value)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    t, v = cfg.train, cfg.verify
    checks = [
        (t.a > 0, "train.a must be positive"),
        (t.p >= 1, "train.p must be >= 1"),
        (0 < t.c < 1, "train.c must be in (0, 1)"),
        (t.expansion_factor >= 1, "train.expansion_factor must be >= 1"),
        (t.dt > 0 and t.T > 0, "train.T and train.dt must be positive"),
        (t.max_iters >= 1, "train.max_iters must be >= 1"),
        (0 < v.c1 < v.c2 < 1 or v.thin_band, "verify thresholds need 0 < c1 < c2 < 1"),
        (cfg.cegis.c < 1, "cegis.c must be < 1"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
