"""Experiment configuration: scale profiles plus a strict dotted-key TOML loader.

A config file only lists overrides, e.g.::

    profile = "desk"
    seed = 7
    array.rows = 8
    train.max_epochs = 400

Unknown sections or keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .. import beamforming, channel, geometry, scheduling
from ..dmhsa import DmhsaConfig
from ..errors import ConfigError


@dataclass(frozen=True)
class OrbitSection:
    altitude_km: float = 1000.0
    earth_radius_km: float = 6371.0
    min_elevation_deg: float = 30.0


@dataclass(frozen=True)
class AreaSection:
    center_lat: float = 45.0
    center_lon: float = 10.0
    population: int = 48
    # (north km, east km, sigma km, weight) per Gaussian cluster
    clusters: tuple = ((0.0, 0.0, 150.0, 0.3), (400.0, 300.0, 120.0, 0.25),
                       (-350.0, 350.0, 100.0, 0.2), (-300.0, -400.0, 150.0, 0.15),
                       (350.0, -350.0, 120.0, 0.1))


@dataclass(frozen=True)
class ArraySection:
    rows: int = 16
    cols: int = 32
    spacing_wavelengths: float = 0.5
    element_gain_dbi: float = 10 * math.log10(6.0)
    pattern_exponent: float = 2.0
    n_elements: int = 0  # optional consistency check against rows * cols


@dataclass(frozen=True)
class LinkSection:
    carrier_frequency_hz: float = 20e9
    bandwidth_hz: float = 190.08e6
    noise_temperature_k: float = 240.0
    rx_gain_dbi: float = 39.7
    static_loss_db: float = 0.0
    shadowing_sigma_db: float = 1.0


@dataclass(frozen=True)
class BeamformerSection:
    per_element_power_w: float = 0.065


@dataclass(frozen=True)
class ModelSection:
    n_beams: int = 24
    n_channels: int = 8
    n_heads: int = 4
    leaky_slope: float = 0.01


@dataclass(frozen=True)
class TrainSection:
    batch_size: int = 8192
    max_epochs: int = 15000
    l2: float = 1e-6
    warmup_epochs: int = 40
    cycle_epochs: int = 100
    lr_min: float = 1e-4
    lr_max: float = 5e-3
    patience_cycles: int = 4
    min_group_size: int = 8
    calibration_samples: int = 8192


@dataclass(frozen=True)
class EvalSection:
    test_estimates: int = 100_000
    histogram_bins: int = 80
    histogram_range_db: tuple = (-20.0, 20.0)


@dataclass(frozen=True)
class PqsSection:
    slot_duration_s: float = 0.01
    scheduling_period_s: float = 2.0
    max_residual_visibility_slots: int = 50
    unmet_capacity_factor: float = 2.0
    n_priority_classes: int = 2
    correlation_threshold: float = 0.5
    distance_threshold_km: float = 30.0
    population: int = 200
    c_min_mbps: tuple = (5.0, 20.0)
    c_max_mbps: tuple = (100.0, 500.0)
    periods: int = 50
    calibration_periods: int = 10


SECTIONS = {
    "orbit": OrbitSection, "area": AreaSection, "array": ArraySection, "link": LinkSection,
    "beamformer": BeamformerSection, "model": ModelSection, "train": TrainSection,
    "eval": EvalSection, "pqs": PqsSection,
}
TOP_LEVEL = ("profile", "variant", "seed")


@dataclass(frozen=True)
class ExperimentConfig:
    profile: str = "paper"
    variant: str = "geo"
    seed: int = 0
    orbit: OrbitSection = field(default_factory=OrbitSection)
    area: AreaSection = field(default_factory=AreaSection)
    array: ArraySection = field(default_factory=ArraySection)
    link: LinkSection = field(default_factory=LinkSection)
    beamformer: BeamformerSection = field(default_factory=BeamformerSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    pqs: PqsSection = field(default_factory=PqsSection)

    def validate(self) -> "ExperimentConfig":
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.variant not in ("csi", "geo"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        a, m, t = self.array, self.model, self.train
        if a.n_elements and a.n_elements != a.rows * a.cols:
            raise ConfigError(f"array.n_elements={a.n_elements} but rows*cols={a.rows * a.cols}")
        if m.n_channels % m.n_heads:
            raise ConfigError("model.n_channels must be a multiple of model.n_heads")
        if not 1 <= t.min_group_size <= m.n_beams:
            raise ConfigError("train.min_group_size must lie in [1, n_beams]")
        if m.n_beams > a.rows * a.cols:
            raise ConfigError("more beams than radiating elements")
        if self.area.population < t.min_group_size:
            raise ConfigError("area.population smaller than the minimum group size")
        if not 0 < t.lr_min < t.lr_max:
            raise ConfigError("need 0 < train.lr_min < train.lr_max")
        for c in self.area.clusters:
            if len(c) != 4 or c[2] <= 0 or c[3] < 0:
                raise ConfigError(f"bad cluster {c}: need (north_km, east_km, sigma_km>0, weight>=0)")
        try:
            self.scenario()
            self.pqs_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # -- derived objects -------------------------------------------------
    @property
    def n_elements(self) -> int:
        return self.array.rows * self.array.cols

    def dmhsa_config(self, variant: str | None = None) -> DmhsaConfig:
        m = self.model
        return DmhsaConfig.for_variant(variant or self.variant, self.n_elements, n_beams=m.n_beams,
                                       n_channels=m.n_channels, n_heads=m.n_heads, leaky_slope=m.leaky_slope)

    def scenario(self) -> "Scenario":
        o, a, l = self.orbit, self.array, self.link
        orbit = geometry.OrbitConfig(o.altitude_km, o.earth_radius_km, o.min_elevation_deg)
        lb = channel.LinkBudget(l.carrier_frequency_hz, l.bandwidth_hz, l.noise_temperature_k,
                                rx_gain=float(channel.db2lin(l.rx_gain_dbi)), stochastic_loss_db=l.static_loss_db)
        arr = channel.ArrayConfig(a.rows, a.cols, a.spacing_wavelengths * lb.wavelength,
                                  float(channel.db2lin(a.element_gain_dbi)), a.pattern_exponent)
        bf = beamforming.BeamformerConfig(arr.n_elements, self.beamformer.per_element_power_w)
        center = geometry.GroundPosition(self.area.center_lat, self.area.center_lon)
        spec = geometry.ClusterSpec(center, tuple(geometry.Cluster(*map(float, c)) for c in self.area.clusters))
        return Scenario(orbit, lb, arr, bf, spec, l.shadowing_sigma_db)

    def pqs_config(self) -> scheduling.PqsConfig:
        p = self.pqs
        return scheduling.PqsConfig(p.slot_duration_s, p.scheduling_period_s, p.max_residual_visibility_slots,
                                    p.unmet_capacity_factor, p.n_priority_classes, p.correlation_threshold,
                                    p.distance_threshold_km)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Scenario:
    orbit: geometry.OrbitConfig
    link: channel.LinkBudget
    array: channel.ArrayConfig
    beamformer: beamforming.BeamformerConfig
    clusters: geometry.ClusterSpec
    shadowing_sigma_db: float


PROFILES: dict[str, dict[str, dict[str, Any]]] = {
    "paper": {},
    "desk": {
        "array": {"rows": 8, "cols": 8},
        "model": {"n_beams": 8},
        "train": {"batch_size": 256, "max_epochs": 2000, "warmup_epochs": 20, "cycle_epochs": 50,
                  "min_group_size": 3, "calibration_samples": 1024},
        "pqs": {"population": 30, "distance_threshold_km": 120.0},
    },
}


def _coerce(value, default, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected an array")
        return tuple(tuple(v) if isinstance(v, (list, tuple)) else v for v in value)
    raise ConfigError(f"{where}: unsupported type")


def apply_overrides(cfg: ExperimentConfig, doc: dict[str, Any]) -> ExperimentConfig:
    top = {}
    sections = {}
    for key, value in doc.items():
        if key in TOP_LEVEL:
            top[key] = _coerce(value, getattr(cfg, key), key)
        elif key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be a table")
            current = getattr(cfg, key)
            names = {f.name for f in fields(current)}
            upd = {}
            for k, v in value.items():
                if k not in names:
                    raise ConfigError(f"unknown key {key}.{k}")
                upd[k] = _coerce(v, getattr(current, k), f"{key}.{k}")
            sections[key] = replace(current, **upd)
        else:
            raise ConfigError(f"unknown key {key!r}")
    return replace(cfg, **top, **sections)


def profile_config(profile: str) -> ExperimentConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    return apply_overrides(ExperimentConfig(profile=profile), PROFILES[profile])


def load_config(path=None, profile: str | None = None, **overrides) -> ExperimentConfig:
    """Build a validated config: profile defaults, then the file, then explicit overrides."""
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            doc = tomllib.loads(Path(path).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    chosen = profile or doc.get("profile") or "paper"
    cfg = apply_overrides(profile_config(chosen), doc)
    cfg = replace(cfg, profile=chosen, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()


def dumps_config(cfg: ExperimentConfig) -> str:
    """Dotted-key rendering that :func:`load_config` reads back to the same config."""
    def fmt(v):
        if isinstance(v, str):
            return f'"{v}"'
        if isinstance(v, tuple):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    lines = [f"{k} = {fmt(getattr(cfg, k))}" for k in TOP_LEVEL]
    for name in SECTIONS:
        sec = getattr(cfg, name)
        lines += [f"{name}.{f.name} = {fmt(getattr(sec, f.name))}" for f in fields(sec)]
    return "\n".join(lines) + "\n"
