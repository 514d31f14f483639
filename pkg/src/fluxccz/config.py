"""Run configuration: YAML schema, validation with line numbers, and round-trip dumping."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .composite import SUBSYSTEMS, DeviceConfig
from .dynamics import DrivePulse
from .noise import NoiseModel
from .spectrum import FluxoniumParams, PhaseGrid, TransmonParams

BUNDLED = "paper-device.yaml"


class ConfigError(ValueError):
    """Schema violation, reported with the source line when known."""


NUMBER = "number"
INTEGER = "integer"
OPT_NUMBER = "number|null"

_FLUXONIUM = {"E_C": NUMBER, "E_L": NUMBER, "E_J": NUMBER, "phi_ext": NUMBER}
_PULSE = {"amplitude": NUMBER, "tau": NUMBER, "frequency": NUMBER}
SCHEMA = {
    "device": {
        "fluxoniums": {name: _FLUXONIUM for name in SUBSYSTEMS[:3]},
        "transmon": {"E_C": NUMBER, "E_J": NUMBER},
        "couplings": {"*": NUMBER},
        "capacitances_fF": {"*": NUMBER},
    },
    "numerics": {
        "levels": INTEGER,
        "n_keep": INTEGER,
        "phi_max": NUMBER,
        "grid_points": INTEGER,
        "charge_cutoff": INTEGER,
        "dt_ps": OPT_NUMBER,
    },
    "operating_points": {"*": _PULSE},
    "noise": {
        "data_t1_us": OPT_NUMBER,
        "data_t_phi_us": OPT_NUMBER,
        "coupler_t1_us": OPT_NUMBER,
        "coupler_t_phi_us": OPT_NUMBER,
    },
    "montecarlo": {
        "epsilons": [NUMBER],
        "n_samples": INTEGER,
        "seed": INTEGER,
        "levels": INTEGER,
    },
    "twolevel": {
        "duration": NUMBER,
        "detuning_min": NUMBER,
        "detuning_max": NUMBER,
        "n_points": INTEGER,
    },
}


@dataclass(frozen=True)
class Numerics:
    levels: int = 10
    n_keep: int = 128
    phi_max: float = 8 * np.pi
    grid_points: int = 2001
    charge_cutoff: int = 30
    dt_ps: float | None = None

    @property
    def grid(self) -> PhaseGrid:
        return PhaseGrid(self.phi_max, self.grid_points)

    @property
    def dt(self) -> float | None:
        return None if self.dt_ps is None else self.dt_ps * 1e-3


@dataclass(frozen=True)
class NoiseSettings:
    data_t1_us: float | None = 300.0
    data_t_phi_us: float | None = 100.0
    coupler_t1_us: float | None = 50.0
    coupler_t_phi_us: float | None = 50.0

    def channels(self) -> dict[str, NoiseModel]:
        """Each group alone, then everything together; disabled groups are skipped."""
        parts = {
            "data_t1": NoiseModel.from_groups(data_t1=self.data_t1_us),
            "data_t_phi": NoiseModel.from_groups(data_t_phi=self.data_t_phi_us),
            "coupler_t1": NoiseModel.from_groups(coupler_t1=self.coupler_t1_us),
            "coupler_t_phi": NoiseModel.from_groups(coupler_t_phi=self.coupler_t_phi_us),
        }
        values = (self.data_t1_us, self.data_t_phi_us, self.coupler_t1_us, self.coupler_t_phi_us)
        out = {k: m for (k, m), v in zip(parts.items(), values) if v is not None}
        out["all"] = NoiseModel.from_groups(*values)
        return out


@dataclass(frozen=True)
class MonteCarloSettings:
    epsilons: tuple = (0.005, 0.01, 0.02)
    n_samples: int = 200
    seed: int = 0
    levels: int = 6


@dataclass(frozen=True)
class TwoLevelSettings:
    duration: float = 78.0
    detuning_min: float = -0.1
    detuning_max: float = 0.1
    n_points: int = 401


@dataclass(frozen=True)
class RunConfig:
    device: DeviceConfig
    numerics: Numerics = Numerics()
    operating_points: dict = field(default_factory=dict)
    noise: NoiseSettings = NoiseSettings()
    montecarlo: MonteCarloSettings = MonteCarloSettings()
    twolevel: TwoLevelSettings = TwoLevelSettings()

    def point(self, name: str) -> DrivePulse:
        try:
            return self.operating_points[name]
        except KeyError:
            known = ", ".join(sorted(self.operating_points)) or "none"
            raise ConfigError(f"unknown operating point '{name}' (known: {known})") from None

    def to_dict(self) -> dict:
        dev = self.device
        return {
            "device": {
                "fluxoniums": {
                    name: {"E_C": p.E_C, "E_L": p.E_L, "E_J": p.E_J, "phi_ext": p.phi_ext}
                    for name, p in zip(SUBSYSTEMS, dev.fluxoniums)
                },
                "transmon": {"E_C": dev.transmon.E_C, "E_J": dev.transmon.E_J},
                "couplings": {
                    "-".join(sorted(pair, key=SUBSYSTEMS.index)): g
                    for pair, g in sorted(
                        dev.couplings.items(), key=lambda kv: sorted(SUBSYSTEMS.index(s) for s in kv[0])
                    )
                },
                "capacitances_fF": dict(dev.capacitances),
            },
            "numerics": _fields(self.numerics),
            "operating_points": {
                name: {"amplitude": p.amplitude, "tau": p.duration, "frequency": p.frequency}
                for name, p in self.operating_points.items()
            },
            "noise": _fields(self.noise),
            "montecarlo": {**_fields(self.montecarlo), "epsilons": list(self.montecarlo.epsilons)},
            "twolevel": _fields(self.twolevel),
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        return hashlib.sha256(self.dump().encode()).hexdigest()[:12]


def _fields(obj) -> dict:
    return {k: getattr(obj, k) for k in obj.__dataclass_fields__}


def _where(node, source: str) -> str:
    return f"{source}:{node.start_mark.line + 1}"


def _check(node, schema, path: str, source: str):
    """Validate a composed YAML node against ``schema`` and return plain Python data."""
    if isinstance(schema, dict):
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError(f"{_where(node, source)}: '{path}' must be a mapping")
        out = {}
        for key_node, value_node in node.value:
            key = key_node.value
            sub = schema.get(key, schema.get("*"))
            if sub is None:
                raise ConfigError(f"{_where(key_node, source)}: unknown key '{key}' in '{path or 'top level'}'")
            if key in out:
                raise ConfigError(f"{_where(key_node, source)}: duplicate key '{key}'")
            out[key] = _check(value_node, sub, f"{path}.{key}" if path else key, source)
        return out
    if isinstance(schema, list):
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{_where(node, source)}: '{path}' must be a list")
        return [_check(item, schema[0], f"{path}[{i}]", source) for i, item in enumerate(node.value)]
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError(f"{_where(node, source)}: '{path}' must be a scalar")
    value = yaml.safe_load(yaml.serialize(node))
    if value is None and schema == OPT_NUMBER:
        return None
    if schema == INTEGER:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{_where(node, source)}: '{path}' must be an integer")
        return value
    if isinstance(value, str) and value.strip() == "pi":
        return float(np.pi)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{_where(node, source)}: '{path}' must be a number")
    return float(value)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: malformed YAML: {exc}") from None
    if root is None:
        raise ConfigError(f"{source}: empty configuration")
    data = _check(root, SCHEMA, "", source)
    if "device" not in data:
        raise ConfigError(f"{source}: missing required section 'device'")
    try:
        return _build(data)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _build(data: dict) -> RunConfig:
    dev = data["device"]
    for section in ("fluxoniums", "transmon"):
        if section not in dev:
            raise ConfigError(f"missing required section 'device.{section}'")
    missing = [n for n in SUBSYSTEMS[:3] if n not in dev["fluxoniums"]]
    if missing:
        raise ConfigError(f"missing fluxonium(s) {', '.join(missing)}")
    flux = tuple(FluxoniumParams(**dev["fluxoniums"][n]) for n in SUBSYSTEMS[:3])
    device = DeviceConfig(
        flux,
        TransmonParams(**dev["transmon"]),
        dict(dev.get("couplings", {})),
        dict(dev.get("capacitances_fF", {})),
    )
    points = {
        name: DrivePulse(p["amplitude"], p["tau"], p["frequency"])
        for name, p in data.get("operating_points", {}).items()
    }
    mc = dict(data.get("montecarlo", {}))
    if "epsilons" in mc:
        mc["epsilons"] = tuple(mc["epsilons"])
    return RunConfig(
        device,
        Numerics(**data.get("numerics", {})),
        points,
        NoiseSettings(**data.get("noise", {})),
        MonteCarloSettings(**mc),
        TwoLevelSettings(**data.get("twolevel", {})),
    )


def load_config(path=None) -> RunConfig:
    """Read a config file, or the bundled device description when ``path`` is None."""
    if path is None:
        text = resources.files("fluxccz").joinpath("data", BUNDLED).read_text()
        return parse_config(text, BUNDLED)
    with open(path) as fh:
        return parse_config(fh.read(), str(path))
