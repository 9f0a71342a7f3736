"""Scenario configuration files (YAML text validated against a JSON schema)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from ..channel import DopplerConfig, PowerDelayProfile
from ..grid import PilotPattern
from ..neural.train import TrainConfig
from ..phy import OfdmParams

__all__ = ["Seeds", "ScenarioConfig", "load_config", "builtin_scenario", "ConfigError"]


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "required": ["name", "system", "channel", "pilots", "sweep", "training", "seeds"],
    "properties": {
        "name": {"type": "string"},
        "system": {
            "type": "object",
            "required": ["fft_size", "cyclic_prefix", "modulation", "subcarrier_spacing_hz", "symbols_per_slot"],
            "properties": {
                "mimo": {"type": "string", "enum": ["2x2"]},
                "fft_size": _POS_INT,
                "cyclic_prefix": {"type": "integer", "minimum": 0},
                "modulation": {"type": "string", "enum": ["QPSK", "QAM16"]},
                "subcarrier_spacing_hz": {"type": "number", "exclusiveMinimum": 0},
                "symbols_per_slot": _POS_INT,
            },
        },
        "channel": {
            "type": "object",
            "required": ["max_doppler_hz", "n_harmonics", "pdp"],
            "properties": {
                "profile": {"type": "string"},
                "max_doppler_hz": {"type": "number", "minimum": 0},
                "n_harmonics": _POS_INT,
                "noise_model": {"type": "string", "enum": ["gaussian"]},
                "pdp": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["delay_samples", "power_linear"],
                        "properties": {
                            "delay_samples": {"type": "integer", "minimum": 0},
                            "power_linear": {"type": "number", "minimum": 0},
                        },
                    },
                },
            },
        },
        "pilots": {
            "type": "object",
            "required": ["d_t", "d_f"],
            "properties": {
                "d_t": _POS_INT,
                "d_f": {"type": "integer", "minimum": 2},
                "antenna_offset": _POS_INT,
                "value": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            },
        },
        "sweep": {
            "type": "object",
            "required": ["snr_db", "frames"],
            "properties": {
                "snr_db": {"type": "array", "items": _NUM, "minItems": 1},
                "frames": _POS_INT,
                "estimators": {"type": "array", "items": {"type": "string"}},
            },
        },
        "statistics": {"type": "object", "properties": {"frames": {"type": "integer", "minimum": 1}}},
        "training": {
            "type": "object",
            "properties": {
                "training_function": {"type": "string", "enum": ["levenberg-marquardt", "gradient-descent"]},
                "max_epochs": _POS_INT,
                "mini_batch_size": _POS_INT,
                "training_error": {"type": "number", "exclusiveMinimum": 0},
                "gradient_accuracy": {"type": "number", "exclusiveMinimum": 0},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "initial_damping": {"type": "number", "exclusiveMinimum": 0},
                "max_validation_failures": _POS_INT,
                "realizations": {"type": "integer", "minimum": 10},
                "snr_db": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            },
        },
        "seeds": {
            "type": "object",
            "required": ["channel", "noise", "data", "shuffle"],
            "properties": {k: {"type": "integer", "minimum": 0} for k in ("channel", "noise", "data", "shuffle")},
        },
    },
}


@dataclass(frozen=True)
class Seeds:
    channel: int = 1
    noise: int = 2
    data: int = 3
    shuffle: int = 4

    @classmethod
    def from_master(cls, seed: int) -> "Seeds":
        return cls(seed, seed, seed, seed)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    f_d_max: float
    d_t: int
    d_f: int
    snr_grid: tuple
    n_frames: int
    ofdm: OfdmParams = OfdmParams()
    pdp: PowerDelayProfile = None
    n_symbols: int = 14
    n_harmonics: int = 32
    modulation: str = "QPSK"
    antenna_offset: int = 1
    pilot_value: complex = 1 + 0j
    seeds: Seeds = Seeds()
    stats_frames: int = 500
    dataset_realizations: int = 250880
    dataset_snr: tuple = (0.0, 20.0)
    training: TrainConfig = TrainConfig()
    estimators: tuple = ("ls", "lmmse", "dnn1", "dnn2", "perfect")
    raw: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        snr = tuple(float(s) for s in self.snr_grid)
        object.__setattr__(self, "snr_grid", snr)
        if not snr:
            raise ConfigError("snr grid is empty")
        if any(b <= a for a, b in zip(snr, snr[1:])):
            raise ConfigError(f"snr grid must be strictly increasing: {snr}")
        if self.n_frames < 1:
            raise ConfigError("n_frames must be >= 1")
        if self.pdp is not None and self.pdp.max_delay > self.ofdm.n_guard:
            raise ConfigError(
                f"largest tap delay {self.pdp.max_delay} exceeds the cyclic prefix {self.ofdm.n_guard}"
            )

    @property
    def pattern(self) -> PilotPattern:
        return PilotPattern(self.d_t, self.d_f, complex(self.pilot_value), self.antenna_offset)

    @property
    def doppler(self) -> DopplerConfig:
        return DopplerConfig(self.f_d_max, self.n_harmonics, self.seeds.channel)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def fingerprint(self) -> str:
        """Short hash of every setting that affects simulated numbers."""
        d = asdict(self)
        d.pop("raw", None)
        d["pilot_value"] = [self.pilot_value.real, self.pilot_value.imag]
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _from_mapping(d: dict) -> ScenarioConfig:
    try:
        jsonschema.validate(d, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path}: {exc.message}") from None
    sysc, ch, pil, sw, tr = d["system"], d["channel"], d["pilots"], d["sweep"], d["training"]
    ofdm = OfdmParams(
        sysc["fft_size"], sysc["cyclic_prefix"], sysc["subcarrier_spacing_hz"] * sysc["fft_size"]
    )
    pdp = PowerDelayProfile(
        tuple(t["delay_samples"] for t in ch["pdp"]),
        tuple(t["power_linear"] for t in ch["pdp"]),
        ch.get("profile", "custom"),
    )
    value = pil.get("value", [1.0, 0.0])
    seeds = Seeds(**d["seeds"])
    train_cfg = TrainConfig(
        max_epochs=tr.get("max_epochs", 300),
        target_loss=tr.get("training_error", 1e-5),
        min_gradient=tr.get("gradient_accuracy", 1e-7),
        initial_damping=tr.get("initial_damping", 0.01),
        max_validation_failures=tr.get("max_validation_failures", 6),
        seed=seeds.shuffle,
        algorithm="sgd" if tr.get("training_function") == "gradient-descent" else "lm",
        batch_size=tr.get("mini_batch_size", 8),
        learning_rate=tr.get("learning_rate", 0.01),
    )
    kwargs = {}
    if "estimators" in sw:
        kwargs["estimators"] = tuple(sw["estimators"])
    return ScenarioConfig(
        name=d["name"],
        f_d_max=float(ch["max_doppler_hz"]),
        d_t=pil["d_t"],
        d_f=pil["d_f"],
        snr_grid=tuple(sw["snr_db"]),
        n_frames=sw["frames"],
        ofdm=ofdm,
        pdp=pdp,
        n_symbols=sysc["symbols_per_slot"],
        n_harmonics=ch["n_harmonics"],
        modulation=sysc["modulation"],
        antenna_offset=pil.get("antenna_offset", 1),
        pilot_value=complex(value[0], value[1]),
        seeds=seeds,
        stats_frames=d.get("statistics", {}).get("frames", 500),
        dataset_realizations=tr.get("realizations", 250880),
        dataset_snr=tuple(tr.get("snr_db", (0.0, 20.0))),
        training=train_cfg,
        raw=d,
        **kwargs,
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid structured text: {exc}") from None
    try:
        return _from_mapping(d)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def builtin_scenario(number: int) -> ScenarioConfig:
    if number not in (1, 2):
        raise ConfigError(f"unknown scenario {number}; expected 1 or 2")
    text = resources.files("mimochest.configs").joinpath(f"scenario{number}.cfg").read_text()
    return _from_mapping(yaml.safe_load(text))
