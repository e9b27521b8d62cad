"""Configuration objects and the INI loader used by every pipeline stage.

All stage inputs are plain dataclasses with defaults; the INI files only
need to list the values they override.  One file may carry all sections,
so a single experiment config also serves as the scenario config for the
``simulate`` stage.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError


@dataclass
class ScenarioConfig:
    # [street]
    lanes: int = 6
    lane_width: float = 3.5
    street_length: float = 200.0
    wall_setback: float = 10.0  # building faces, measured from the street edges
    # [vehicles]
    cars: int = 50
    buses: int = 8
    trucks: int = 2
    min_speed: float = 6.0
    max_speed: float = 14.0
    # [basestations]
    bs_separation: float = 80.0
    bs_setback: float = 6.0
    bs_height: float = 4.5
    # [cameras]
    image_width: int = 1280
    image_height: int = 720
    hfov_deg: float = 70.0
    vfov_deg: float = 42.0
    pitch_deg: float = -10.0
    side_yaw_deg: float = 50.0
    # [phy]
    elements: int = 32
    beams: int = 64
    subcarriers: int = 64
    cyclic_prefix: int = 16
    sample_time: float = 1e-7
    carrier_hz: float = 28e9
    spacing_wavelengths: float = 0.5
    reflection_loss_db: float = 10.0
    tx_power: float = 1.0
    # [detector]
    p_miss: float = 0.0
    jitter_sigma: float = 0.0
    p_false_positive: float = 0.0
    min_visible_fraction: float = 0.3
    # [simulation]
    seed: int = 1
    dt: float = 0.1

    def __post_init__(self):
        if self.lanes < 1 or self.street_length <= 0 or self.lane_width <= 0:
            raise DataError("street geometry must be positive")
        if self.dt <= 0:
            raise DataError("frame period dt must be > 0")
        width = self.lanes * self.lane_width
        if self.bs_separation <= width + 2 * self.bs_setback:
            raise DataError(
                "basestation separation must exceed the cross-street distance "
                f"({width + 2 * self.bs_setback:.1f} m)"
            )


@dataclass
class DatasetConfig:
    # [dataset]
    quota: int = 300          # pivotal and non-pivotal sequences per camera
    seed: int = 7
    observed: int = 8         # observation interval length
    future: int = 5           # future window length
    split_fraction: float = 0.5
    overlap_cameras: tuple[int, int] = (3, 4)

    def __post_init__(self):
        if self.observed < 1 or self.future < 1:
            raise DataError("observed and future window lengths must be >= 1")
        if not 0.0 < self.split_fraction < 1.0:
            raise DataError("split_fraction must be in (0, 1)")


@dataclass
class TrainConfig:
    # [train]
    hidden: int = 64
    embed_dim: int = 256
    layers: int = 2
    learning_rate: float = 1e-3
    batch_size: int = 200
    epochs: int = 100
    dropout: float = 0.3
    seed: int = 3
    table_seed: int = 11      # beam embedding lookup table

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DataError("learning rate must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise DataError("dropout must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise DataError("batch_size and epochs must be >= 1")


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    # [experiment]
    frames: int = 700

    def __post_init__(self):
        if self.frames < 1:
            raise DataError("frames must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        import hashlib

        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# Section/option -> dataclass field maps for the INI format.
_SCENARIO_SECTIONS = {
    "street": ("lanes", "lane_width", "street_length", "wall_setback"),
    "vehicles": ("cars", "buses", "trucks", "min_speed", "max_speed"),
    "basestations": ("bs_separation", "bs_setback", "bs_height"),
    "cameras": ("image_width", "image_height", "hfov_deg", "vfov_deg",
                "pitch_deg", "side_yaw_deg"),
    "phy": ("elements", "beams", "subcarriers", "cyclic_prefix", "sample_time",
            "carrier_hz", "spacing_wavelengths", "reflection_loss_db", "tx_power"),
    "detector": ("p_miss", "jitter_sigma", "p_false_positive", "min_visible_fraction"),
    "simulation": ("seed", "dt"),
}

_DATASET_OPTIONS = ("quota", "seed", "observed", "future", "split_fraction",
                    "overlap_cameras")
_TRAIN_OPTIONS = ("hidden", "embed_dim", "layers", "learning_rate", "batch_size",
                  "epochs", "dropout", "seed", "table_seed")
_EXPERIMENT_OPTIONS = ("frames",)


def _convert(value: str, target_type):
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    if target_type is bool:
        return value.strip().lower() in ("1", "true", "yes", "on")
    return value


def _read_ini(path: str | Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise DataError(f"malformed config file {path}: {exc}") from exc
    return parser


def _apply_sections(parser, cls, sections, overrides):
    defaults = cls()
    types = {f.name: type(getattr(defaults, f.name)) for f in dataclasses.fields(cls)}
    for section, options in sections.items():
        if not parser.has_section(section):
            continue
        for option in parser.options(section):
            name = option.strip()
            if name not in options:
                raise DataError(f"unknown option [{section}] {name}")
            overrides[name] = _convert(parser.get(section, option), types[name])
    return overrides


def load_scenario_config(path: str | Path) -> ScenarioConfig:
    parser = _read_ini(path)
    overrides = _apply_sections(parser, ScenarioConfig, _SCENARIO_SECTIONS, {})
    return ScenarioConfig(**overrides)


def load_dataset_config(path: str | Path) -> DatasetConfig:
    parser = _read_ini(path)
    overrides: dict = {}
    if parser.has_section("dataset"):
        for option in parser.options("dataset"):
            if option not in _DATASET_OPTIONS:
                raise DataError(f"unknown option [dataset] {option}")
            raw = parser.get("dataset", option)
            if option == "overlap_cameras":
                overrides[option] = tuple(int(v) for v in raw.replace(",", " ").split())
            elif option in ("split_fraction",):
                overrides[option] = float(raw)
            else:
                overrides[option] = int(raw)
    return DatasetConfig(**overrides)


def load_train_config(path: str | Path) -> TrainConfig:
    parser = _read_ini(path)
    overrides: dict = {}
    if parser.has_section("train"):
        types = {f.name: type(f.default) for f in dataclasses.fields(TrainConfig)}
        for option in parser.options("train"):
            if option not in _TRAIN_OPTIONS:
                raise DataError(f"unknown option [train] {option}")
            overrides[option] = _convert(parser.get("train", option), types[option])
    return TrainConfig(**overrides)


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    parser = _read_ini(path)
    scenario = load_scenario_config(path)
    dataset = load_dataset_config(path)
    train = load_train_config(path)
    overrides: dict = {}
    if parser.has_section("experiment"):
        for option in parser.options("experiment"):
            if option not in _EXPERIMENT_OPTIONS:
                raise DataError(f"unknown option [experiment] {option}")
            overrides[option] = int(parser.get("experiment", option))
    return ExperimentConfig(scenario=scenario, dataset=dataset, train=train, **overrides)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    return ScenarioConfig(**data)
