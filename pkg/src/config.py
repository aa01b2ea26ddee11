"""Configuration management for the spin-transfer simulator."""

import configparser
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from calibration import get_calibrated_noise
from errors import ConfigParse, InvalidParameter
from freq_measure import modulation_depth_for_efficiency
from optics_pipeline import NAMED_TARGETS, EtalonModel, default_etalons
from protocol import Engine, LossReading, NoiseParams
from qd_source import ReexcitationModel, reexcitation_weight_for_penalty

# Load environment variables
load_dotenv()

# Project paths
ROOT_DIR = Path(__file__).parent.parent
DATA_DIR = ROOT_DIR / "data"
CONFIG_DIR = DATA_DIR / "configs"
OUTPUT_DIR = Path(os.getenv("SPIN_TRANSFER_OUTPUT_DIR", str(ROOT_DIR / "output")))


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, str(default))
    try:
        return int(raw)
    except ValueError:
        raise InvalidParameter(f"{name}={raw!r} is not an integer") from None


class Experiment(str, Enum):
    ENTANGLE = "entangle"
    TRANSFER = "transfer"
    ECHO = "echo"
    RAMSEY = "ramsey"
    FRINGE = "fringe"
    LOSSBUDGET = "lossbudget"
    EXPANSION_CHECK = "eq5check"


class NoiseProfile(str, Enum):
    CALIBRATED = "calibrated"
    IDEAL = "ideal"
    MANUAL = "manual"


# ----------------------------------------------------------------------
# Config file sections; None means "keep the profile's value"
# ----------------------------------------------------------------------


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def explicit(self) -> Dict[str, Any]:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class SourceSection(_Section):
    init_error: Optional[float] = None
    reexcitation_penalty: Optional[float] = None
    reexcitation_weight: Optional[float] = None
    reexcitation_model: Optional[ReexcitationModel] = None
    zeeman_splitting_ghz: Optional[float] = None
    excitation_pulse_width_ps: Optional[float] = None


class OpticsSection(_Section):
    etalon_fwhm_ghz: Optional[float] = None
    etalon_model: Optional[EtalonModel] = None


class EomSection(_Section):
    modulation_freq_ghz: Optional[float] = None
    modulation_depth: Optional[float] = None
    sideband_efficiency: Optional[float] = None
    sideband_order: Optional[int] = None
    phase_offset_rad: Optional[float] = None
    phase_slope: Optional[int] = None


class SpinSection(_Section):
    t2_star_ns: Optional[float] = None
    t2_echo_us: Optional[float] = None
    larmor_freq_ghz: Optional[float] = None
    readout_fidelity: Optional[float] = None
    rotation_error: Optional[float] = None


class ProtocolSection(_Section):
    ghz_misassignment: Optional[float] = None
    spin_analysis_delay_ns: Optional[float] = None
    storage_span_ns: Optional[float] = None
    targets: List[str] = Field(default_factory=lambda: list(NAMED_TARGETS))
    apply_correction: bool = True

    @field_validator("targets", mode="before")
    @classmethod
    def _split_targets(cls, value):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        unknown = [v for v in value if v not in NAMED_TARGETS]
        if unknown:
            raise ValueError(f"Unknown targets {unknown}; choose from {list(NAMED_TARGETS)}")
        return value


class LossSection(_Section):
    reading: Optional[LossReading] = None
    sample_herald_loss: Optional[bool] = None
    stages: Optional[List[Tuple[str, float]]] = None
    min_heralds: Optional[int] = Field(default=None, ge=1)

    @field_validator("stages", mode="before")
    @classmethod
    def _split_stages(cls, value):
        if not isinstance(value, str):
            return value
        stages = []
        for item in (v.strip() for v in value.split(",")):
            if not item:
                continue
            name, sep, number = item.partition(":")
            if not sep:
                raise ValueError(f"Loss stage '{item}' must look like name:value")
            stages.append((name.strip(), float(number)))
        return stages


class SweepSection(_Section):
    start_ns: Optional[float] = None
    stop_ns: Optional[float] = None
    steps: Optional[int] = Field(default=None, ge=2)


SECTIONS = {
    "source": SourceSection,
    "optics": OpticsSection,
    "eom": EomSection,
    "spin": SpinSection,
    "protocol": ProtocolSection,
    "loss": LossSection,
    "sweep": SweepSection,
}


class RunConfig(BaseModel):
    """One simulator run: experiment, sampling settings and parameter blocks."""

    model_config = ConfigDict(extra="forbid")

    experiment: Experiment = Experiment.TRANSFER
    trials: int = Field(default_factory=lambda: _env_int("SPIN_TRANSFER_TRIALS", 10_000), ge=1)
    seed: int = Field(default_factory=lambda: _env_int("SPIN_TRANSFER_SEED", 0), ge=0, lt=2**64)
    engine: Engine = Field(
        default_factory=lambda: Engine.parse(os.getenv("SPIN_TRANSFER_ENGINE", "montecarlo"))
    )
    workers: int = Field(default_factory=lambda: _env_int("SPIN_TRANSFER_WORKERS", 1), ge=1)
    output_path: Optional[str] = None
    noise_profile: NoiseProfile = NoiseProfile.CALIBRATED

    source: SourceSection = Field(default_factory=SourceSection)
    optics: OpticsSection = Field(default_factory=OpticsSection)
    eom: EomSection = Field(default_factory=EomSection)
    spin: SpinSection = Field(default_factory=SpinSection)
    protocol: ProtocolSection = Field(default_factory=ProtocolSection)
    loss: LossSection = Field(default_factory=LossSection)
    sweep: SweepSection = Field(default_factory=SweepSection)

    @field_validator("engine", mode="before")
    @classmethod
    def _parse_engine(cls, value):
        return Engine.parse(value)

    def with_overrides(self, **overrides) -> "RunConfig":
        """Copy with command-line values applied (None values are skipped)."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return build_config(data)

    @property
    def resolved_output_path(self) -> Path:
        if self.output_path:
            return Path(self.output_path)
        return OUTPUT_DIR / f"{self.experiment.value}.csv"


def build_config(data: Dict[str, Any]) -> RunConfig:
    """
    Validate a raw mapping into a RunConfig.

    Raises:
        InvalidParameter: if a value is out of range or has the wrong type.
    """
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise InvalidParameter(f"Invalid configuration: {e}") from None


# ----------------------------------------------------------------------
# Text format
# ----------------------------------------------------------------------

_TOP = "__run__"


def parse_config_text(text: str) -> RunConfig:
    """
    Parse the flat-plus-sections key/value format.

    Raises:
        ConfigParse: on malformed text, unknown sections or unknown keys.
        InvalidParameter: on out-of-range values.
    """
    parser = configparser.ConfigParser(
        interpolation=None,
        default_section="__defaults__",
        comment_prefixes=("#", ";"),
        delimiters=("=",),
    )
    parser.optionxform = str
    try:
        parser.read_string(f"[{_TOP}]\n{text}")
    except configparser.Error as e:
        raise ConfigParse(f"Cannot parse configuration: {e}") from None

    data: Dict[str, Any] = dict(parser[_TOP])
    unknown = set(data) - {
        name for name in RunConfig.model_fields if name not in SECTIONS
    }
    if unknown:
        raise ConfigParse(f"Unknown top-level keys: {sorted(unknown)}")

    for section in parser.sections():
        if section == _TOP:
            continue
        if section not in SECTIONS:
            raise ConfigParse(f"Unknown section [{section}]; expected one of {list(SECTIONS)}")
        values = dict(parser[section])
        unknown = set(values) - set(SECTIONS[section].model_fields)
        if unknown:
            raise ConfigParse(f"Unknown keys in [{section}]: {sorted(unknown)}")
        data[section] = values
    return build_config(data)


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Load a configuration file, or the configuration echoed at the top of a CSV.

    Raises:
        ConfigParse: if the file cannot be read or parsed.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigParse(f"Cannot read configuration {path}: {e}") from None

    if path.suffix.lower() == ".csv":
        header = []
        for line in text.splitlines():
            if not line.startswith("#"):
                break
            header.append(line[2:] if line.startswith("# ") else line[1:])
        text = "\n".join(header)
    return parse_config_text(text)


def _format(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(
            f"{v[0]}:{v[1]!r}" if isinstance(v, (tuple, list)) else str(v) for v in value
        )
    return str(value)


def render_config(cfg: RunConfig) -> str:
    """Render `cfg` in the format parse_config_text reads (None values omitted)."""
    data = cfg.model_dump()
    lines = [
        f"{key} = {_format(value)}"
        for key, value in data.items()
        if key not in SECTIONS and value is not None
    ]
    for section in SECTIONS:
        values = {k: v for k, v in data[section].items() if v is not None}
        if not values:
            continue
        lines.append("")
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_format(v)}" for k, v in values.items())
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# Resolution to simulator parameters
# ----------------------------------------------------------------------


def _profile_noise(profile: NoiseProfile) -> NoiseParams:
    if profile == NoiseProfile.CALIBRATED:
        return get_calibrated_noise()
    if profile == NoiseProfile.IDEAL:
        return NoiseParams.ideal()
    return NoiseParams()


def resolve_noise(cfg: RunConfig) -> NoiseParams:
    """
    NoiseParams of the profile with every explicit key applied on top.

    Raises:
        InvalidParameter: if the combination is out of range.
    """
    data = _profile_noise(cfg.noise_profile).model_dump()

    source = cfg.source.explicit()
    penalty = source.pop("reexcitation_penalty", None)
    data["source"].update(source)
    if penalty is not None and "reexcitation_weight" not in source:
        model = data["source"]["reexcitation_model"]
        data["source"]["reexcitation_weight"] = reexcitation_weight_for_penalty(penalty, model)

    optics = cfg.optics.explicit()
    if optics or "zeeman_splitting_ghz" in source:
        etalon_t, etalon_r = default_etalons(
            data["source"]["zeeman_splitting_ghz"],
            optics.get("etalon_fwhm_ghz", data["etalon_t"]["fwhm_ghz"]),
            optics.get("etalon_model", data["etalon_t"]["model"]),
        )
        data["etalon_t"], data["etalon_r"] = etalon_t.model_dump(), etalon_r.model_dump()

    eom = cfg.eom.explicit()
    if "phase_offset_rad" in eom:
        eom["phase_offset"] = eom.pop("phase_offset_rad")
    efficiency = eom.pop("sideband_efficiency", None)
    if efficiency is not None and "modulation_depth" not in eom:
        order = eom.get("sideband_order", data["eom"]["sideband_order"])
        eom["modulation_depth"] = modulation_depth_for_efficiency(efficiency, order)
    data["eom"].update(eom)

    data["spin"].update(cfg.spin.explicit())

    protocol = cfg.protocol.explicit()
    for key in ("ghz_misassignment", "spin_analysis_delay_ns", "storage_span_ns"):
        if key in protocol:
            data[key] = protocol[key]

    loss = cfg.loss.explicit()
    if "reading" in loss:
        data["loss_reading"] = loss["reading"]
    if "sample_herald_loss" in loss:
        data["sample_herald_loss"] = loss["sample_herald_loss"]
    if "stages" in loss:
        data["loss_stages"] = loss["stages"]

    try:
        return NoiseParams.model_validate(data)
    except ValidationError as e:
        raise InvalidParameter(f"Invalid noise parameters: {e}") from None


def effective_config(cfg: RunConfig, noise: NoiseParams, sweep: SweepSection) -> RunConfig:
    """`cfg` with every parameter block written out from the resolved values."""
    data = cfg.model_dump()
    data["source"] = {
        "init_error": noise.source.init_error,
        "reexcitation_weight": noise.source.reexcitation_weight,
        "reexcitation_model": noise.source.reexcitation_model,
        "zeeman_splitting_ghz": noise.source.zeeman_splitting_ghz,
        "excitation_pulse_width_ps": noise.source.excitation_pulse_width_ps,
    }
    data["optics"] = {
        "etalon_fwhm_ghz": noise.etalon_t.fwhm_ghz,
        "etalon_model": noise.etalon_t.model,
    }
    data["eom"] = {
        "modulation_freq_ghz": noise.eom.modulation_freq_ghz,
        "modulation_depth": noise.eom.modulation_depth,
        "sideband_order": noise.eom.sideband_order,
        "phase_offset_rad": noise.eom.phase_offset,
        "phase_slope": noise.eom.phase_slope,
    }
    data["spin"] = noise.spin.model_dump()
    data["protocol"].update(
        ghz_misassignment=noise.ghz_misassignment,
        spin_analysis_delay_ns=noise.spin_analysis_delay_ns,
        storage_span_ns=noise.storage_span_ns,
    )
    data["loss"] = {
        "reading": noise.loss_reading,
        "sample_herald_loss": noise.sample_herald_loss,
        "stages": [tuple(s) for s in noise.loss_stages],
        "min_heralds": cfg.loss.min_heralds,
    }
    data["sweep"] = sweep.model_dump()
    return build_config(data)


class Config:
    """Global configuration."""

    log_level: str = os.getenv("LOG_LEVEL", "WARNING").upper()
    output_dir: Path = OUTPUT_DIR
    config_dir: Path = CONFIG_DIR


# Global config instance
config = Config()
