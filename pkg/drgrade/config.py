"""Pipeline configuration: pydantic models persisted as TOML.

Precedence, lowest first: model defaults, the TOML file, environment
variables (``DRGRADE_WORKDIR``, ``DRGRADE_SEED``, ``DRGRADE_LOG_LEVEL``, also
read from a ``.env`` file), command-line flags.
"""
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import tomli_w
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from .classifiers import SuiteConfig
from .classifiers.models import Kind
from .errors import ConfigError
from .features import FEATURE_GROUPS, FeatureConfig
from .imageprep import PrepConfig
from .synth import SeverityRule

logger = logging.getLogger("DRGrade.Config")

DEFAULT_CONFIG_FILE = "drgrade_config.toml"
LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR"]


# ----------------- Config Models ------------------

class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    workdir: Path = Path("work")
    images_dir: Path = Path("images")
    # Unset paths fall back to the synthetic fixture under the workdir.
    detections_file: Optional[Path] = None
    manifest_file: Optional[Path] = None

    def detections(self) -> Path:
        return self.detections_file or self.workdir / "synth" / "detections.jsonl"

    def manifest(self) -> Path:
        return self.manifest_file or self.workdir / "synth" / "manifest.csv"


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    images: int = Field(2000, ge=1)
    rule: SeverityRule = SeverityRule()


class AblationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Kind = "MLP"
    groups: Dict[str, List[str]] = {name: list(cols) for name, cols in FEATURE_GROUPS.items()}


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0)
    log_level: LogLevel = "INFO"
    run_prep: bool = False
    paths: PathsConfig = PathsConfig()
    prep: PrepConfig = PrepConfig()
    features: FeatureConfig = FeatureConfig()
    suite: SuiteConfig = SuiteConfig()
    ablation: AblationConfig = AblationConfig()
    synth: SynthConfig = SynthConfig()

    def seeded_suite(self) -> SuiteConfig:
        """Classifier configs with every stochastic seed set from ``seed``."""
        return self.suite.with_seed(self.seed)

    def with_overrides(self, workdir: Optional[Union[str, Path]] = None, seed: Optional[int] = None,
                       log_level: Optional[str] = None) -> "PipelineConfig":
        data = self.model_dump()
        if workdir is not None:
            data["paths"]["workdir"] = Path(workdir)
        if seed is not None:
            data["seed"] = seed
        if log_level is not None:
            data["log_level"] = log_level.upper()
        return _validated(data, "overrides")


def _validated(data: dict, source: str) -> PipelineConfig:
    try:
        config = PipelineConfig(**data)
    except PydanticValidationError as e:
        raise ConfigError(f"Invalid configuration in {source}: {e}") from e
    return config


# ----------------- Load / Save ------------------

def parse_config(text: str, source: str = "<string>") -> PipelineConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Could not parse {source}: {e}") from e
    return _validated(data, source)


def dump_config(config: PipelineConfig) -> str:
    return tomli_w.dumps(config.model_dump(mode="json", exclude_none=True))


def _env_overrides() -> dict:
    overrides = {}
    if os.environ.get("DRGRADE_WORKDIR"):
        overrides["workdir"] = os.environ["DRGRADE_WORKDIR"]
    if os.environ.get("DRGRADE_SEED"):
        try:
            overrides["seed"] = int(os.environ["DRGRADE_SEED"])
        except ValueError as e:
            raise ConfigError(f"DRGRADE_SEED must be an integer, got {os.environ['DRGRADE_SEED']!r}") from e
    if os.environ.get("DRGRADE_LOG_LEVEL"):
        overrides["log_level"] = os.environ["DRGRADE_LOG_LEVEL"]
    return overrides


def load_config(path: Optional[Union[str, Path]] = None, use_env: bool = True) -> PipelineConfig:
    """Defaults, then the TOML file (an explicit path must exist), then the environment."""
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
    elif Path(DEFAULT_CONFIG_FILE).exists():
        path = Path(DEFAULT_CONFIG_FILE)

    if path is not None:
        config = parse_config(path.read_text(encoding="utf-8"), str(path))
        logger.info(f"Loaded configuration from {path}")
    else:
        config = PipelineConfig()
        logger.info("No config file found, using defaults")

    if use_env:
        load_dotenv(override=False)
        overrides = _env_overrides()
        if overrides:
            logger.debug(f"Environment overrides: {sorted(overrides)}")
            config = config.with_overrides(**overrides)
    return config


def save_config(path: Union[str, Path], config: PipelineConfig) -> None:
    Path(path).write_text(dump_config(config), encoding="utf-8")
    logger.info(f"Saved configuration to {path}")
