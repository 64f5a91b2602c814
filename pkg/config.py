import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from activity_time import TauSearch
from azcb import FractionSource
from market_data import ColumnSchema
from mmm_sim import SimConfig
from panel import DEFAULT_BINS, REFERENCE_PANEL_SIZE, InitiationWindow, TermRange
from utils.errors import ConfigError, DataError
from utils.helpers import PathLike, canonical_hash, ensure_dir, load_json, parse_date

ARTIFACT_VERSION = "1.0.0"

# ln 1.25: with s0 = 1 the 4-year bond starts near P = 0.56
CONVERGENCE_TAU0 = 0.22314355131420976

# Environment variables consulted below the config file
ENV_KEYS = {
    "FLVR_INDEX": "index",
    "FLVR_RATES": "rates",
    "FLVR_OUT": "out",
    "FLVR_WORKERS": "workers",
    "FLVR_LOG_LEVEL": "log_level",
}


class HedgeSettings(BaseModel):
    """
    The single-contract experiment. Without dates the contract starts at the
    end of the fit window and matures on the last observation.
    """
    model_config = ConfigDict(extra="forbid")

    start: Optional[str] = None
    maturity: Optional[str] = None
    cost_bp: float = Field(default=0.0, ge=0)
    fraction_source: FractionSource = FractionSource.PORTFOLIO

    @field_validator("start", "maturity")
    @classmethod
    def _is_date(cls, value: Optional[str]) -> Optional[str]:
        if value is not None:
            try:
                parse_date(value, "hedge date")
            except ConfigError as e:
                raise ValueError(str(e)) from e
        return value


class PanelSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    terms: TermRange = Field(default_factory=TermRange)
    cost_bp: float = Field(default=0.0, ge=0)
    alpha: float = Field(default=1e-6, gt=0, lt=1)
    bins: int = Field(default=DEFAULT_BINS, ge=1)
    window: InitiationWindow = Field(default_factory=InitiationWindow)
    fraction_source: FractionSource = FractionSource.PORTFOLIO
    reference_count: Optional[int] = Field(default=REFERENCE_PANEL_SIZE, ge=1)
    sensitivity_bp: List[float] = Field(default_factory=lambda: [10.0, 25.0, 50.0])
    chunk_size: int = Field(default=2048, ge=1)


class SimSettings(BaseModel):
    """Monte-Carlo oracle, hedge convergence and path-sample settings."""
    model_config = ConfigDict(extra="forbid")

    oracle: SimConfig = Field(default_factory=lambda: SimConfig(step=10.0, n_paths=100_000))
    convergence: SimConfig = Field(default_factory=lambda: SimConfig(
        tau0=CONVERGENCE_TAU0, slope=0.1, horizon=4.0, n_paths=400, block_size=400
    ))
    convergence_steps: List[float] = Field(default_factory=lambda: [1 / 4, 1 / 8, 1 / 16, 1 / 32])
    path_sample: int = Field(default=10, ge=1)
    drift_check: bool = True


class RunConfig(BaseModel):
    """
    Everything a run needs. Unknown keys are rejected.

    Attributes:
        index (Path): Total-return index CSV.
        rates (Path): 3-month T-bill discount-rate CSV (percent).
        index_schema (ColumnSchema): Columns of the index file.
        rates_schema (ColumnSchema): Columns of the rates file.
        tau_search (TauSearch): Initial activity time search.
        hedge (HedgeSettings): Single-contract experiment.
        panel (PanelSettings): Cross-section and test.
        sim (SimSettings): Simulation experiments.
        out (Path): Output directory.
        workers (int): ray workers; 1 runs in-process.
        log_level (str): Root logger level.
    """
    model_config = ConfigDict(extra="forbid")

    index: Optional[Path] = None
    rates: Optional[Path] = None
    index_schema: ColumnSchema = Field(default_factory=ColumnSchema)
    rates_schema: ColumnSchema = Field(default_factory=ColumnSchema)
    tau_search: TauSearch = Field(default_factory=TauSearch)
    hedge: HedgeSettings = Field(default_factory=HedgeSettings)
    panel: PanelSettings = Field(default_factory=PanelSettings)
    sim: SimSettings = Field(default_factory=SimSettings)
    out: Path = Path("out")
    workers: int = Field(default=1, ge=1)
    log_level: str = "INFO"

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        level = value.upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"unknown log level {value}")
        return level

    def require_inputs(self):
        """Checks that both input files exist before a data stage starts."""
        for name in ("index", "rates"):
            path = getattr(self, name)
            if path is None:
                raise ConfigError(f"No {name} file configured (flag --{name}, config '{name}' or FLVR_{name.upper()})")
            if not Path(path).is_file():
                raise DataError(f"Configured {name} file {path} does not exist")

    def prepare_out(self) -> Path:
        try:
            return ensure_dir(self.out)
        except OSError as e:
            raise ConfigError(f"Cannot create output directory {self.out}: {e}") from e

    def digest(self) -> str:
        return canonical_hash(self.model_dump(mode="json", exclude={"out", "workers", "log_level"}))


def merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; None values in update leave base untouched."""
    merged = dict(base)
    for key, value in update.items():
        if value is None:
            continue
        if isinstance(value, dict):
            current = merged.get(key)
            nested = merge(current if isinstance(current, dict) else {}, value)
            if nested or key in merged:
                merged[key] = nested
        else:
            merged[key] = value
    return merged


def environment_defaults() -> Dict[str, Any]:
    return {field: os.environ[key] for key, field in ENV_KEYS.items() if os.environ.get(key)}


def load_run_config(path: Optional[PathLike] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Builds the run configuration: command-line overrides win over the JSON
    file, which wins over FLVR_* environment variables, which win over defaults.

    Args:
        path (PathLike): Optional JSON config file.
        overrides (Dict[str, Any]): Nested values from the command line.

    Returns:
        RunConfig: The validated configuration.

    Raises:
        ConfigError: if the config file or any value is invalid.
    """
    # Partial nested values must keep the sibling defaults, so merge over a full dump
    layers = merge(RunConfig().model_dump(mode="json"), environment_defaults())
    if path is not None:
        try:
            layers = merge(layers, load_json(path))
        except DataError as e:
            raise ConfigError(str(e)) from e
    layers = merge(layers, overrides or {})
    try:
        return RunConfig.model_validate(layers)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
