"""Run configuration: one JSON document plus dotted overrides and AFFINE_* env vars."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.model.mu_spec import MuSpec
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunSettings(_Section):
    """Monte Carlo sizes, seeding and worker pool."""

    seed: int = Field(default=1, ge=0, lt=2**64)
    workers: int = Field(default=1, ge=1)
    m_excursions: int = Field(default=10**6, ge=1)
    n_max: int = Field(default=10**6, ge=1)
    nuL_samples: int = Field(default=10**4, ge=1)
    tol: float = Field(default=1e-12, gt=0.0, lt=1.0)
    ladder_n_max: int = Field(default=10**7, ge=1)
    log_radius_cap: float = 30.0
    chunk_size: int = Field(default=2000, ge=1)
    dump_excursions: int = Field(default=0, ge=0)


class TailSettings(_Section):
    """Geometric z grid (as log z) and reliability thresholds."""

    log_z_min: float = 3.0
    log_z_max: float = 7.0
    log_z_step: float = 1.0
    bins: Optional[int] = None
    sigma_log_z_min: float = 3.0
    min_hits: int = 100
    bounds_log_z_min: float = 2.0
    bounds_log_z_max: float = 8.0
    n_boot: int = Field(default=200, ge=0)

    def z_grid(self) -> List[float]:
        logs = np.arange(self.log_z_min, self.log_z_max + 1e-9, self.log_z_step)
        return [float(np.exp(v)) for v in logs]

    def bounds_grid(self) -> List[float]:
        logs = np.arange(self.bounds_log_z_min, self.bounds_log_z_max + 1e-9, self.log_z_step)
        return [float(np.exp(v)) for v in logs]

    def angular_bins(self, dim: int) -> int:
        if self.bins is not None:
            return self.bins
        return 2 if dim == 1 else 64


class PotentialSettings(_Section):
    """Quadrature grid for the potential kernel and the cross-validation grid."""

    psi: str = "rshift:2"
    xmax: float = 60.0
    dx: float = 0.05
    tol: float = 1e-6
    gamma: float = Field(default=1.0, gt=0.0)
    method: str = "auto"
    crossval_xmin: float = -10.0
    crossval_xmax: float = 10.0
    crossval_dx: float = 0.25
    plateau_fraction: float = 0.4
    rtol: float = 0.2


EXECUTION_ONLY = {"output_dir": True, "log_level": True, "run": {"workers", "chunk_size"}}


class RunConfig(BaseSettings):
    """Everything a run depends on; identical configs give identical artifacts."""

    model: MuSpec = Field(default_factory=MuSpec)
    run: RunSettings = Field(default_factory=RunSettings)
    tail: TailSettings = Field(default_factory=TailSettings)
    potential: PotentialSettings = Field(default_factory=PotentialSettings)
    output_dir: Path = Path("output")
    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="AFFINE_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    def fingerprint(self) -> str:
        """Hash of everything that can change a result; pool layout and output location are left out."""
        canonical = json.dumps(
            self.model_dump(mode="json", exclude=EXECUTION_ONLY),
            sort_keys=True,
        )
        return hashlib.sha256(canonical.encode()).hexdigest()


_TOP_LEVEL_KEYS = set(RunConfig.model_fields)


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply ``section.key=value`` overrides to a raw config dict."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().lstrip("-").split(".")
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{dotted}' descends into a non-section")
        node[keys[-1]] = _parse_value(raw)
    return data


def load_run_config(path: Optional[Path] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Read the JSON config (if any), apply overrides and validate."""
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e

    data = apply_overrides(data, overrides)
    unknown = set(data) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    try:
        config = RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(str(e)) from e

    logger.info(f"loaded config {path or '<defaults>'} (fingerprint {config.fingerprint()[:12]})")
    return config
