# Configuration Management
# Environment-driven run settings plus the TOML problem-config schema

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings

from moserlab.exceptions import ConfigError


class Settings(BaseSettings):
    """Laboratory configuration from environment variables"""

    # Base Paths
    BASE_DIR: Path = Path(__file__).resolve().parent.parent
    DATA_DIR: Path = BASE_DIR / "data"
    CLAIMS_PATH: Path = DATA_DIR / "claims_v1.sexp"
    OUTPUT_DIR: Path = Path("out")

    # Reproducibility
    SEED: int = 20240917

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_DIR: Path = Path("logs")
    LOG_FILE: str = "moserlab.log"
    RUN_LOG_FILE: str = "runs.jsonl"

    # Exact verification
    POSITIVITY_MAX_DEPTH: int = 32
    VERIFY_WORKERS: int = 1

    # Sampled inequalities
    INEQUALITY_RTOL: float = 1e-9
    RANDOM_SAMPLES: int = 1000
    K_S_GRID_POINTS: int = 10_000
    K_S_SLACK: float = 1.1

    # Admissibility estimation
    ADMISSIBILITY_SAMPLES: int = 200
    ADMISSIBILITY_SAFETY_FACTOR: float = 2.0

    # Solver
    CG_RTOL: float = 1e-10
    CG_MAXITER: int = 20_000
    STRUCTURE_EPSILON: float = 1e-3

    # Moser pipeline
    MOSER_CONSERVATIVE_SUMS: bool = False

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"

    @property
    def log_path(self) -> Path:
        return self.LOG_DIR / self.LOG_FILE

    @property
    def run_log_path(self) -> Path:
        return self.LOG_DIR / self.RUN_LOG_FILE


# Global settings instance
settings = Settings()


# ==================== PROBLEM CONFIG SCHEMA ====================
class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(_Section):
    shape: Literal["unit-square", "unit-ball", "L-shape"] = "unit-square"
    dirichlet_faces: List[str] = Field(default_factory=lambda: ["all"])
    T: float = Field(default=0.5, gt=0)

    @field_validator("dirichlet_faces")
    @classmethod
    def validate_faces(cls, v):
        allowed = {"all", "west", "east", "south", "north"}
        unknown = [face for face in v if face not in allowed]
        if unknown:
            raise ValueError(f"Unknown Dirichlet faces {unknown}; use {sorted(allowed)}")
        if not v:
            raise ValueError("Dirichlet set A must contain at least one face")
        return v


class GridConfig(_Section):
    n: int = Field(default=32, ge=4)
    nt: int = Field(default=32, ge=1)


class ParamsConfig(_Section):
    N: int = Field(default=2, ge=2)
    tbar: float = 1.6
    rbar_fraction: float = Field(default=0.5, gt=0, lt=1)


class WeightsConfig(_Section):
    kind: Literal["identity", "constant", "distance", "annular-toy"] = "identity"
    value: float = Field(default=1.0, gt=0)
    gamma: float = Field(default=0.2, gt=0, lt=1)
    bbar: float = Field(default=1.0, gt=0)
    beta: float = Field(default=2.0, ge=2)
    k_max: int = Field(default=7, ge=5)


class SourceConfig(_Section):
    kind: Literal["zero", "constant", "sine", "bump", "gaussian", "checkerboard", "manufactured"] = "constant"
    amplitude: float = 1.0


class StructureConfig(_Section):
    a0: float = Field(default=0.0, ge=0)
    a1: float = Field(default=0.0, ge=0)
    # None means sup|f|
    a2: Optional[float] = Field(default=None, ge=0)
    epsilon: float = Field(default=1e-3, gt=0)


class BoundConfig(_Section):
    alpha: float = Field(default=9.0, ge=1)
    admissibility_constant: Optional[float] = Field(default=None, gt=0)
    m_max: int = Field(default=8, ge=3)


class ProblemConfig(_Section):
    """Declarative problem spec: domain, grid, parameter chain, weights, source"""
    domain: DomainConfig = Field(default_factory=DomainConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    params: ParamsConfig = Field(default_factory=ParamsConfig)
    weights: WeightsConfig = Field(default_factory=WeightsConfig)
    source: SourceConfig = Field(default_factory=SourceConfig)
    structure: StructureConfig = Field(default_factory=StructureConfig)
    bound: BoundConfig = Field(default_factory=BoundConfig)


def load_problem_config(path: Union[str, Path]) -> ProblemConfig:
    """
    Read and validate a TOML problem config.
    Raises: ConfigError on missing file, TOML syntax errors or schema violations
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid TOML: {e}")

    try:
        return ProblemConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Config file {path} failed validation: {e}")
