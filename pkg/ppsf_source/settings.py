"""Configuration management for the PPSF source toolkit."""

import logging
import math
import warnings

from dotenv import load_dotenv
from pydantic import ConfigDict, Field
from pydantic_settings import BaseSettings

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-wide numerical defaults with environment variable support (prefix PPSF_)."""

    model_config = ConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="PPSF_",
        case_sensitive=False,
        extra="ignore"
    )

    # Runtime
    log_level: str = Field(
        default="INFO",
        description="Root logging level"
    )
    threads: int = Field(
        default=1,
        ge=1,
        description="Worker threads for Monte-Carlo resampling"
    )
    output_dir: str = Field(
        default="output",
        description="Directory for exported artifacts"
    )

    # Dispersion
    fd_step_thz: float = Field(
        default=1.0,
        gt=0.0,
        description="Finite-difference step for beta1/k2, as omega/2pi in THz"
    )
    higher_order_step_thz: float = Field(
        default=3.0,
        gt=0.0,
        description="Finite-difference step for k3/k4, as omega/2pi in THz"
    )

    # Tomography
    mle_max_evaluations: int = Field(
        default=100_000,
        ge=100,
        description="Likelihood evaluation cap for MLE reconstruction"
    )
    mc_max_exclusion_fraction: float = Field(
        default=0.05,
        ge=0.0,
        lt=1.0,
        description="Largest tolerated fraction of non-converged Monte-Carlo resamples"
    )

    @property
    def fd_step(self) -> float:
        """Finite-difference step in rad/s."""
        return 2.0 * math.pi * self.fd_step_thz * 1e12

    @property
    def higher_order_step(self) -> float:
        """Five-point stencil step in rad/s."""
        return 2.0 * math.pi * self.higher_order_step_thz * 1e12


def load_settings() -> Settings:
    """Load settings with proper error handling and environment loading."""
    # Load environment variables from .env file
    load_dotenv()

    try:
        return Settings()
    except Exception as e:
        error_msg = f"Failed to load settings: {e}"
        warnings.warn(error_msg)
        logger.warning(error_msg)
        # Fall back to defaults
        return Settings.model_construct()
