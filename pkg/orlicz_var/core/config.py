# orlicz_var/core/config.py
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    PROJECT_NAME: str = "ORLICZ-VAR"
    VERSION: str = "1.0.0"
    CONFIG_HEADER: str = "orlicz-var v1"
    LOG_LEVEL: str = "INFO"

    # Sampling grids
    POINTS_PER_DECADE: int = 64
    T_MIN: float = 1e-6
    T_MAX: float = 1e6
    BRACKET_CAP: float = 1e12
    BISECTION_MAX_ITER: int = 200
    BISECTION_RTOL: float = 1e-15

    # N-function probes
    CONVEXITY_SLACK: float = 1e-10
    SUPERLINEAR_FACTOR: float = 1e3
    SUBLINEAR_FACTOR: float = 1e-3
    GROWTH_SMALL_RATIO: float = 1e-3
    GROWTH_DECADE_DECAY: float = 0.05
    DELTA2_GROWTH_LIMIT: float = 0.05
    ENVELOPE_T_MAX: float = 1e6

    # Sobolev conjugate
    QUAD_RTOL: float = 1e-6
    QUAD_TRUNCATION: float = 1e-16
    QUAD_MAX_LEVELS: int = 60
    QUAD_PANELS_PER_LEVEL: int = 4
    QUAD_MAX_PANELS_PER_LEVEL: int = 64
    FORWARD_RTOL: float = 1e-10
    FORWARD_BRACKET_CAP: float = 1e100
    TABLE_S_MIN: float = 1e-60
    TABLE_S_MAX: float = 1e40
    TABLE_S_PER_DECADE: int = 6
    TABLE_T_MIN: float = 1e-8
    TABLE_T_MAX: float = 1e8
    TABLE_T_PER_DECADE: int = 16
    TABLE_MIN_NODES: int = 9
    DERIVATIVE_STEP: float = 1e-4

    # Norms
    NORM_TOL: float = 1e-12
    NORM_MAX_ITER: int = 200
    FOURIER_MODES: int = 4
    FOURIER_DECAY: float = 2.0
    WORKERS: int = 1

    # Solver defaults
    GRAD_TOL: float = 1e-6
    MAX_ITERS: int = 5000
    ARMIJO_C: float = 1e-4
    BACKTRACK: float = 0.5
    MEMORY: int = 10
    MAX_HALVINGS: int = 60
    CURVATURE_EPS: float = 1e-10
    NONNEG_TOL: float = 1e-8
    WEAK_TEST_COUNT: int = 16
    ANTIDERIVATIVE_PANELS: int = 8

    # Validation
    VALIDATION_SAMPLES: int = 2000
    VERIFY_SAMPLES: int = 500
    MODEL_FLUX_SLACK: float = 1e-10

    model_config = SettingsConfigDict(case_sensitive=True, env_prefix="ORLICZ_")


settings = Settings()
