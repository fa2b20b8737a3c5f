from pydantic_settings import BaseSettings

class Settings(BaseSettings):
    # App
    APP_NAME: str = "sublab"
    VERSION: str = "1.0.0"
    LOG_LEVEL: str = "INFO"
    OUTPUT_DIR: str = "results"
    THREADS: int = 1
    FLOAT_DIGITS: int = 17

    # Exact spectra
    MAX_SPECTRUM_ENTRIES: int = 20_000_000

    # Discretized models
    MODEL_SAMPLE_GRID: int = 64

    # Eigensolvers
    DENSE_EIG_MAX_DIM: int = 4096
    LANCZOS_KRYLOV_DIM: int = 400
    LANCZOS_MAX_ITER: int = 20_000
    LANCZOS_TOL: float = 1e-8
    CLUSTER_GAP: float = 0.2

    # Heat kernel
    HEAT_MAX_FREQUENCY: float = 400.0

    # Dynamics
    MAX_INTEGRATION_STEPS: int = 5_000_000
    MIDPOINT_TOL: float = 1e-14
    MIDPOINT_MAX_ITER: int = 100
    HYPERBOLIC_MAX_REDUCTIONS: int = 1000

    # Normal forms
    LIE_MAX_ORDER: int = 10

    class Config:
        env_file = ".env"

settings = Settings()
