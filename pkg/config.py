from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings and configuration"""

    model_config = SettingsConfigDict(
        env_prefix="RMAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Application
    LOG_LEVEL: str = "INFO"
    APP_NAME: str = "WhittleCheck"
    APP_VERSION: str = "1.0.0"

    # Whittle index computation
    DISCOUNT: float = 0.5
    # "current_state": r(s, a) = s ; "next_state": r(s, a) = P(s, a, 1)
    REWARD_ON: str = "current_state"
    VALUE_ITERATION_TOL: float = 1e-6
    VALUE_ITERATION_MAX_SWEEPS: int = 100_000
    BISECTION_TOL: float = 1e-4

    # Estimation of observed transition probabilities
    NUM_CLUSTERS: int = 20
    PASSIVE_MIN_SUPPORT: int = 1
    ACTIVE_MIN_SUPPORT: int = 1
    KMEANS_MAX_ITERS: int = 300
    KMEANS_TOL: float = 1e-8
    SMOOTHING: float = 0.0

    # Metrics
    TOP_K: int = 200
    HISTOGRAM_BINS: int = 40
    NORM_EPSILON: float = 1e-9

    # Simulation
    RNG_ALGORITHM: str = "PCG64"
    MONTE_CARLO_BATCH: int = 1000


settings = Settings()
