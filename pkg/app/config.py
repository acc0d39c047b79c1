import logging
import os
from dotenv import load_dotenv

load_dotenv()


class Settings:
    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "out")
    FIT_WORKERS: int = int(os.getenv("FIT_WORKERS", "1"))
    # Fixed salt keeps SVG clip-path ids stable between runs
    PLOT_SALT: str = os.getenv("PLOT_SALT", "fdkit")

# Create a single instance for use across the app
settings = Settings()


def configure_logging(level: str | None = None):
    """Configure root logging once for CLI and server entry points"""
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        force=True,
    )
