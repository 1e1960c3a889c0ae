import os
import logging
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Get configuration from environment
ENVIRONMENT = os.getenv("ENVIRONMENT", "development")
LOG_LEVEL = os.getenv("LORADAR_LOG_LEVEL", "INFO").upper()
OUTPUT_DIR = os.getenv("LORADAR_OUTPUT_DIR", "outputs")
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def worker_count() -> int:
    """Number of Monte-Carlo worker processes (LORADAR_WORKERS, default 1)."""
    raw = os.getenv("LORADAR_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logging.getLogger(__name__).warning(f"Ignoring invalid LORADAR_WORKERS={raw!r}, using 1")
        return 1


def configure_logging(level: str = LOG_LEVEL) -> None:
    """Configure root logging for the CLI and the service."""
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)
