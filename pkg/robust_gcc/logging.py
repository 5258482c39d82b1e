import logging

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def init_logging(level: str = "INFO") -> logging.Logger:
    """Initialize logging for the toolkit and return the package logger."""
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT
    )
    logger = logging.getLogger("robust_gcc")
    logger.debug("Logging is set up.")
    return logger
