# -*- coding: utf-8 -*-

"""wgqdpy logging"""

import logging
import os
import sys

DEFAULT_LOGGER_NAME = "WGQDLogger"
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_LOG_FORMAT = {
    "fmt": "{asctime:s} [{filename:s}:{lineno:d}] {levelname:s} - {message:s}",
    "style": "{",
    "datefmt": "%Y-%m-%d %H:%M:%S",
}
LOG_LEVEL_ENV = "WGQD_LOG_LEVEL"


def get_wg_logger() -> logging.Logger:
    """Get the global wgqdpy logger

    The level is taken from the environment variable ``WGQD_LOG_LEVEL``
    the first time the logger is configured, and defaults to INFO.

    Returns
    -------
    wg_logger : logging.Logger
        wgqdpy logger instance.
    """
    wg_logger = logging.getLogger(DEFAULT_LOGGER_NAME)

    if not wg_logger.hasHandlers():
        wg_logger.setLevel(os.getenv(LOG_LEVEL_ENV, DEFAULT_LOG_LEVEL).upper())

        # create logging formatter
        log_fmt = logging.Formatter(**DEFAULT_LOG_FORMAT)

        # stdout is reserved for command output
        def_hand = logging.StreamHandler(stream=sys.stderr)
        def_hand.setFormatter(log_fmt)
        wg_logger.addHandler(def_hand)

    return wg_logger


def set_wg_log_level(level: str = None):
    """Set the wgqdpy log level

    If no level is supplied it will set the default log level.

    Parameters
    ----------
    level : str or None, optional
        Log level (default is `DEFAULT_LOG_LEVEL`).
    """
    log_level = level.upper() if level else DEFAULT_LOG_LEVEL

    wg_logger = get_wg_logger()
    wg_logger.setLevel(log_level)
    wg_logger.debug(f'{wg_logger.name} log level set to "{log_level}".')
