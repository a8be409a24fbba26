"""Some internal utilities for splitorch


Attributes:

    logger: The package logger. Modules log through child loggers and the
        library never installs handlers itself; see `setup_logging`.
    LOG_FORMAT: The format used by `setup_logging` for stderr output
    NEG_INF: Sentinel for "never", used as the initial `t_last`
"""
from __future__ import annotations

import logging
import sys
from typing import Any, TextIO

LOG_FORMAT = "[splitorch] %(levelname)s: %(message)s"
NEG_INF = float("-inf")

logger = logging.getLogger("splitorch")


class config:
    """Global configurations for splitorch

    Attributes:
        debug: Show debug information (trigger evaluations, solver
            search statistics) when logging is set up by `setup_logging`
    """

    debug = False


class SplitorchException(Exception):
    """Root exception for all splitorch exceptions"""


class InvalidBoundary(SplitorchException, ValueError):
    """When a cut position does not describe a valid contiguous split"""


class UnknownNode(SplitorchException, KeyError):
    """When a node id is not part of the topology"""

    def __str__(self) -> str:
        # KeyError quotes its argument, we don't want that
        return str(self.args[0]) if self.args else ""


class NoLink(SplitorchException):
    """When two nodes that need to exchange activations are not linked"""


class TraceError(SplitorchException, ValueError):
    """When a trace is malformed or queried outside of its domain"""


class OverloadSingularity(SplitorchException):
    """When a node's utilization reaches the queueing cap"""


class NoFeasiblePlacement(SplitorchException):
    """When no placement satisfies the assignment, capacity, privacy and
    connectivity constraints"""


class GreedyDeadEnd(NoFeasiblePlacement):
    """When the greedy heuristic runs out of feasible nodes for a segment,
    even though an exhaustive search might still succeed"""


class ConfigError(SplitorchException, ValueError):
    """When a scenario configuration fails validation

    Args:
        path: The dotted path of the offending field
        reason: Why the field is rejected
    """

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class SplitorchWarning(Warning):
    """Root warning for all splitorch warnings"""


class UnknownConfigKeyWarning(SplitorchWarning):
    """When a scenario document carries a key that nothing reads"""


def setup_logging(
    debug: bool = None,
    stream: TextIO = None,
) -> logging.Handler:
    """Attach a stderr handler to the package logger

    Only the command line entry point should call this. Calling it again
    replaces the previously installed handler.

    Args:
        debug: Whether to log DEBUG messages. Defaults to `config.debug`
        stream: Where to write. Defaults to `sys.stderr`

    Returns:
        The installed handler
    """
    if debug is None:
        debug = config.debug

    for handler in list(logger.handlers):
        if getattr(handler, "_splitorch", False):
            logger.removeHandler(handler)

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._splitorch = True  # type: ignore[attr-defined]
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if debug else logging.INFO)
    return handler


def fmt_float(value: Any, ndigits: int = 6) -> Any:
    """Round floats for serialization so outputs stay byte-stable

    Non-float values pass through unchanged, `None` becomes an empty string.
    """
    if value is None:
        return ""
    if isinstance(value, float):
        value = round(value, ndigits)
        # -0.0 and 0.0 must serialize the same way
        return 0.0 if value == 0 else value
    return value
