# src/maschine/log.py
"""Logging setup backed by rich."""

from __future__ import annotations

import logging

from rich.console import Console
from rich.logging import RichHandler

_CONFIGURED = False


def configure_logging(verbose: bool = False, console: Console | None = None) -> None:
    """Route the ``maschine`` logger tree through a single RichHandler."""
    global _CONFIGURED

    logger = logging.getLogger("maschine")
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    if _CONFIGURED:
        return

    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.propagate = False
    _CONFIGURED = True
