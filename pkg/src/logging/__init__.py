"""Logging utilities for tracking training runs."""

from .run_logger import NullRunLogger, RunLogger, make_run_logger

__all__ = ["NullRunLogger", "RunLogger", "make_run_logger"]
