"""Solver and verification suite for time-dependent congestion mean-field games."""

from ._mfgc import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_SOLVER_FAILED,
    EXIT_USAGE,
    ConfigError,
    GridMismatch,
    Solution,
    default_config,
    double_legendre_transform,
    estimate_report,
    legendre_transform,
    mc_l1,
    normalize_config,
    read_field_file,
    residual_norm,
    solve,
    trivial_solution,
    write_field_file,
)

__all__ = [
    "EXIT_CHECK_FAILED",
    "EXIT_OK",
    "EXIT_SOLVER_FAILED",
    "EXIT_USAGE",
    "ConfigError",
    "GridMismatch",
    "Solution",
    "default_config",
    "double_legendre_transform",
    "estimate_report",
    "legendre_transform",
    "mc_l1",
    "normalize_config",
    "read_field_file",
    "residual_norm",
    "solve",
    "trivial_solution",
    "write_field_file",
]
