"""Control-aware analytical probabilistic load flow."""

from ._core import (
    CapacityError,
    ConvergenceError,
    Error,
    Gmm,
    NumericalError,
    ParseError,
    Result,
    StageError,
    ValidationError,
    benchmark,
    dlpf,
    em_fit,
    main,
    run,
    sample,
    solve_ac,
    windgen,
)

__all__ = [
    "CapacityError",
    "ConvergenceError",
    "Error",
    "Gmm",
    "NumericalError",
    "ParseError",
    "Result",
    "StageError",
    "ValidationError",
    "benchmark",
    "dlpf",
    "em_fit",
    "main",
    "run",
    "sample",
    "solve_ac",
    "windgen",
]
