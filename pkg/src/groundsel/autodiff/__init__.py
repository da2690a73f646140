"""Minimal reverse-mode differentiation: tensors, an eager tape, and an FD checker."""

from .check import FDReport, fd_check
from .tensor import DTensor, ParamStore, Tape

__all__ = ["DTensor", "ParamStore", "Tape", "FDReport", "fd_check"]
