"""Type inference for a mini functional language with type classes,
performed entirely by solving constraint handling rules."""

from .check import Options, infer_program
from .surface import parse

__all__ = ["Options", "infer_program", "parse"]
__version__ = "0.1.0"
