"""The ``.ioa`` description format: parsing, resolution, canonical text and DOT export."""
from .loader import Model, ResolutionError, load_files, load_texts, resolve
from .parser import ParseResult, parse, tokenize
from .syntax import Diagnostic, Document, Span
from .writer import export_dot, serialize

__all__ = [
    "Diagnostic",
    "Document",
    "Model",
    "ParseResult",
    "ResolutionError",
    "Span",
    "export_dot",
    "load_files",
    "load_texts",
    "parse",
    "resolve",
    "serialize",
    "tokenize",
]
