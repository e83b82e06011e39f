"""Constraint extraction from ORM model files."""

from .ast import ModelAst
from .parser import ModelParseError, parse_model_file, parse_model_files
from .passes import (
    Diagnostic,
    Extraction,
    extract,
    extract_all,
    extract_builtin_validations,
    extract_custom_validations,
    extract_has_one,
    extract_inheritance,
    extract_polymorphic,
    extract_state_machine,
    table_candidates,
)

__all__ = [
    "Diagnostic",
    "Extraction",
    "ModelAst",
    "ModelParseError",
    "extract",
    "extract_all",
    "extract_builtin_validations",
    "extract_custom_validations",
    "extract_has_one",
    "extract_inheritance",
    "extract_polymorphic",
    "extract_state_machine",
    "parse_model_file",
    "parse_model_files",
    "table_candidates",
]
