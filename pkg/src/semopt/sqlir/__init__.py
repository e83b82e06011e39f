"""SQL templates: parsing, canonical rendering, fingerprints and query logs."""

from .ir import Query
from .parser import UnsupportedQuery, parse_query
from .render import render
from .template import (
    ArityError,
    LogFormatError,
    LogRecord,
    ResolutionError,
    extract_used_fields,
    fingerprint,
    format_log_line,
    generalize,
    instantiate,
    parse_log_record,
    parse_template,
    resolve,
)

__all__ = [
    "ArityError",
    "LogFormatError",
    "LogRecord",
    "Query",
    "ResolutionError",
    "UnsupportedQuery",
    "extract_used_fields",
    "fingerprint",
    "format_log_line",
    "generalize",
    "instantiate",
    "parse_log_record",
    "parse_query",
    "parse_template",
    "render",
    "resolve",
]
