"""Relational schema model: tables, typed columns, declared keys."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

COLUMN_TYPES = ("integer", "float", "text", "boolean", "timestamp", "enum")
NUMERIC_TYPES = ("integer", "float")
ORDERED_TYPES = ("integer", "float", "timestamp", "text")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnDef:
    name: str
    type: str
    nullable: bool = True
    is_primary_key: bool = False
    enum_values: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.type not in COLUMN_TYPES:
            raise SchemaError(f"column {self.name}: unknown type {self.type!r}")
        if self.type == "enum":
            if not self.enum_values:
                raise SchemaError(f"column {self.name}: enum needs values")
            if len(set(self.enum_values)) != len(self.enum_values):
                raise SchemaError(f"column {self.name}: duplicate enum values")

    @property
    def is_textual(self) -> bool:
        return self.type in ("text", "enum")


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"table {self.name}: duplicate column names")
        if sum(c.is_primary_key for c in self.columns) > 1:
            raise SchemaError(f"table {self.name}: more than one primary key column")

    def column(self, name: str) -> ColumnDef:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(f"{self.name}.{name}")

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def primary_key(self) -> ColumnDef | None:
        for c in self.columns:
            if c.is_primary_key:
                return c
        return None


@dataclass(frozen=True)
class Schema:
    tables: tuple[TableDef, ...]
    # constraints installed in the database, kept as raw dicts in the
    # constraint-file format; see constraints.schema_constraints
    declared: tuple[dict, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate table names")

    def table(self, name: str) -> TableDef:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)

    def has_column(self, table: str, column: str) -> bool:
        return self.has_table(table) and self.table(table).has_column(column)

    def column(self, table: str, column: str) -> ColumnDef:
        return self.table(table).column(column)

    @property
    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "tables": [
                {
                    "name": t.name,
                    "columns": [_column_to_dict(c) for c in t.columns],
                }
                for t in self.tables
            ]
        }
        if self.declared:
            out["constraints"] = list(self.declared)
        return out


def _column_to_dict(c: ColumnDef) -> dict[str, Any]:
    d: dict[str, Any] = {"name": c.name, "type": c.type, "nullable": c.nullable}
    if c.is_primary_key:
        d["primary_key"] = True
    if c.enum_values:
        d["values"] = list(c.enum_values)
    return d


def schema_from_dict(data: dict[str, Any]) -> Schema:
    tables = []
    for t in data.get("tables", []):
        cols = []
        for c in t["columns"]:
            pk = bool(c.get("primary_key", False))
            cols.append(
                ColumnDef(
                    name=c["name"],
                    type=c["type"],
                    nullable=bool(c.get("nullable", not pk)) and not pk,
                    is_primary_key=pk,
                    enum_values=tuple(c.get("values", ())),
                )
            )
        tables.append(TableDef(t["name"], tuple(cols)))
    return Schema(tuple(tables), tuple(data.get("constraints", ())))


def load_schema(path: str | Path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return schema_from_dict(json.load(fh))


def make_schema(spec: dict[str, Iterable[tuple]], declared: Iterable[dict] = ()) -> Schema:
    """Compact constructor used by tests and fixtures.

    ``spec`` maps table name to ``(name, type[, nullable[, pk]])`` tuples.
    """
    tables = []
    for tname, cols in spec.items():
        defs = []
        for entry in cols:
            name, typ, *rest = entry
            nullable = rest[0] if rest else True
            pk = rest[1] if len(rest) > 1 else False
            defs.append(ColumnDef(name, typ, nullable and not pk, pk))
        tables.append(TableDef(tname, tuple(defs)))
    return Schema(tuple(tables), tuple(declared))
