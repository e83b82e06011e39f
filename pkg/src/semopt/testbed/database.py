"""In-memory database instances and their CSV snapshot format.

Each table is dumped to ``<table>.csv``. The first line is a header of
``name:type`` fields. Strings are always double-quoted, so an empty unquoted
field unambiguously means NULL.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from ..schema import Schema, SchemaError


@dataclass(frozen=True, eq=False)
class Database:
    schema: Schema
    tables: Mapping[str, tuple[tuple, ...]]
    # set by the generator when the instance satisfies its constraint set
    constraint_valid: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        for t in self.schema.tables:
            rows = self.tables.get(t.name)
            if rows is None:
                raise SchemaError(f"database lacks table {t.name}")
            width = len(t.columns)
            for r in rows:
                if len(r) != width:
                    raise SchemaError(f"{t.name}: row {r!r} has {len(r)} values, expected {width}")

    def rows(self, table: str) -> tuple[tuple, ...]:
        return self.tables[table]

    def size(self, table: str) -> int:
        return len(self.tables[table])

    def as_dicts(self) -> dict[str, list[dict[str, Any]]]:
        out = {}
        for t in self.schema.tables:
            names = t.column_names
            out[t.name] = [dict(zip(names, r)) for r in self.tables[t.name]]
        return out

    def column_values(self, table: str, column: str) -> list[Any]:
        idx = self.schema.table(table).column_names.index(column)
        return [r[idx] for r in self.tables[table]]

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Database)
            and self.schema == other.schema
            and {k: tuple(v) for k, v in self.tables.items()} == {k: tuple(v) for k, v in other.tables.items()}
        )

    def __repr__(self) -> str:
        sizes = ", ".join(f"{t}={len(r)}" for t, r in self.tables.items())
        return f"Database({sizes})"


def database_from_rows(schema: Schema, rows: Mapping[str, Iterable[Sequence | Mapping]]) -> Database:
    """Build a database from tuples or dicts; tables not mentioned are empty."""
    tables = {}
    for t in schema.tables:
        names = t.column_names
        out = []
        for r in rows.get(t.name, ()):
            if isinstance(r, Mapping):
                out.append(tuple(r.get(n) for n in names))
            else:
                out.append(tuple(r))
        tables[t.name] = tuple(out)
    return Database(schema, tables)


# -- CSV ---------------------------------------------------------------------


def _encode(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace('"', '""') + '"'


def _split_records(text: str) -> list[list[tuple[str, bool]]]:
    """Parse CSV text into records of (field, was_quoted)."""
    records: list[list[tuple[str, bool]]] = []
    row: list[tuple[str, bool]] = []
    buf: list[str] = []
    quoted = False
    i, n = 0, len(text)
    in_quotes = False
    while i < n:
        ch = text[i]
        if in_quotes:
            if ch == '"':
                if i + 1 < n and text[i + 1] == '"':
                    buf.append('"')
                    i += 2
                    continue
                in_quotes = False
            else:
                buf.append(ch)
            i += 1
            continue
        if ch == '"':
            in_quotes = quoted = True
        elif ch == ",":
            row.append(("".join(buf), quoted))
            buf, quoted = [], False
        elif ch == "\n":
            row.append(("".join(buf), quoted))
            records.append(row)
            row, buf, quoted = [], [], False
        elif ch != "\r":
            buf.append(ch)
        i += 1
    if buf or quoted or row:
        row.append(("".join(buf), quoted))
        records.append(row)
    return records


def _decode(text: str, quoted: bool, typ: str) -> Any:
    if not quoted and text == "":
        return None
    if typ == "integer":
        return int(text)
    if typ == "float":
        return float(text)
    if typ == "boolean":
        return text == "true"
    return text


def dump_csv(db: Database, directory: str | Path) -> list[Path]:
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t in db.schema.tables:
        lines = [",".join(f"{c.name}:{c.type}" for c in t.columns)]
        for r in db.rows(t.name):
            lines.append(",".join(_encode(v) for v in r))
        path = out_dir / f"{t.name}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written


def load_csv(schema: Schema, directory: str | Path) -> Database:
    base = Path(directory)
    tables = {}
    for t in schema.tables:
        path = base / f"{t.name}.csv"
        if not path.exists():
            tables[t.name] = ()
            continue
        records = _split_records(path.read_text(encoding="utf-8"))
        header = [name.split(":", 1)[0] for name, _ in records[0]]
        if header != t.column_names:
            raise SchemaError(f"{path}: header {header} does not match schema {t.column_names}")
        types = [c.type for c in t.columns]
        tables[t.name] = tuple(
            tuple(_decode(f, q, typ) for (f, q), typ in zip(rec, types)) for rec in records[1:]
        )
    return Database(schema, tables)
