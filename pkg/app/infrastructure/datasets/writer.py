from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from app.application.consts import DATA_OUTPUT_DIR
from app.application.errors import DomainError
from app.application.models import LatticePath

log = logging.getLogger(__name__)
FilePathType = str

FORMATS = ("csv", "json")


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays, tuples and dataclass-like dicts to JSON types."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def format_cell(value: Any) -> str:
    """CSV cell text; floats carry 17 significant digits so they round-trip exactly."""
    value = _plain(value)
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    if value is None:
        return ""
    return str(value)


class DatasetWriter:
    def __init__(self, dir_output: Optional[str] = None):
        self.dir_output = dir_output or DATA_OUTPUT_DIR

        os.makedirs(self.dir_output, exist_ok=True)

    def resolve(self, filepath: FilePathType) -> FilePathType:
        """Relative paths are taken inside the output directory."""
        if os.path.isabs(filepath) or os.path.dirname(filepath):
            return filepath
        return os.path.join(self.dir_output, filepath)

    def write_json(self, record: Any, filepath: FilePathType) -> FilePathType:
        """Write a JSON document with sorted keys.

        Args:
            record (Any): Dicts, lists and numbers, numpy values included.
            filepath (str): Target file.

        Returns:
            str: The path written.

        Raises:
            OSError: If the file cannot be written.
        """
        text = dumps_json(record)
        return self._write(filepath, text + "\n")

    def write_csv(
        self,
        rows: Iterable[dict[str, Any]],
        columns: Sequence[str],
        filepath: FilePathType,
    ) -> FilePathType:
        """Write rows as CSV with a header line, in the given column order."""
        return self._write(filepath, format_csv(rows, columns))

    def write_path_csv(self, path: LatticePath, filepath: FilePathType) -> FilePathType:
        """One row per vertex: i, x, y."""
        rows = ({"i": i, "x": int(x), "y": int(y)} for i, (x, y) in enumerate(path.vertices))
        return self.write_csv(rows, ("i", "x", "y"), filepath)

    def _write(self, filepath: FilePathType, text: str) -> FilePathType:
        filepath = self.resolve(filepath)
        directory = os.path.dirname(filepath)
        try:
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(filepath, "w", newline="") as file:
                file.write(text)
        except OSError as err:
            log.error(f"Could not write {filepath}: {err}")
            raise
        log.info(f"Saved {filepath}")
        return filepath


def format_csv(rows: Iterable[dict[str, Any]], columns: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(row.get(c)) for c in columns])
    return buffer.getvalue()


def _json_float(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    text = format(value, ".17g")
    # Keep integral floats typed as floats for readers.
    return text if any(ch in text for ch in ".e") else text + ".0"


class FixedFloatEncoder(json.JSONEncoder):
    """JSON encoder writing every float with 17 significant digits."""

    def iterencode(self, o: Any, _one_shot: bool = False):
        encode = json.encoder.encode_basestring_ascii if self.ensure_ascii else json.encoder.encode_basestring
        return json.encoder._make_iterencode(
            {} if self.check_circular else None,
            self.default,
            encode,
            self.indent,
            _json_float,
            self.key_separator,
            self.item_separator,
            self.sort_keys,
            self.skipkeys,
            _one_shot,
        )(o, 0)


def dumps_json(record: Any) -> str:
    return json.dumps(_plain(record), sort_keys=True, indent=2, cls=FixedFloatEncoder)


def read_path_csv(filepath: FilePathType) -> LatticePath:
    """Parse a vertex CSV written by ``write_path_csv`` back into a path.

    Raises:
        DomainError: If the header or the vertex sequence is malformed.
    """
    with open(filepath, "r", newline="") as file:
        reader = csv.reader(file)
        header = next(reader, None)
        if header != ["i", "x", "y"]:
            raise DomainError(f"{filepath}: expected header i,x,y, got {header}")
        vertices = []
        for k, row in enumerate(reader):
            if int(row[0]) != k:
                raise DomainError(f"{filepath}: vertex index {row[0]} out of order at row {k}")
            vertices.append((int(row[1]), int(row[2])))
    return LatticePath.from_vertices(vertices)


def write_dataset(
    records: Any,
    format: str,
    filepath: FilePathType,
    columns: Optional[Sequence[str]] = None,
    writer: Optional[DatasetWriter] = None,
) -> FilePathType:
    """Write records as 'csv' (a list of flat dicts) or 'json' (any document)."""
    if format not in FORMATS:
        raise DomainError(f"Invalid format: {format}. Available formats: {FORMATS}")
    writer = writer or DatasetWriter()
    if format == "json":
        return writer.write_json(records, filepath)
    records = list(records)
    columns = list(columns) if columns else (list(records[0].keys()) if records else [])
    return writer.write_csv(records, columns, filepath)
