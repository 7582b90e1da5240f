"""Atomic artifact writers and the per-run manifest."""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from . import schemas


def atomic_write(path: Path, writer: Callable[[str], None]) -> None:
    """Call ``writer(tmp_path)`` then rename the temp file onto ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)


def write_json(path: Path, doc) -> None:
    text = dump_json(doc)

    def w(tmp):
        with open(tmp, "w") as fh:
            fh.write(text + "\n")

    atomic_write(path, w)


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with floats printed to 17 significant digits."""
    def fmt(v):
        return "%.17g" % v if isinstance(v, float) else v

    def w(tmp):
        with open(tmp, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(header)
            for r in rows:
                out.writerow([fmt(v) for v in r])

    atomic_write(path, w)


class RunOutput:
    """Output directory plus the manifest indexing everything written to it."""

    def __init__(self, root, command: str):
        self.root = Path(root)
        self.command = command
        self.entries: list[dict] = []

    def json(self, name: str, doc, schema: Optional[str] = None) -> Path:
        if schema is not None:
            schemas.validate(doc, schema)
        path = self.root / name
        write_json(path, doc)
        self.entries.append({"path": name, "kind": "json", "schema": schema})
        return path

    def csv(self, name: str, header, rows) -> Path:
        path = self.root / name
        write_rows(path, header, rows)
        self.entries.append({"path": name, "kind": "csv", "schema": None})
        return path

    def trace(self, name: str, trace) -> Path:
        path = self.root / name
        atomic_write(path, trace.to_csv)
        self.entries.append({"path": name, "kind": "csv", "schema": None})
        return path

    def finish(self, exit_code: int) -> Path:
        """Write manifest.json, keeping entries from earlier runs into the same directory."""
        path = self.root / "manifest.json"
        entries = {}
        if path.exists():
            try:
                old = json.loads(path.read_text())
                entries = {e["path"]: e for e in old.get("artifacts", [])}
            except (json.JSONDecodeError, AttributeError, KeyError, TypeError):
                entries = {}
        entries.update({e["path"]: e for e in self.entries})
        doc = {"command": self.command, "exit_code": int(exit_code),
               "artifacts": [entries[k] for k in sorted(entries)]}
        schemas.validate(doc, "manifest")
        write_json(path, doc)
        return path
