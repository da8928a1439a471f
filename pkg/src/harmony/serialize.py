"""Deterministic zip containers for multi-model artifacts.

Entries are stored uncompressed with fixed timestamps and sorted names,
so identical contents produce bit-identical files.
"""
from __future__ import annotations

import json
import zipfile

from harmony.errors import DataError

_EPOCH = (1980, 1, 1, 0, 0, 0)


def write_container(path, manifest: dict, members: dict) -> None:
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        entries = {"manifest.json": json.dumps(manifest, sort_keys=True).encode("utf-8")}
        entries.update(members)
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            zf.writestr(info, entries[name])


def read_container(path, expected_format: str):
    try:
        with zipfile.ZipFile(path, "r") as zf:
            names = zf.namelist()
            if "manifest.json" not in names:
                raise DataError(f"{path}: container has no manifest")
            manifest = json.loads(zf.read("manifest.json").decode("utf-8"))
            members = {n: zf.read(n) for n in names if n != "manifest.json"}
    except (OSError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read container {path}: {exc}") from exc
    if manifest.get("format") != expected_format:
        raise DataError(
            f"{path}: container format {manifest.get('format')!r}, expected {expected_format!r}"
        )
    return manifest, members


def peek_format(path) -> str | None:
    """Container format name if path is a zip container, else None."""
    if not zipfile.is_zipfile(path):
        return None
    try:
        with zipfile.ZipFile(path, "r") as zf:
            manifest = json.loads(zf.read("manifest.json").decode("utf-8"))
        return manifest.get("format")
    except (OSError, KeyError, zipfile.BadZipFile, json.JSONDecodeError):
        return None
