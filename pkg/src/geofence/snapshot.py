"""Checksummed JSON-lines snapshot files.

Layout: one ASCII header line ``GFG1 <version> <count> <crc32>`` followed by
one JSON object per line. The CRC32 covers every byte after the header line,
so truncation or bit rot is caught on load. Writes go to a temp file in the
target directory and land with an atomic rename; a crash mid-save can never
leave a half-written store behind.
"""

from __future__ import annotations

import json
import os
import tempfile
import zlib
from typing import Iterable, Sequence

MAGIC = "GFG1"
FORMAT_VERSION = 1


class StorageFailure(OSError):
    """The underlying filesystem refused a read or write."""


class CorruptSnapshot(ValueError):
    """The file is not a valid snapshot or fails its integrity checks."""


def encode_record(record: dict) -> bytes:
    """Serialize one record as a compact, key-sorted JSON line."""
    return json.dumps(record, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"


def write_snapshot(path: str, lines: Sequence[bytes]) -> None:
    """Write pre-encoded record lines as a snapshot, atomically."""
    body = b"".join(lines)
    header = f"{MAGIC} {FORMAT_VERSION} {len(lines)} {zlib.crc32(body):08x}\n".encode("ascii")
    directory = os.path.dirname(os.path.abspath(path))
    tmp_path = None
    try:
        fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".snapshot-", suffix=".tmp")
        with os.fdopen(fd, "wb") as f:
            f.write(header)
            f.write(body)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
        tmp_path = None
    except OSError as exc:
        raise StorageFailure(f"cannot write snapshot {path}: {exc}") from exc
    finally:
        if tmp_path is not None and os.path.exists(tmp_path):
            try:
                os.remove(tmp_path)
            except OSError:
                pass


def write_records(path: str, records: Iterable[dict]) -> None:
    """Encode dict records and write them as a snapshot, atomically."""
    write_snapshot(path, [encode_record(r) for r in records])


def read_snapshot(path: str) -> list[dict]:
    """Load and verify a snapshot, returning its records in file order."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise StorageFailure(f"cannot read snapshot {path}: {exc}") from exc

    newline = raw.find(b"\n")
    if newline < 0:
        raise CorruptSnapshot(f"{path}: missing header line")
    fields = raw[:newline].decode("ascii", errors="replace").split(" ")
    if len(fields) != 4 or fields[0] != MAGIC:
        raise CorruptSnapshot(f"{path}: bad magic or malformed header")
    try:
        version = int(fields[1])
        count = int(fields[2])
        crc_expect = int(fields[3], 16)
    except ValueError as exc:
        raise CorruptSnapshot(f"{path}: malformed header fields") from exc
    if version != FORMAT_VERSION:
        raise CorruptSnapshot(f"{path}: unsupported format version {version}")

    body = raw[newline + 1:]
    if zlib.crc32(body) != crc_expect:
        raise CorruptSnapshot(f"{path}: checksum mismatch")
    lines = body.splitlines()
    if len(lines) != count:
        raise CorruptSnapshot(f"{path}: header claims {count} records, found {len(lines)}")
    records = []
    for i, line in enumerate(lines, start=2):
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise CorruptSnapshot(f"{path}: invalid JSON on line {i}") from exc
        if not isinstance(record, dict):
            raise CorruptSnapshot(f"{path}: record on line {i} is not an object")
        records.append(record)
    return records
