"""Pattern files (CSV and NPHB binary) and result files (JSON and CSV).

NPHB layout, all little-endian::

    bytes 0-3    magic b"NPHB"
    bytes 4-7    u32 version (1)
    bytes 8-15   u64 d
    bytes 16-23  u64 M
    ...          d*M f64 memories, column-major (pattern after pattern)
    1 byte       u8 contamination flag (0 or 1)
    ...          d*M f64 contamination, column-major, present iff flag == 1
"""

import csv
import io
import json
import math
import struct
from pathlib import Path

import numpy as np

from ..errors import (
    BadMagic,
    CSVParseError,
    DimensionOverflow,
    FormatError,
    NonFiniteValue,
    TruncatedFile,
    UnsupportedVersion,
    ValidationError,
)
from ..patterns import MemoryStore

MAGIC = b"NPHB"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
# refuse headers claiming more than 2**40 doubles (8 TiB) before allocating
_MAX_VALUES = 1 << 40


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "nphb"):
            raise ValidationError(f"unknown pattern format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".nphb", ".bin"):
        return "nphb"
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "nphb" if head == MAGIC else "csv"


def read_csv_rows(path):
    """Rows of floats from a CSV file with an optional header line."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise CSVParseError("file contains no data", 1)
    start = 0
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1
    width = None
    data = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise CSVParseError(f"non-numeric field ({exc})", lineno) from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise CSVParseError(f"expected {width} columns, found {len(vals)}", lineno)
        if not all(math.isfinite(v) for v in vals):
            raise NonFiniteValue(f"row {lineno} contains a non-finite value")
        data.append(vals)
    if not data:
        raise CSVParseError("file contains a header but no data", 1)
    return np.array(data, dtype=np.float64)


def load_patterns(path, fmt=None):
    fmt = _infer_format(path, fmt)
    if fmt == "csv":
        return MemoryStore.from_rows(read_csv_rows(path))
    return _read_nphb(Path(path).read_bytes())


def save_patterns(store, path, fmt=None):
    fmt = fmt or ("csv" if Path(path).suffix.lower() == ".csv" else "nphb")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for col in store.memories.T:
                w.writerow([repr(float(v)) for v in col])
        return
    if fmt != "nphb":
        raise ValidationError(f"unknown pattern format {fmt!r}")
    Path(path).write_bytes(encode_nphb(store))


def encode_nphb(store):
    d, M = store.memories.shape
    parts = [_HEADER.pack(MAGIC, VERSION, d, M)]
    parts.append(np.asarray(store.memories.T, dtype="<f8").tobytes())
    if store.has_contamination:
        parts.append(b"\x01")
        parts.append(np.asarray(store.contamination.T, dtype="<f8").tobytes())
    else:
        parts.append(b"\x00")
    return b"".join(parts)


def _read_block(buf, offset, d, M, what):
    n = d * M * 8
    if len(buf) - offset < n:
        raise TruncatedFile(f"{what} block needs {n} bytes, {len(buf) - offset} available", len(buf))
    vals = np.frombuffer(buf, dtype="<f8", count=d * M, offset=offset)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise NonFiniteValue(f"{what} value {bad} at byte offset {offset + 8 * bad} is not finite")
    return vals.reshape(M, d).T.astype(np.float64), offset + n


def _read_nphb(buf):
    if len(buf) < 4:
        raise TruncatedFile("file ends inside the magic number", len(buf))
    if buf[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {bytes(buf[:4])!r}")
    if len(buf) < _HEADER.size:
        raise TruncatedFile("file ends inside the header", len(buf))
    _, version, d, M = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise UnsupportedVersion(f"NPHB version {version} is not supported (expected {VERSION})")
    if d == 0 or M == 0:
        raise FormatError(f"header declares an empty store (d={d}, M={M})")
    if d * M > _MAX_VALUES:
        raise DimensionOverflow(f"header declares d={d}, M={M}: too large to load")
    memories, offset = _read_block(buf, _HEADER.size, d, M, "memory")
    if len(buf) <= offset:
        raise TruncatedFile("missing contamination flag byte", offset)
    flag = buf[offset]
    offset += 1
    contamination = None
    if flag == 1:
        contamination, offset = _read_block(buf, offset, d, M, "contamination")
    elif flag != 0:
        raise FormatError(f"contamination flag must be 0 or 1, found {flag}")
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes after offset {offset}")
    return MemoryStore(memories, contamination)


def save_results(table, path, omit_timing=False):
    """Write a result table as JSON, or flat CSV when ``path`` ends in ``.csv``."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(table.to_csv(omit_timing=omit_timing))
    else:
        path.write_text(table.to_json(omit_timing=omit_timing))


def rows_to_csv(rows):
    keys = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in row.items()})
    return buf.getvalue()
