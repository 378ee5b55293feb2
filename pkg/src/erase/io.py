"""Recording and event file formats.

Binary recording layout (all little-endian)::

    offset  size  field
    0       4     magic b"ERCD"
    4       2     format version (uint16, currently 1)
    6       4     channel count C (uint32)
    10      8     sample count S (uint64)
    18      8     sample rate in Hz (float64)
    26      ...   channel table, C entries of
                  uint16 label byte length, UTF-8 label, uint8 kind code
    ...     4*C*S float32 samples, channel-major

Kind codes: 0 scalp, 1 virtual, 2 force.

The CSV alternative has a ``# sample_rate=<Hz>`` comment line, a header of
``label:kind`` columns and one row per sample.
"""

from __future__ import annotations

import csv
import os
import struct
from pathlib import Path

import numpy as np

from .recording import ChannelKind, Recording

MAGIC = b"ERCD"
VERSION = 1
_KIND_CODES = {ChannelKind.SCALP: 0, ChannelKind.VIRTUAL: 1, ChannelKind.FORCE: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_FIXED = struct.Struct("<4sHIQd")


class RecordingFormatError(ValueError):
    """Malformed recording file; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def write_recording(path, rec: Recording) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        _write_csv(path, rec)
        return
    data = np.asarray(rec.data, dtype="<f4")
    if not np.isfinite(data).all():
        raise ValueError("recording contains samples that are not finite in float32")
    parts = [_FIXED.pack(MAGIC, VERSION, rec.n_channels, rec.n_samples, float(rec.sample_rate))]
    for label, kind in zip(rec.labels, rec.kinds):
        raw = label.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", _KIND_CODES[kind]))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
        fh.write(np.ascontiguousarray(data).tobytes())
    os.replace(tmp, path)


def read_recording(path) -> Recording:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _read_csv(path)
    buf = path.read_bytes()
    if len(buf) < _FIXED.size:
        raise RecordingFormatError("truncated header", len(buf))
    magic, version, n_ch, n_samp, fs = _FIXED.unpack_from(buf, 0)
    if magic != MAGIC:
        raise RecordingFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise RecordingFormatError(f"unsupported version {version}", 4)
    if not (np.isfinite(fs) and fs > 0):
        raise RecordingFormatError(f"invalid sample rate {fs}", 18)
    pos = _FIXED.size
    labels, kinds = [], []
    for _ in range(n_ch):
        if pos + 2 > len(buf):
            raise RecordingFormatError("truncated channel table", len(buf))
        (n,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if pos + n + 1 > len(buf):
            raise RecordingFormatError("truncated channel table", len(buf))
        try:
            labels.append(buf[pos:pos + n].decode("utf-8"))
        except UnicodeDecodeError:
            raise RecordingFormatError("channel label is not UTF-8", pos) from None
        pos += n
        code = buf[pos]
        if code not in _CODE_KINDS:
            raise RecordingFormatError(f"unknown channel kind code {code}", pos)
        kinds.append(_CODE_KINDS[code])
        pos += 1
    need = 4 * n_ch * n_samp
    if len(buf) - pos < need:
        raise RecordingFormatError(
            f"truncated sample block: expected {need} bytes, found {len(buf) - pos}", len(buf)
        )
    if len(buf) - pos > need:
        raise RecordingFormatError("trailing bytes after sample block", pos + need)
    data = np.frombuffer(buf, dtype="<f4", count=n_ch * n_samp, offset=pos).reshape(n_ch, n_samp)
    bad = ~np.isfinite(data)
    if bad.any():
        ch, i = np.argwhere(bad)[0]
        raise RecordingFormatError(
            f"non-finite sample in channel {labels[ch]!r}", pos + 4 * (ch * n_samp + i)
        )
    return Recording(tuple(labels), tuple(kinds), fs, data.astype(np.float32))


def _write_csv(path: Path, rec: Recording) -> None:
    data = np.asarray(rec.data, dtype=np.float32)
    with open(path, "w", newline="") as fh:
        fh.write(f"# sample_rate={rec.sample_rate!r}\n")
        writer = csv.writer(fh)
        writer.writerow([f"{l}:{k.value}" for l, k in zip(rec.labels, rec.kinds)])
        for row in data.T:
            writer.writerow([repr(float(v)) for v in row])


def _read_csv(path: Path) -> Recording:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# sample_rate="):
            raise RecordingFormatError("missing '# sample_rate=' line", 0)
        fs = float(first.split("=", 1)[1])
        reader = csv.reader(fh)
        header = next(reader)
        labels, kinds = [], []
        for col in header:
            label, _, kind = col.rpartition(":")
            labels.append(label)
            kinds.append(ChannelKind(kind))
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=np.float32).reshape(-1, len(labels)).T
    if not np.isfinite(data).all():
        raise ValueError(f"{path}: non-finite sample")
    return Recording(tuple(labels), tuple(kinds), fs, np.ascontiguousarray(data))


def read_events(path) -> list[float]:
    """Move onset times in seconds, one per line; blank lines and '#' comments ignored."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(float(line))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from None
    return out


def write_events(path, onsets) -> None:
    Path(path).write_text("".join(f"{float(t)!r}\n" for t in onsets))
