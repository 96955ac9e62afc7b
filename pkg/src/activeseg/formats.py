"""Bit-exact readers and writers for PGM (P5) masks and float rasters.

Float rasters use a tiny header-plus-payload layout::

    magic   4 ASCII bytes, b"WMAP" (weights) or b"PMAP" (probabilities)
    height  uint32 little-endian
    width   uint32 little-endian
    values  height*width float32 little-endian, row-major
"""

from __future__ import annotations

import os
import struct

import numpy as np

WEIGHT_MAGIC = b"WMAP"
PROB_MAGIC = b"PMAP"
_HEADER = struct.Struct("<4sII")
_F32 = np.dtype("<f4")


class FormatError(ValueError):
    """Raised when a file on disk does not match its declared format."""


def _pgm_tokens(data: bytes, path):
    """Yield (token, end_offset) for the four PGM header fields."""
    pos, n = 0, len(data)
    found = 0
    while found < 4:
        # skip whitespace and comments
        while pos < n:
            c = data[pos:pos + 1]
            if c in b" \t\r\n":
                pos += 1
            elif c == b"#":
                nl = data.find(b"\n", pos)
                pos = n if nl < 0 else nl + 1
            else:
                break
        start = pos
        while pos < n and data[pos:pos + 1] not in b" \t\r\n#":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        found += 1
        yield data[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM file into a ``uint8`` array of shape (H, W)."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    end = 0
    for tok, end in _pgm_tokens(data, path):
        tokens.append(tok)
    magic, w, h, maxval = tokens
    if magic != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {magic!r})")
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FormatError(f"{path}: non-numeric PGM header") from None
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: invalid PGM size {width}x{height}")
    # exactly one whitespace byte separates the header from the raster
    payload = data[end + 1:]
    if len(payload) != width * height:
        raise FormatError(
            f"{path}: expected {width * height} raster bytes, found {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, image: np.ndarray) -> None:
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise FormatError(f"PGM raster must be 2-D, got shape {arr.shape}")
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    elif arr.dtype != np.uint8:
        if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
            raise FormatError("PGM values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    h, w = arr.shape
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(arr).tobytes())


def write_raster(path, values: np.ndarray, magic: bytes = WEIGHT_MAGIC) -> None:
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise FormatError(f"raster must be 2-D, got shape {arr.shape}")
    if magic not in (WEIGHT_MAGIC, PROB_MAGIC):
        raise FormatError(f"unknown raster magic {magic!r}")
    h, w = arr.shape
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, h, w))
        fh.write(np.ascontiguousarray(arr, dtype=_F32).tobytes())


def read_raster(path, magic: bytes | None = None) -> tuple[bytes, np.ndarray]:
    """Read a WMAP/PMAP file; returns ``(magic, float32 array)``.

    If ``magic`` is given the file must carry exactly that tag.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated raster header")
    tag, h, w = _HEADER.unpack_from(data)
    if tag not in (WEIGHT_MAGIC, PROB_MAGIC):
        raise FormatError(f"{path}: bad raster magic {tag!r}")
    if magic is not None and tag != magic:
        raise FormatError(f"{path}: expected {magic!r} raster, found {tag!r}")
    if h < 1 or w < 1:
        raise FormatError(f"{path}: invalid raster size {h}x{w}")
    body = data[_HEADER.size:]
    if len(body) != 4 * h * w:
        raise FormatError(
            f"{path}: expected {4 * h * w} payload bytes, found {len(body)}"
        )
    values = np.frombuffer(body, dtype=_F32).reshape(h, w).astype(np.float32)
    return tag, values


def sniff(path) -> str:
    """Return ``"pgm"`` or ``"raster"`` from the file's leading bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head[:2] == b"P5":
        return "pgm"
    if head in (WEIGHT_MAGIC, PROB_MAGIC):
        return "raster"
    raise FormatError(f"{path}: unrecognized file signature {head!r}")
