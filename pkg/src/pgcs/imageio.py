"""Binary PGM (P5, 8-bit) and CSV depth-grid I/O."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _tokens(data: bytes, start: int, count: int):
    # header tokens separated by whitespace, '#' starts a comment to end of line
    out = []
    i = start
    while len(out) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PGM header")
        out.append(data[i:j])
        i = j
    return out, i


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    (w, h, maxval), pos = _tokens(data, 2, 3)
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos:pos + w * h]
    if len(raster) != w * h:
        raise ValueError(f"{path}: expected {w * h} pixel bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, img) -> None:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    if img.dtype != np.uint8:
        if np.any(img < 0) or np.any(img > 255):
            raise ValueError("pixel values outside [0, 255]")
        img = np.rint(img).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


def read_depth_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def write_depth_csv(path, depth) -> None:
    np.savetxt(path, np.asarray(depth, dtype=float), delimiter=",", fmt="%.17g")


def read_image(path) -> tuple[np.ndarray, str]:
    """Load a grayscale PGM or a depth CSV; returns ``(array, mode)``."""
    p = Path(path)
    if p.suffix.lower() == ".csv":
        return read_depth_csv(p), "depth"
    return read_pgm(p).astype(float), "gray"
