"""Minimal binary PGM/PPM reading and writing.

The sparse labels, frames and predictions are exchanged with the
segmentation pipeline purely through these files, so this module is the
whole interface surface.
"""

import numpy as np


def read_pnm(buf: bytes) -> np.ndarray:
    """Return (H, W) uint8 for P5 or (H, W, 3) for P6, maxval 255."""
    tag = buf[:2]
    if tag == b"P5":
        channels = 1
    elif tag == b"P6":
        channels = 3
    else:
        raise ValueError(f"unsupported pnm tag {tag!r}")
    toks = []
    i = 2
    while len(toks) < 3:
        if i >= len(buf):
            raise ValueError("pnm header ended early")
        c = buf[i : i + 1]
        if c == b"#":
            while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(buf) and not buf[j : j + 1].isspace() and buf[j : j + 1] != b"#":
                j += 1
            toks.append(buf[i:j])
            i = j
    w, h, maxval = (int(t) for t in toks)
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    i += 1  # single whitespace after maxval
    need = w * h * channels
    data = np.frombuffer(buf, dtype=np.uint8, count=need, offset=i)
    if channels == 1:
        return data.reshape(h, w).copy()
    return data.reshape(h, w, 3).copy()


def write_pgm(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.uint8)
    h, w = arr.shape
    return b"P5\n%d %d\n255\n" % (w, h) + arr.tobytes()
