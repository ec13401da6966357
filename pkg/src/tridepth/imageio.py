"""PPM (P6), PGM (P5) and PFM image files.

Color images travel as float32 (3, H, W) in [0, 1]; grayscale as (H, W).
PFM stores raw float32 (bit-exact round trip, little-endian scale -1.0,
bottom-to-top row order); the 8-bit formats quantize.
"""

from __future__ import annotations

import numpy as np


class ImageFormatError(ValueError):
    pass


def _read_token(buf, pos):
    """Next whitespace-delimited token, skipping '#' comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ImageFormatError(f"unexpected end of header at byte {start}")
    return buf[start:pos], pos


def write_ppm(path, image):
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ImageFormatError(f"PPM needs a (3, H, W) image, got {img.shape}")
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[1:]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(data.transpose(1, 2, 0).tobytes())


def write_pgm(path, image):
    img = np.asarray(image)
    if img.ndim != 2:
        raise ImageFormatError(f"PGM needs a (H, W) image, got {img.shape}")
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())


def _read_binary(path, magic_expected):
    buf = open(path, "rb").read()
    magic, pos = _read_token(buf, 0)
    if magic != magic_expected:
        raise ImageFormatError(f"bad magic {magic!r} at byte 0, "
                               f"expected {magic_expected!r}")
    wtok, pos = _read_token(buf, pos)
    htok, pos = _read_token(buf, pos)
    mtok, pos = _read_token(buf, pos)
    try:
        w, h, maxval = int(wtok), int(htok), int(mtok)
    except ValueError as exc:
        raise ImageFormatError(f"malformed header near byte {pos}: {exc}") from exc
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval} (only 255)")
    pos += 1  # single whitespace byte after maxval
    channels = 3 if magic_expected == b"P6" else 1
    need = w * h * channels
    raster = buf[pos:pos + need]
    if len(raster) < need:
        raise ImageFormatError(f"truncated raster: expected {need} bytes at "
                               f"offset {pos}, found {len(raster)}")
    data = np.frombuffer(raster, dtype=np.uint8).astype(np.float32) / 255.0
    if channels == 3:
        return data.reshape(h, w, 3).transpose(2, 0, 1).copy()
    return data.reshape(h, w).copy()


def read_ppm(path):
    return _read_binary(path, b"P6")


def read_pgm(path):
    return _read_binary(path, b"P5")


def write_pfm(path, image):
    img = np.asarray(image, dtype="<f4")
    if img.ndim == 2:
        magic, channels = b"Pf", 1
        rows = img[::-1]  # PFM stores bottom-to-top
        h, w = img.shape
    elif img.ndim == 3 and img.shape[0] == 3:
        magic, channels = b"PF", 3
        rows = img.transpose(1, 2, 0)[::-1]
        h, w = img.shape[1:]
    else:
        raise ImageFormatError(f"PFM needs (H, W) or (3, H, W), got {img.shape}")
    with open(path, "wb") as fh:
        fh.write(magic + b"\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")  # negative scale = little-endian
        fh.write(np.ascontiguousarray(rows).tobytes())


def read_pfm(path):
    buf = open(path, "rb").read()
    magic, pos = _read_token(buf, 0)
    if magic not in (b"Pf", b"PF"):
        raise ImageFormatError(f"bad magic {magic!r} at byte 0, expected Pf/PF")
    wtok, pos = _read_token(buf, pos)
    htok, pos = _read_token(buf, pos)
    stok, pos = _read_token(buf, pos)
    try:
        w, h, scale = int(wtok), int(htok), float(stok)
    except ValueError as exc:
        raise ImageFormatError(f"malformed header near byte {pos}: {exc}") from exc
    pos += 1
    channels = 3 if magic == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    need = w * h * channels * 4
    raster = buf[pos:pos + need]
    if len(raster) < need:
        raise ImageFormatError(f"truncated raster: expected {need} bytes at "
                               f"offset {pos}, found {len(raster)}")
    data = np.frombuffer(raster, dtype=dtype).astype(np.float32)
    if channels == 3:
        return data.reshape(h, w, 3)[::-1].transpose(2, 0, 1).copy()
    return data.reshape(h, w)[::-1].copy()
