"""Binary PGM (P5) and PPM (P6) image files.

Images are plain numpy uint8 arrays, shape (height, width) for grayscale
and (height, width, 3) for the color overlays.  Only 8-bit files are
supported; headers may contain '#' comments.  Malformed files raise
OSError so callers can treat them like any other unreadable input.
"""

import numpy as np

__all__ = ["read_pgm", "write_pgm", "write_ppm"]


def _tokens(buf: bytes):
    """Yield (token, end_offset) for whitespace-separated header fields."""
    i = 0
    n = len(buf)
    while True:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i] == 0x23:  # '#'
            while i < n and buf[i] not in (0x0A, 0x0D):
                i += 1
            continue
        if i >= n:
            return
        start = i
        while i < n and not buf[i:i + 1].isspace():
            i += 1
        yield buf[start:i], i


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    fields = []
    end = 0
    for tok, end in _tokens(buf):
        fields.append(tok)
        if len(fields) == 4:
            break
    if len(fields) < 4:
        raise OSError(f"{path}: truncated PGM header")
    magic, w_s, h_s, maxval_s = fields
    if magic != b"P5":
        raise OSError(f"{path}: not a binary PGM (magic {magic!r})")
    try:
        width, height, maxval = int(w_s), int(h_s), int(maxval_s)
    except ValueError:
        raise OSError(f"{path}: non-numeric PGM header field") from None
    if width <= 0 or height <= 0:
        raise OSError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise OSError(f"{path}: unsupported maxval {maxval} (8-bit only)")
    # exactly one whitespace byte separates the header from the raster
    raster = buf[end + 1:]
    if len(raster) < width * height:
        raise OSError(f"{path}: raster truncated")
    img = np.frombuffer(raster[:width * height], dtype=np.uint8)
    return img.reshape(height, width).copy()


def write_pgm(path, img: np.ndarray):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"grayscale image must be 2-D, got shape {img.shape}")
    img = img.astype(np.uint8, copy=False)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def write_ppm(path, rgb: np.ndarray):
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"color image must have shape (h, w, 3), got {rgb.shape}")
    rgb = rgb.astype(np.uint8, copy=False)
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb).tobytes())
