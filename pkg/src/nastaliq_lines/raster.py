"""Grayscale and binary raster primitives.

Images are plain ``numpy`` arrays:

* gray images are 2-D ``float64`` arrays with intensities in ``[0, 1]``
  (0 is ink, 1 is paper);
* binary masks are 2-D ``uint8`` arrays where 1 marks ink;
* a horizontal projection is a 1-D ``int64`` array of per-row ink counts.
"""
from __future__ import annotations

import os

import numpy as np
from scipy import ndimage

LUMA = np.array([0.299, 0.587, 0.114])


class ImageError(ValueError):
    """Raised for unreadable, malformed or unsupported image files."""


def check_gray(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D gray image, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("gray intensities must lie in [0, 1]")
    return a


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def _read_netpbm(data: bytes, path) -> np.ndarray:
    """Parse binary P5 (gray) or P6 (RGB) data with maxval 255."""
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageError(f"unreadable file {path}: not a binary PGM/PPM")
    fields = []
    pos = 2
    n = len(data)
    while len(fields) < 3:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageError(f"unreadable file {path}: truncated header")
        fields.append(int(data[start:pos]))
    if pos >= n or not data[pos:pos + 1].isspace():
        raise ImageError(f"unreadable file {path}: truncated header")
    pos += 1
    width, height, maxval = fields
    if width == 0 or height == 0:
        raise ImageError(f"zero-dimension image {path}")
    if maxval != 255:
        raise ImageError(f"unsupported format {path}: maxval {maxval} (only 8-bit)")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise ImageError(f"unreadable file {path}: truncated pixel data")
    a = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        return a.reshape(height, width)
    return a.reshape(height, width, 3)


def _read_png(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("1", "L", "P", "LA"):
                im = im.convert("L") if im.mode != "P" else im.convert("RGB")
            elif im.mode != "RGB":
                im = im.convert("RGB")
            a = np.asarray(im, dtype=np.float64) / 255.0
    except (OSError, SyntaxError) as exc:
        raise ImageError(f"unreadable file {path}: {exc}") from exc
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise ImageError(f"zero-dimension image {path}")
    return a


def load_raster(path) -> np.ndarray:
    """Read a PGM/PPM/PNG file; gray files give 2-D arrays, color files H x W x 3."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageError(f"unreadable file {path}: {exc.strerror}") from exc
    if data[:2] in (b"P5", b"P6"):
        return _read_netpbm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    if data[:1] == b"P" and data[1:2].isdigit():
        raise ImageError(f"unsupported format {path}: only binary P5/P6 netpbm")
    raise ImageError(f"unsupported format {path}")


def to_gray(raster: np.ndarray) -> np.ndarray:
    if raster.ndim == 2:
        return raster
    return luma(raster[..., :3])


def luma(rgb: np.ndarray) -> np.ndarray:
    # the weights sum to one only up to rounding; snap so white stays 1.0
    return np.clip(np.round(rgb @ LUMA, 12), 0.0, 1.0)


def load_image(path) -> np.ndarray:
    """Load a gray image; color inputs are reduced to luma."""
    return to_gray(load_raster(path))


def save_image(path, img: np.ndarray) -> None:
    """Write a P5 PGM (2-D input) or P6 PPM (H x W x 3 input)."""
    a = np.asarray(img, dtype=np.float64)
    b = np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    magic = b"P5" if a.ndim == 2 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, a.shape[1], a.shape[0])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b.tobytes())


# ---------------------------------------------------------------------------
# Filtering and thresholding
# ---------------------------------------------------------------------------

def median_filter(img: np.ndarray, radius: int = 1) -> np.ndarray:
    if radius < 1:
        raise ValueError("median radius must be >= 1")
    return ndimage.median_filter(check_gray(img), size=2 * radius + 1, mode="nearest")


def otsu_level(levels: np.ndarray) -> int | None:
    """Best Otsu split over 8-bit levels; ``None`` for a single-level image.

    The returned level ``t`` separates classes ``<= t`` and ``> t``; the first
    maximiser of the between-class variance wins.
    """
    hist = np.bincount(levels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    if np.count_nonzero(hist) < 2:
        return None
    k = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)
    w1 = total - w0
    m0 = np.cumsum(hist * k)
    mt = m0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mt * w0 - m0 * total) ** 2 / (w0 * w1)
    between[(w0 == 0) | (w1 == 0)] = -1.0
    return int(np.argmax(between))


def binarize(img: np.ndarray) -> np.ndarray:
    """Global Otsu threshold; returns a uint8 mask with 1 = ink."""
    a = check_gray(img)
    levels = np.round(a * 255.0).astype(np.int64)
    t = otsu_level(levels)
    if t is None:
        return np.zeros(a.shape, dtype=np.uint8)
    return (levels <= t).astype(np.uint8)


def horizontal_projection(mask: np.ndarray) -> np.ndarray:
    return np.asarray(mask, dtype=np.int64).sum(axis=1)


def variance(proj) -> float:
    """Population variance (divides by N)."""
    p = np.asarray(proj, dtype=np.float64)
    if p.size < 1:
        raise ValueError("projection must be non-empty")
    return float(np.mean((p - p.mean()) ** 2))


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def rotate(img: np.ndarray, theta: float, fill: float = 1.0) -> np.ndarray:
    """Rotate about the image centre by ``theta`` degrees (counter-clockwise).

    Bilinear interpolation onto a canvas of the same size; uncovered pixels
    take ``fill`` and corners that leave the canvas are clipped. Accepts 2-D
    images or H x W x C rasters (each channel rotated alike).
    """
    a = np.asarray(img, dtype=np.float64)
    if not np.isfinite(theta):
        raise ValueError("rotation angle must be finite")
    if theta == 0:
        return a.copy()
    if a.ndim == 3:
        return np.stack([rotate(a[..., c], theta, fill) for c in range(a.shape[2])], axis=-1)
    rad = np.deg2rad(theta)
    cos, sin = np.cos(rad), np.sin(rad)
    h, w = a.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    # output (row, col) -> input coordinates; rows grow downward, so a
    # counter-clockwise visual rotation uses this sign pattern
    matrix = np.array([[cos, sin], [-sin, cos]])
    offset = np.array([cy, cx]) - matrix @ np.array([cy, cx])
    out = ndimage.affine_transform(a, matrix, offset=offset, order=1, mode="constant", cval=fill)
    # interpolation weights sum to 1 only up to rounding; keep flat regions exact
    out[np.abs(out - fill) < 1e-12] = fill
    return np.clip(out, 0.0, 1.0)


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resample with pixel-centre alignment and edge clamping."""
    a = np.asarray(img, dtype=np.float64)
    h, w = a.shape
    if (h, w) == (height, width):
        return a.copy()
    ys = np.clip((np.arange(height) + 0.5) * h / height - 0.5, 0, h - 1)
    xs = np.clip((np.arange(width) + 0.5) * w / width - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = a[y0][:, x0] * (1 - fx) + a[y0][:, x1] * fx
    bot = a[y1][:, x0] * (1 - fx) + a[y1][:, x1] * fx
    return np.clip(top * (1 - fy) + bot * fy, 0.0, 1.0)

