"""Projection-profile line segmentation and column-frame features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import raster

X_HEIGHT = 30
RIGHT_TO_LEFT = "right_to_left"
LEFT_TO_RIGHT = "left_to_right"


@dataclass(frozen=True)
class LineBand:
    top: int
    height: int
    ink_pixels: int = 0

    @property
    def bottom(self) -> int:
        """Exclusive end row."""
        return self.top + self.height


def segment_lines(page: np.ndarray, ink_threshold: int = 0,
                  min_line_height: int = 5) -> list[LineBand]:
    """Split a page into text-line bands from its horizontal projection.

    A band opens on the first row whose ink count exceeds ``ink_threshold``
    and runs until the count drops back to ``<= ink_threshold``. Bands shorter
    than ``min_line_height`` rows are dropped as specks.
    """
    proj = raster.horizontal_projection(raster.binarize(page))
    return bands_from_projection(proj, ink_threshold, min_line_height)


def bands_from_projection(proj, ink_threshold: int = 0,
                          min_line_height: int = 5) -> list[LineBand]:
    proj = np.asarray(proj)
    inside = np.concatenate(([False], proj > ink_threshold, [False]))
    edges = np.flatnonzero(inside[1:] != inside[:-1])
    bands = []
    for top, end in zip(edges[::2], edges[1::2]):
        height = int(end - top)
        if height >= min_line_height:
            bands.append(LineBand(int(top), height, int(proj[top:end].sum())))
    return bands


def crop_band(page: np.ndarray, band: LineBand) -> np.ndarray:
    page = np.asarray(page)
    if band.top < 0 or band.height < 1 or band.bottom > page.shape[0]:
        raise IndexError(f"band rows [{band.top}, {band.bottom}) outside page of "
                         f"height {page.shape[0]}")
    return page[band.top:band.bottom].copy()


def normalize_height(line: np.ndarray, height: int = X_HEIGHT) -> np.ndarray:
    """Resample to ``height`` rows keeping the aspect ratio (width >= 1)."""
    line = raster.check_gray(line)
    h, w = line.shape
    width = max(1, int(np.floor(w * height / h + 0.5)))
    return raster.resize_bilinear(line, height, width)


def extract_frames(line: np.ndarray, direction: str = RIGHT_TO_LEFT) -> np.ndarray:
    """One 30-value frame per pixel column, shape (width, 30).

    Frame 0 is the rightmost column for ``right_to_left`` reading order.
    """
    line = np.asarray(line, dtype=np.float64)
    if line.ndim != 2 or line.shape[0] != X_HEIGHT or line.shape[1] < 1:
        raise ValueError(f"line image must be {X_HEIGHT} rows high, got {line.shape}")
    frames = line.T
    if direction == RIGHT_TO_LEFT:
        frames = frames[::-1]
    elif direction != LEFT_TO_RIGHT:
        raise ValueError(f"unknown direction {direction!r}")
    return np.ascontiguousarray(frames)


def line_frames(line: np.ndarray, direction: str = RIGHT_TO_LEFT) -> np.ndarray:
    return extract_frames(normalize_height(line), direction)
