"""Page cleanup: color-keyed baseline removal, denoising and global de-skew."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import raster

DEFAULT_TOLERANCE = 0.25


class BlankImageError(ValueError):
    pass


@dataclass(frozen=True)
class SkewSearchConfig:
    max_angle: float = 15.0
    coarse_step: float = 1.0
    fine_step: float = 0.1

    def __post_init__(self):
        if not 0 < self.fine_step <= self.coarse_step <= self.max_angle:
            raise ValueError("need 0 < fine_step <= coarse_step <= max_angle")
        if self.max_angle > 45:
            raise ValueError("max_angle must be <= 45 degrees")


@dataclass(frozen=True)
class SkewReport:
    angle: float
    best_variance: float
    evaluated_angles: int

    def csv_row(self) -> str:
        return f"{self.angle:.6g},{self.best_variance:.17g},{self.evaluated_angles}"


def strip_color(page: np.ndarray, ink_channel: str = "red",
                tolerance: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """Keep only ink of the chosen color; everything else becomes paper.

    A pixel is red ink when its red channel exceeds the mean of green and
    blue by more than ``tolerance``; its gray value is ``1 - dominance``.
    With ``ink_channel="black"`` the roles flip: any pixel with a dominant
    channel (printed baselines, colored noise) is removed and the rest keep
    their luma.
    """
    a = np.asarray(page, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError("strip_color needs a 3-channel raster")
    r, g, b = a[..., 0], a[..., 1], a[..., 2]
    dominance = r - (g + b) / 2.0
    if ink_channel == "red":
        out = np.where(dominance > tolerance, 1.0 - dominance, 1.0)
    elif ink_channel == "black":
        colored = (a.max(axis=2) - a.min(axis=2)) > tolerance
        out = np.where(colored, 1.0, raster.luma(a))
    else:
        raise ValueError(f"unknown ink channel {ink_channel!r}")
    return np.clip(out, 0.0, 1.0)


def skew_objective(mask: np.ndarray, theta: float) -> float:
    """Variance of the horizontal projection of an ink mask rotated by ``theta``.

    The mask is binarized once by the caller and rotated bilinearly; rows sum
    the fractional ink mass. Re-binarizing after every rotation moves the
    Otsu level and hence the ink count, and hard re-thresholding makes the
    objective flat below about one pixel of edge displacement.
    """
    rotated = raster.rotate(mask.astype(np.float64), theta, fill=0.0)
    return raster.variance(rotated.sum(axis=1))


def _grid(center: float, half_width: float, step: float) -> np.ndarray:
    n = int(np.floor(half_width / step + 1e-9))
    return np.round(center + step * np.arange(-n, n + 1), 10)


def _argmax(angles, scores) -> tuple[float, float]:
    # highest variance, then smallest |angle|, then the negative one
    best = min(zip(angles, scores), key=lambda p: (-p[1], abs(p[0]), p[0]))
    return float(best[0]), float(best[1])


def _evaluate(mask, angles, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda t: skew_objective(mask, t), angles))
    return [skew_objective(mask, t) for t in angles]


def detect_skew(img: np.ndarray, cfg: SkewSearchConfig | None = None,
                threads: int = 1) -> SkewReport:
    """Two-stage grid search for the rotation maximising projection variance.

    The page is binarized once; each candidate angle rotates that mask.
    The coarse pass covers ``[-max_angle, max_angle]`` at ``coarse_step``;
    the fine pass covers the coarse winner ``+/- coarse_step`` at
    ``fine_step`` (clipped to the search range).
    """
    cfg = cfg or SkewSearchConfig()
    mask = raster.binarize(img)
    if not mask.any():
        raise BlankImageError("blank image")
    cache: dict[float, float] = {}

    def score(angles):
        todo = [a for a in angles if a not in cache]
        for a, s in zip(todo, _evaluate(mask, todo, threads)):
            cache[a] = s
        return [cache[a] for a in angles]

    coarse = _grid(0.0, cfg.max_angle, cfg.coarse_step)
    c_angle, _ = _argmax(coarse, score(coarse))
    fine = _grid(c_angle, cfg.coarse_step, cfg.fine_step)
    fine = fine[np.abs(fine) <= cfg.max_angle + 1e-9]
    angle, best = _argmax(fine, score(fine))
    if angle == 0:
        angle = 0.0
    return SkewReport(angle, best, len(cache))


def deskew(img: np.ndarray, cfg: SkewSearchConfig | None = None,
           threads: int = 1) -> tuple[np.ndarray, SkewReport]:
    report = detect_skew(img, cfg, threads)
    return raster.rotate(img, report.angle), report


def clean_page(page: np.ndarray, ink: str | None = None, median_radius: int = 1,
               cfg: SkewSearchConfig | None = None, tolerance: float = DEFAULT_TOLERANCE,
               threads: int = 1) -> tuple[np.ndarray, SkewReport]:
    """Full page cleanup in pipeline order: strip_color, median filter, deskew.

    ``ink=None`` skips color keying; color pages are then reduced to luma.
    """
    page = np.asarray(page, dtype=np.float64)
    if ink is not None and page.ndim == 3:
        gray = strip_color(page, ink, tolerance)
    else:
        gray = raster.to_gray(page)
    if median_radius > 0:
        gray = raster.median_filter(gray, median_radius)
    return deskew(gray, cfg, threads)
