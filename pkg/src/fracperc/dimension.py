"""Box-counting dimension estimates from grid counts.

Counts are numbers of grid cells of side r meeting the set rather than
minimal ball covers; the two differ by bounded factors, so fitted slopes
agree.  Slopes are fitted on base-2 logarithms, which makes dyadic examples
(``4^n`` cells at ``r = 2^-n``) come out exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InsufficientData, ScaleError
from .grid import SurvivalTree


@dataclass(frozen=True)
class BoxCountSeries:
    scales: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.scales) != len(self.counts):
            raise ValueError("scales and counts differ in length")
        order = sorted(range(len(self.scales)), key=lambda i: -self.scales[i])
        object.__setattr__(self, "scales", tuple(float(self.scales[i]) for i in order))
        object.__setattr__(self, "counts", tuple(int(self.counts[i]) for i in order))

    @property
    def monotone(self) -> bool:
        """Counts never decrease as the scale shrinks."""
        return all(a <= b for a, b in zip(self.counts, self.counts[1:]))

    def window(self, fit_window: tuple[float, float] | None) -> "BoxCountSeries":
        if fit_window is None:
            return self
        lo, hi = sorted(fit_window)
        keep = [i for i, r in enumerate(self.scales)
                if lo * (1 - 1e-9) <= r <= hi * (1 + 1e-9)]
        return BoxCountSeries(tuple(self.scales[i] for i in keep),
                              tuple(self.counts[i] for i in keep))

    def to_csv(self) -> str:
        return "r,N_r\n" + "".join(f"{r!r},{n}\n" for r, n in zip(self.scales, self.counts))


@dataclass(frozen=True)
class DimEstimate:
    slope: float
    stderr: float
    residual: float
    n_scales: int

    def summary(self) -> str:
        return (f"box dimension {self.slope:.6f} +/- {self.stderr:.2g} "
                f"({self.n_scales} scales, residual {self.residual:.3g})")


def box_count(obj, r) -> int:
    """Number of grid cells of side ``r`` meeting a tree (at a level) or a point cloud."""
    if isinstance(obj, SurvivalTree):
        r = Fraction(r) if not isinstance(r, float) else r
        for k in range(obj.depth + 1):
            side = obj.side(k)
            if (r == side) if isinstance(r, Fraction) else math.isclose(r, side, rel_tol=1e-12):
                return obj.count(k)
        raise ScaleError(f"r={r} is not a construction scale of this tree")
    if r <= 0:
        raise ScaleError("r must be positive")
    pts = np.asarray(obj, float)
    pts = pts.reshape(len(pts), -1)
    if len(pts) == 0:
        return 0
    return len(np.unique(np.floor(pts / float(r)).astype(np.int64), axis=0))


def box_count_series(obj, scales: Sequence | None = None) -> BoxCountSeries:
    """Counts at each scale; trees default to all construction levels."""
    if scales is None:
        if not isinstance(obj, SurvivalTree):
            raise ValueError("scales are required for point clouds")
        return BoxCountSeries(tuple(float(obj.side(k)) for k in range(obj.depth + 1)),
                              tuple(obj.counts()))
    return BoxCountSeries(tuple(float(r) for r in scales), tuple(box_count(obj, r) for r in scales))


def series_from_counts(scales: Sequence[float], counts: Sequence[int]) -> BoxCountSeries:
    return BoxCountSeries(tuple(scales), tuple(counts))


def estimate_dim(series: BoxCountSeries, fit_window: tuple[float, float] | None = None) -> DimEstimate:
    """Least-squares slope of ``log N_r`` against ``log(1/r)``."""
    s = series.window(fit_window)
    n = len(s.scales)
    if n < 3:
        raise InsufficientData(f"need >= 3 scales in the fit window, got {n}")
    if any(c <= 0 for c in s.counts):
        raise InsufficientData("zero counts cannot be fitted on a log scale")
    x = [-math.log2(r) for r in s.scales]
    y = [math.log2(c) for c in s.counts]
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    sxx = math.fsum((a - mx) ** 2 for a in x)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    slope = sxy / sxx
    ssr = math.fsum((b - my - slope * (a - mx)) ** 2 for a, b in zip(x, y))
    stderr = math.sqrt(ssr / (n - 2) / sxx) if n > 2 else math.inf
    return DimEstimate(slope, stderr, math.sqrt(ssr), n)


def sample_spacing(points: np.ndarray, chunk: int = 1024) -> float:
    """Median nearest-neighbour distance of a point cloud."""
    pts = np.asarray(points, float).reshape(len(points), -1)
    if len(pts) < 2:
        raise InsufficientData("need >= 2 points")
    nn = np.empty(len(pts))
    for a in range(0, len(pts), chunk):
        block = pts[a:a + chunk]
        d2 = ((block[:, None, :] - pts[None]) ** 2).sum(-1)
        d2[np.arange(len(block)), np.arange(a, a + len(block))] = np.inf
        nn[a:a + chunk] = np.sqrt(d2.min(axis=1))
    return float(np.median(nn))


def image_series(points: np.ndarray, n_scales: int = 8, min_ratio: float = 4.0) -> BoxCountSeries:
    """Box counts of an image point cloud on a uniform grid over its bounding box.

    Scales halve from the bounding-box extent and stop before bins get
    smaller than ``min_ratio`` times the sample spacing.
    """
    pts = np.asarray(points, float).reshape(len(points), -1)
    lo = pts.min(axis=0)
    extent = float((pts.max(axis=0) - lo).max())
    if extent <= 0:
        raise InsufficientData("degenerate point cloud")
    floor = min_ratio * sample_spacing(pts)
    scales, counts = [], []
    bins = 1
    while len(scales) < n_scales and extent / bins >= floor:
        # bins of side extent/bins; the far face of the box goes into the last bin
        idx = np.minimum(np.floor((pts - lo) * (bins / extent)), bins - 1).astype(np.int64)
        scales.append(extent / bins)
        counts.append(len(np.unique(idx, axis=0)))
        bins *= 2
    return BoxCountSeries(tuple(scales), tuple(counts))
