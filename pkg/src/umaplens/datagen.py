"""Toy dataset generators and CSV round-tripping.

A dataset is an n x D matrix of mutually distinct points; the row index
is the point id.  Generators are pure functions of their parameters and
seed, each owning its own RNG stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Dataset", "gen_ring", "gen_uniform_square", "load_csv", "save_csv"]

# seventeen significant digits round-trip float64 exactly
_FLOAT_FMT = "%.17g"


def _find_duplicate_rows(points: np.ndarray) -> tuple[int, int] | None:
    order = np.lexsort(points.T[::-1])
    srt = points[order]
    eq = np.all(srt[1:] == srt[:-1], axis=1)
    hits = np.nonzero(eq)[0]
    if hits.size == 0:
        return None
    k = hits[0]
    i, j = int(order[k]), int(order[k + 1])
    return (min(i, j), max(i, j))


@dataclass(frozen=True)
class Dataset:
    """n distinct points in R^D; row index is the point id."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError(f"points must be 2-d, got shape {pts.shape}")
        n, dim = pts.shape
        if n < 2:
            raise ValueError(f"need at least 2 points, got {n}")
        if dim < 1:
            raise ValueError("points need at least one coordinate")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        dup = _find_duplicate_rows(pts)
        if dup is not None:
            raise ValueError(f"duplicate points at rows {dup[0]} and {dup[1]}")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def gen_ring(
    n: int, radius: float = 20.0, half_width: float = 4.0, seed: int = 0
) -> Dataset:
    """Sample n points uniformly by area from the annulus radius +- half_width.

    The radial coordinate uses the sqrt inverse CDF so density is uniform
    over the annulus, not uniform in radius.  half_width=0 degenerates to
    the circle of the given radius.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if not (radius > half_width >= 0):
        raise ValueError("require radius > half_width >= 0")
    rng = np.random.default_rng(seed)
    r_lo, r_hi = radius - half_width, radius + half_width
    r = np.sqrt(rng.uniform(r_lo**2, r_hi**2, size=n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return Dataset(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))


def gen_uniform_square(n: int, seed: int = 0) -> Dataset:
    """n i.i.d. uniform samples from the unit square [0,1]^2."""
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    return Dataset(rng.random((n, 2)))


def save_csv(dataset: Dataset, path: str | Path) -> None:
    """Write one point per row as comma-separated decimals (no header)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in dataset.points:
            writer.writerow([_FLOAT_FMT % v for v in row])


def load_csv(path: str | Path) -> Dataset:
    """Read a rectangular numeric CSV, one point per row.

    A single header row is auto-detected (first row with any non-numeric
    cell).  Ragged rows, non-numeric cells and duplicate points are
    rejected with the offending 1-based line number.
    """
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    with path.open(newline="") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if not cells:
                continue
            parsed = []
            bad_col = None
            for col, cell in enumerate(cells):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    bad_col = col
                    break
            if bad_col is not None:
                if lineno == 1:
                    continue  # header row
                raise ValueError(
                    f"{path}: line {lineno}, column {bad_col + 1}: "
                    f"non-numeric cell {cells[bad_col]!r}"
                )
            if width is None:
                width = len(parsed)
            elif len(parsed) != width:
                raise ValueError(
                    f"{path}: line {lineno} has {len(parsed)} fields, expected {width}"
                )
            rows.append(parsed)
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 data rows, got {len(rows)}")
    pts = np.array(rows, dtype=np.float64)
    dup = _find_duplicate_rows(pts)
    if dup is not None:
        raise ValueError(f"{path}: duplicate points at data rows {dup[0]} and {dup[1]}")
    return Dataset(pts)
