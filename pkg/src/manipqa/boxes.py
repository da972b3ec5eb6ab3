"""Axis-aligned 3D boxes and the two pairwise box metrics.

Axes follow the simulator convention: x and z span the floor, y points up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box3:
    """Axis-aligned box given by its min and max corners, in meters."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min_corner)
        hi = tuple(float(v) for v in self.max_corner)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("box corners must be 3-vectors")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: {lo} .. {hi}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @classmethod
    def from_center(cls, center, size) -> "Box3":
        c = np.asarray(center, dtype=float)
        h = np.asarray(size, dtype=float) / 2
        return cls(tuple(c - h), tuple(c + h))

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple((a + b) / 2 for a, b in zip(self.min_corner, self.max_corner))

    @property
    def extent(self) -> tuple[float, float, float]:
        return tuple(b - a for a, b in zip(self.min_corner, self.max_corner))

    @property
    def volume(self) -> float:
        x, y, z = self.extent
        return x * y * z

    @property
    def footprint_area(self) -> float:
        x, _, z = self.extent
        return x * z

    def translated(self, offset) -> "Box3":
        return Box3(
            tuple(a + d for a, d in zip(self.min_corner, offset)),
            tuple(b + d for b, d in zip(self.max_corner, offset)),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.min_corner, self.max_corner])


def _overlap_1d(a0, a1, b0, b1) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def intersection_volume(a: Box3, b: Box3) -> float:
    v = 1.0
    for i in range(3):
        v *= _overlap_1d(a.min_corner[i], a.max_corner[i], b.min_corner[i], b.max_corner[i])
        if v == 0.0:
            return 0.0
    return v


def footprint_overlap(a: Box3, b: Box3) -> float:
    """Area of the x-z overlap of the two boxes' floor projections."""
    return _overlap_1d(a.min_corner[0], a.max_corner[0], b.min_corner[0], b.max_corner[0]) * _overlap_1d(
        a.min_corner[2], a.max_corner[2], b.min_corner[2], b.max_corner[2]
    )


def containment(inner: Box3, outer: Box3) -> float:
    """Fraction of `inner`'s volume lying inside `outer`."""
    return intersection_volume(inner, outer) / inner.volume


def iou3d(a: Box3, b: Box3) -> float:
    inter = intersection_volume(a, b)
    if inter == 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return min(1.0, inter / union)


def centroid_distance(a: Box3, b: Box3) -> float:
    return math.dist(a.center, b.center)


def jitter_box(box: Box3, sigma: float, rng: np.random.Generator) -> Box3:
    """Perturb every corner coordinate by N(0, sigma^2).

    Corners are re-sorted per axis afterwards; a collapsed axis keeps a 1 mm
    extent so the result is always a valid box.
    """
    if sigma == 0:
        return box
    pts = box.as_array() + rng.normal(0.0, sigma, size=(2, 3))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    hi = np.maximum(hi, lo + 1e-3)
    return Box3(tuple(lo), tuple(hi))


def lattice_span(lo: float, hi: float, origin: float, size: float) -> range:
    """Indices of lattice cells overlapping the open interval (lo, hi).

    Cells are ``[origin + k*size, origin + (k+1)*size]``; touching a cell
    boundary does not count as overlap.
    """
    eps = 1e-9
    k0 = math.floor((lo - origin) / size + eps)
    k1 = math.ceil((hi - origin) / size - eps)
    return range(k0, k1)
