"""Sphere-pair geometry used by the graph edge rule and redundancy pruning."""

from __future__ import annotations

import math

import numpy as np


def intersection_radius(p1, r1: float, p2, r2: float) -> float:
    """Radius of the circle where two sphere surfaces intersect.

    Disjoint or externally tangent spheres give 0; when one sphere contains
    the other the smaller radius is returned.
    """
    d = float(np.linalg.norm(np.asarray(p1, dtype=float) - np.asarray(p2, dtype=float)))
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return min(r1, r2)
    val = 4.0 * d * d * r1 * r1 - (d * d - r2 * r2 + r1 * r1) ** 2
    if val <= 0.0:
        return 0.0
    return math.sqrt(val) / (2.0 * d)


def intersection_radii(d: np.ndarray, r1, r2: np.ndarray) -> np.ndarray:
    """Vectorized :func:`intersection_radius` for center distances ``d``."""
    d = np.asarray(d, dtype=float)
    r1 = np.broadcast_to(np.asarray(r1, dtype=float), d.shape)
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros(d.shape)
    contained = d <= np.abs(r1 - r2)
    out[contained] = np.minimum(r1, r2)[contained]
    cross = ~contained & (d < r1 + r2)
    if np.any(cross):
        dc, a, b = d[cross], r1[cross], r2[cross]
        val = 4.0 * dc * dc * a * a - (dc * dc - b * b + a * a) ** 2
        out[cross] = np.sqrt(np.maximum(val, 0.0)) / (2.0 * dc)
    return out


def sphere_volume(r: float) -> float:
    return 4.0 / 3.0 * math.pi * r ** 3


def lens_volume(r1: float, r2: float, d: float) -> float:
    """Volume of the intersection of two spheres at center distance d."""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return sphere_volume(min(r1, r2))
    return (math.pi * (r1 + r2 - d) ** 2
            * (d * d + 2.0 * d * (r1 + r2) - 3.0 * (r1 - r2) ** 2)
            / (12.0 * d))


def covered_fractions(r: float, d: np.ndarray, r_other: np.ndarray) -> np.ndarray:
    """Fraction of a radius-r sphere's volume covered by each other sphere.

    Containment (d <= r_other - r) counts as full coverage.
    """
    d = np.asarray(d, dtype=float)
    r_other = np.asarray(r_other, dtype=float)
    frac = np.zeros(d.shape)
    contained = d <= r_other - r
    frac[contained] = 1.0
    overlap = ~contained & (d < r + r_other) & (d > np.abs(r - r_other))
    if np.any(overlap):
        dc, rb = d[overlap], r_other[overlap]
        vol = (np.pi * (r + rb - dc) ** 2
               * (dc * dc + 2.0 * dc * (r + rb) - 3.0 * (r - rb) ** 2)
               / (12.0 * dc))
        frac[overlap] = vol / sphere_volume(r)
    # d <= |r - r_other| with r_other < r: the other sphere sits inside this
    # one, covering (r_other / r)^3 of it.
    inner = (d <= np.abs(r - r_other)) & (r_other < r)
    frac[inner] = (r_other[inner] / r) ** 3
    return frac


def coverage_matrix(r_small: np.ndarray, d: np.ndarray, r_big: np.ndarray) -> np.ndarray:
    """fractions[i, j]: coverage of sphere i (radius r_small[i]) by sphere j,
    given the center-distance matrix d of shape (len(r_small), len(r_big)).

    The lens formula is only evaluated on actually-overlapping pairs, which
    keeps the sweep cheap on sparse graphs.
    """
    r = np.asarray(r_small, dtype=float)[:, None]
    R = np.asarray(r_big, dtype=float)[None, :]
    d = np.asarray(d, dtype=float)
    frac = np.zeros(d.shape)
    frac[d <= R - r] = 1.0
    overlap = np.nonzero((frac == 0.0) & (d < r + R) & (d > np.abs(r - R)))
    if len(overlap[0]):
        dd = d[overlap]
        rr = np.broadcast_to(r, d.shape)[overlap]
        RR = np.broadcast_to(R, d.shape)[overlap]
        vol = (np.pi * (rr + RR - dd) ** 2
               * (dd * dd + 2.0 * dd * (rr + RR) - 3.0 * (rr - RR) ** 2) / (12.0 * dd))
        frac[overlap] = vol / (4.0 / 3.0 * np.pi * rr ** 3)
    inner = np.nonzero((d <= np.abs(r - R)) & (R < r))
    if len(inner[0]):
        frac[inner] = (np.broadcast_to(R, d.shape)[inner]
                       / np.broadcast_to(r, d.shape)[inner]) ** 3
    return frac


def enclosing_sphere(positions: np.ndarray, radii: np.ndarray) -> tuple[np.ndarray, float]:
    """Centroid-seeded Ritter-style sphere enclosing a set of spheres.

    Not minimal, but deterministic and cheap; used only to bound segment growth.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    radii = np.asarray(radii, dtype=float).reshape(-1)
    center = positions.mean(axis=0)
    radius = 0.0
    for p, r in zip(positions, radii):
        gap = p - center
        dist = float(np.linalg.norm(gap))
        reach = dist + r
        if reach > radius:
            new_radius = (radius + reach) / 2.0
            if dist > 1e-12:
                center = center + gap * ((reach - new_radius) / dist)
            radius = new_radius
    # Second pass absorbs floating-point slack so containment is exact.
    radius = float(np.max(np.linalg.norm(positions - center, axis=1) + radii))
    return center, radius
