"""Large-radius behaviour of parallel sets of arbitrary compact sets.

For ``r >= R |K|`` with ``R > sqrt(2)`` the parallel set ``K(r)`` is
star-shaped with Euler characteristic 1, its curvatures grow like ``r^k``
and its complement has reach at least ``|K| sqrt(R^2 - 1)``.  The sweep here
checks explicit consequences of these facts:

* ``chi(K(r)) = 1`` for ``r >= diam`` (hard assertion),
* ``C_2 / r^2 <= pi (1 + 1/R)^2`` and ``C_1 / r <= 2 pi (1 + 1/R)`` up to 5%,
  both from ``K(r) inside B(x0, r + |K|)``,
* a heuristic reach probe with 10% slack.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .grid import GridMask, contours, curvatures_2d, point_field
from .intervals import IntervalSet

SLACK_PERIMETER = 1.05
SLACK_REACH = 0.9
MIN_VERTICES = 32
JUMP_PIXELS = 8


class HardAssertion(AssertionError):
    """A consequence that must hold exactly failed."""


@dataclass
class CompactSpec:
    """A compact input set: a finite point set or a rendered cover."""

    points: Optional[np.ndarray] = None
    cover: Optional[Union[IntervalSet, GridMask]] = None
    name: str = "compact"

    def __post_init__(self):
        if (self.points is None) == (self.cover is None):
            raise ValueError("give exactly one of points or cover")
        if self.points is not None:
            p = np.asarray(self.points, dtype=float)
            self.points = p.reshape(-1, 1) if p.ndim == 1 else p
            if len(self.points) == 0:
                raise ValueError("empty point set")
        elif isinstance(self.cover, IntervalSet) and self.cover.is_empty:
            raise ValueError("empty cover")
        elif isinstance(self.cover, GridMask) and not self.cover.bits.any():
            raise ValueError("empty cover")

    @property
    def dimension(self) -> int:
        if self.points is not None:
            return self.points.shape[1]
        return 1 if isinstance(self.cover, IntervalSet) else 2

    def planar_points(self) -> np.ndarray:
        """Point set standing for ``K`` in the plane (pixel centers for masks)."""
        if self.points is not None:
            return self.points
        return self.cover.centers()

    @property
    def diam(self) -> float:
        if isinstance(self.cover, IntervalSet):
            return self.cover.diam
        p = self.planar_points()
        if len(p) < 2:
            return 0.0
        if p.shape[1] == 1:
            return float(p.max() - p.min())
        from scipy.spatial import ConvexHull

        if len(p) > 3:
            try:
                p = p[ConvexHull(p).vertices]
            except Exception:
                pass
        return float(pdist(p).max())

    def intervals(self) -> IntervalSet:
        if isinstance(self.cover, IntervalSet):
            return self.cover
        return IntervalSet(np.repeat(self.points[:, :1], 2, axis=1))


def random_cloud(rng: np.random.Generator, n: int = 20, d: int = 2) -> CompactSpec:
    return CompactSpec(points=rng.uniform(0.0, 1.0, size=(n, d)), name=f"cloud{n}")


def default_r_grid(diam: float, R: float, n: int = 12) -> np.ndarray:
    return np.geomspace(R * diam, 10 * diam, n)


@dataclass
class SweepRow:
    r: float
    chi: int
    chi_pixel: int
    C1: float
    C2: Optional[float]
    ratios: tuple
    chi_ok: bool
    area_ok: bool
    perimeter_ok: bool
    reach: Optional["ReachProbe"] = None

    @property
    def passed(self) -> bool:
        ok = self.chi_ok and self.area_ok and self.perimeter_ok
        return ok and (self.reach is None or self.reach.passed or self.reach.unreliable)


@dataclass
class Sweep:
    spec_name: str
    diam: float
    R: float
    rows: list = field(default_factory=list)

    @property
    def chi_ok(self) -> bool:
        return all(r.chi_ok for r in self.rows)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def _field_for(spec: CompactSpec, r: float, min_pixels: float):
    h = r / min_pixels
    return point_field(spec.planar_points(), h, r)


def large_r_sweep(spec: CompactSpec, R: float = 1.5, r_grid=None, min_pixels: float = 64,
                  reach: bool = True, strict: bool = True) -> Sweep:
    """Curvatures of ``K(r)`` for ``r`` in ``[R diam, 10 diam]``.

    Each radius gets its own grid with ``r / h = min_pixels``.  With
    ``strict`` a violated ``chi = 1`` raises :class:`HardAssertion`.
    """
    if not R > math.sqrt(2):
        raise ValueError(f"R must exceed sqrt(2), got {R}")
    diam = spec.diam
    if r_grid is None:
        r_grid = default_r_grid(diam if diam > 0 else 1.0, R)
    out = Sweep(spec.name, diam, R)
    for r in np.asarray(r_grid, dtype=float):
        if spec.dimension == 1:
            c0, c1 = (x[0] for x in spec.intervals().curvatures_at([r]))
            row = SweepRow(float(r), int(c0), int(c0), float(c1), None, (float(c0), c1 / r),
                           chi_ok=(r < diam or c0 == 1), area_ok=True,
                           perimeter_ok=c1 / r <= 2 * (1 + 1 / R) * SLACK_PERIMETER)
        else:
            f = _field_for(spec, r, min_pixels)
            c = curvatures_2d(f, r)
            ratios = (float(c.chi), c.perimeter / r, c.area / r ** 2)
            row = SweepRow(
                float(r), c.chi, c.chi_pixel, c.perimeter, c.area, ratios,
                chi_ok=(r < diam) or (c.chi == 1 and c.chi_pixel == 1),
                area_ok=ratios[2] <= math.pi * (1 + 1 / R) ** 2,
                perimeter_ok=ratios[1] <= 2 * math.pi * (1 + 1 / R) * SLACK_PERIMETER,
                reach=reach_scale_probe(spec, R, r, min_pixels, field=f) if reach else None)
        if strict and not row.chi_ok:
            raise HardAssertion(f"chi(K({r})) = {row.chi} for {spec.name}, r >= diam = {diam}")
        out.rows.append(row)
    return out


@dataclass
class ReachProbe:
    """Heuristic inner rolling radius of the complement of ``K(r)``."""

    estimate: float
    bound: float
    error_bar: float
    n_vertices: int
    unreliable: bool

    @property
    def passed(self) -> bool:
        return self.estimate >= SLACK_REACH * self.bound

    @property
    def slack(self) -> float:
        return self.estimate / self.bound if self.bound > 0 else math.inf


def reach_scale_probe(spec: CompactSpec, R: float, r: float, min_pixels: float = 64,
                      field=None) -> ReachProbe:
    """Distance from ``dK(r)`` to a medial-axis proxy of the interior of ``K(r)``.

    The reach of the closed complement is limited by points of ``K(r)`` with
    two nearest boundary points.  Each interior pixel is assigned its nearest
    sub-pixel contour vertex; pixels whose assignment jumps by more than
    ``JUMP_PIXELS`` pixels between 4-neighbours form the proxy, and the
    estimate is their smallest distance to the contour.  Using contour
    vertices rather than complement pixels avoids spurious jumps between
    near-tied staircase pixels.
    """
    if spec.dimension != 2:
        raise ValueError("reach probe is implemented in the plane")
    diam = spec.diam
    if r < R * diam * (1 - 1e-12):
        raise ValueError("reach probe needs r >= R diam")
    f = field if field is not None else _field_for(spec, r, min_pixels)
    lev = r / f.h
    inside = f.sq <= lev * lev
    cs = contours(f, r)
    verts = cs.segments[:, :2]
    bound = diam * math.sqrt(R * R - 1)
    if len(verts) == 0:
        return ReachProbe(math.inf, bound, f.h, 0, True)
    ii, jj = np.nonzero(inside)
    dist, near = cKDTree(verts).query(np.stack([jj, ii], axis=1).astype(float))
    nx = np.full(inside.shape, np.nan)
    ny = np.full(inside.shape, np.nan)
    nx[ii, jj] = verts[near, 0]
    ny[ii, jj] = verts[near, 1]
    ridge = np.zeros(inside.shape, dtype=bool)
    for axis in (0, 1):
        big = np.hypot(np.diff(nx, axis=axis), np.diff(ny, axis=axis)) > JUMP_PIXELS
        if axis == 0:
            ridge[:-1] |= big
            ridge[1:] |= big
        else:
            ridge[:, :-1] |= big
            ridge[:, 1:] |= big
    ridge &= inside
    dfield = np.full(inside.shape, np.inf)
    dfield[ii, jj] = dist
    est = float(dfield[ridge].min()) * f.h if ridge.any() else math.inf
    return ReachProbe(est, bound, f.h, len(verts), len(verts) < MIN_VERTICES)
