"""Two-dimensional raster geometry of fractal covers.

A cover is rendered as the set of pixels holding one anchor point per leaf,
an exact Euclidean distance transform turns it into a distance field, and the
parallel set ``F(eps)`` is the sublevel set ``{d <= eps}``.  Area and
perimeter come from marching-squares contours of the field, the Euler
characteristic from the orientation of the closed contour loops, with the
pixel cubical complex as an independent cross-check.

Small radii need fine pixels but large radii need large boxes, so curves are
evaluated on a pyramid of grids with pixel sizes ``h * 2^j``; each radius
uses the coarsest grid that still resolves it with ``min_pixels`` pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .rifs import CodeTree, R_DEFAULT, Resolution, RifsModel, rho, sample_tree

GATE_PIXELS = 4
MIN_PIXELS = 64
PAD = 2


class ResolutionTooCoarse(ValueError):
    """Radius below the ``4 h`` gate or leaves larger than half a pixel."""


class EmptyMask(ValueError):
    """Distance transform of a mask without foreground pixels."""


@dataclass
class GridMask:
    """Binary raster; pixel ``(i, j)`` is centered at ``origin + h * (j, i)``."""

    origin: tuple
    h: float
    bits: np.ndarray

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def centers(self):
        i, j = np.nonzero(self.bits)
        return np.stack([self.origin[0] + self.h * j, self.origin[1] + self.h * i], axis=1)

    def shifted(self, di: int, dj: int) -> "GridMask":
        """Whole-pixel translation; the frame moves with the content."""
        return GridMask((self.origin[0] + dj * self.h, self.origin[1] + di * self.h), self.h,
                        self.bits)

    def to_pgm(self, path) -> None:
        _write_pgm(path, self.bits.astype(np.uint8) * 255, 255, f"mask h={self.h!r}")


@dataclass
class DistanceField:
    """Squared distances in pixel units from each pixel center to the set.

    For rendered masks this is the exact integer EDT; for point sets it is
    the exact (float) distance to the points themselves.
    """

    origin: tuple
    h: float
    sq: np.ndarray
    feature: Optional[np.ndarray] = None

    @property
    def values(self) -> np.ndarray:
        return self.h * np.sqrt(self.sq.astype(np.float64))

    @property
    def shape(self):
        return self.sq.shape

    def to_pgm(self, path) -> None:
        v = np.sqrt(self.sq.astype(np.float64))
        vmax = float(v.max()) or 1.0
        scale = 65535.0 / vmax
        _write_pgm(path, np.round(v * scale).astype(">u2"), 65535,
                   f"distance field h={self.h!r} scale={scale!r} (value = pixel / scale * h)")


def _write_pgm(path, arr, maxval, comment):
    H, W = arr.shape
    with open(Path(path), "wb") as f:
        f.write(f"P5\n# {comment}\n{W} {H}\n{maxval}\n".encode())
        f.write(np.ascontiguousarray(arr).tobytes())


# ---------------------------------------------------------------------------
# rendering and distance fields
# ---------------------------------------------------------------------------


def frame(bounds, h: float, eps_max: float):
    """Pixel-aligned frame containing ``bounds`` grown by ``eps_max``.

    Pixel centers lie on the lattice ``h * Z^2`` so frames at the same ``h``
    are translates of each other.
    """
    (x0, y0), (x1, y1) = bounds
    m = eps_max + PAD * h
    j0, i0 = math.floor((x0 - m) / h), math.floor((y0 - m) / h)
    j1, i1 = math.ceil((x1 + m) / h), math.ceil((y1 + m) / h)
    return (j0 * h, i0 * h), (i1 - i0 + 1, j1 - j0 + 1)


def anchor_points(tree: CodeTree, model: RifsModel, nodes: np.ndarray) -> np.ndarray:
    """Images of the centroid of ``J`` under the composed maps of ``nodes``."""
    c = model.base.anchor
    z = np.where(tree.refl[nodes], np.conj(c), c) * tree.lin[nodes] + tree.shift[nodes]
    return np.stack([z.real, z.imag], axis=1)


def rasterize(points: np.ndarray, origin, shape, h: float) -> np.ndarray:
    bits = np.zeros(shape, dtype=bool)
    if len(points):
        j = np.rint((points[:, 0] - origin[0]) / h).astype(np.int64)
        i = np.rint((points[:, 1] - origin[1]) / h).astype(np.int64)
        bits[i, j] = True
    return bits


def _leaf_points(tree, model, branch=None):
    leaves = tree.leaves()
    leaves = leaves[~tree.dead[leaves]]
    if branch is not None:
        leaves = leaves[tree.branch[leaves] == branch]
    return anchor_points(tree, model, leaves)


def base_bounds(model: RifsModel):
    v = model.base.vertices
    return tuple(v.min(axis=0)), tuple(v.max(axis=0))


def render_cover_2d(tree: CodeTree, model: RifsModel, h: float, eps_max: float = 0.0,
                    branch: Optional[int] = None) -> GridMask:
    """Pixels holding one anchor point per (living) leaf of a Resolution tree."""
    if model.dimension != 2:
        raise ValueError("raster engine needs a two-dimensional model")
    if not isinstance(tree.stop, Resolution):
        raise ValueError("cover needs a tree stopped by Resolution(l)")
    if tree.stop.r > h / 2 * (1 + 1e-12):
        raise ResolutionTooCoarse(f"leaf size {tree.stop.r} exceeds h/2 = {h / 2}")
    origin, shape = frame(base_bounds(model), h, eps_max)
    return GridMask(origin, h, rasterize(_leaf_points(tree, model, branch), origin, shape, h))


def edt(mask: GridMask, features: bool = False) -> DistanceField:
    """Exact Euclidean distance transform (squared integer pixel distances)."""
    if not mask.bits.any():
        raise EmptyMask("mask has no foreground pixels")
    sq, feat = K.edt_squared(mask.bits, features)
    return DistanceField(mask.origin, mask.h, sq, feat)


def point_field(points, h: float, eps_max: float, bounds=None) -> DistanceField:
    """Exact distance field of a finite point set (no snapping to pixels)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if bounds is None:
        bounds = (tuple(points.min(axis=0)), tuple(points.max(axis=0)))
    origin, shape = frame(bounds, h, eps_max)
    H, W = shape
    # pixel units; query every pixel center against a k-d tree of the points
    pts = (points - np.asarray(origin)) / h
    ii, jj = np.mgrid[0:H, 0:W]
    centers = np.stack([jj.ravel(), ii.ravel()], axis=1).astype(float)
    d, _ = cKDTree(pts).query(centers)
    return DistanceField(origin, h, (d * d).reshape(H, W))


def analytic_disc_field(radius_px: float, h: float = 1.0, offset=(0.0, 0.0)) -> DistanceField:
    """Field whose ``radius`` sublevel set is the disc of that radius.

    Uses the exact distance to the center point; ``offset`` moves the center
    off the pixel lattice.
    """
    r = radius_px * h
    return point_field([offset], h, r)


# ---------------------------------------------------------------------------
# contours and curvatures
# ---------------------------------------------------------------------------


@dataclass
class ContourSet:
    """Oriented iso-segments; foreground (``d <= level``) lies to the left."""

    level: float
    h: float
    origin: tuple
    segments: np.ndarray
    ids: np.ndarray
    _areas: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def length(self) -> float:
        s = self.segments
        seg = np.hypot(s[:, 2] - s[:, 0], s[:, 3] - s[:, 1])
        return self.h * math.fsum(seg)

    @property
    def area(self) -> float:
        """Area enclosed by the loops (Green's formula over all segments)."""
        s = self.segments
        return 0.5 * self.h ** 2 * math.fsum(s[:, 0] * s[:, 3] - s[:, 2] * s[:, 1])

    def successor(self) -> np.ndarray:
        order = np.argsort(self.ids[:, 0], kind="stable")
        pos = np.searchsorted(self.ids[order, 0], self.ids[:, 1])
        nxt = order[np.minimum(pos, len(order) - 1)]
        if len(nxt) and not np.array_equal(self.ids[nxt, 0], self.ids[:, 1]):
            raise AssertionError("open contour: the frame clips the parallel set")
        return nxt

    def loop_areas(self) -> np.ndarray:
        if self._areas is None:
            if len(self.segments) == 0:
                self._areas = np.zeros(0)
            else:
                self._areas = K.loop_orientations(self.segments, self.successor()) * self.h ** 2
        return self._areas

    @property
    def n_positive(self) -> int:
        return int(np.count_nonzero(self.loop_areas() > 0))

    @property
    def n_negative(self) -> int:
        return int(np.count_nonzero(self.loop_areas() < 0))

    @property
    def euler(self) -> int:
        return self.n_positive - self.n_negative

    def loops(self) -> list:
        """Closed polylines (world coordinates) with orientation +1 / -1."""
        nxt = self.successor()
        seen = np.zeros(len(nxt), dtype=bool)
        out = []
        for s in range(len(nxt)):
            if seen[s]:
                continue
            idx = []
            cur = s
            while not seen[cur]:
                seen[cur] = True
                idx.append(cur)
                cur = nxt[cur]
            pts = self.segments[idx, :2] * self.h + np.asarray(self.origin)
            sa = 0.5 * float(np.sum(pts[:, 0] * np.roll(pts[:, 1], -1)
                                    - np.roll(pts[:, 0], -1) * pts[:, 1]))
            out.append((pts, 1 if sa > 0 else -1))
        return out

    def vertices(self) -> np.ndarray:
        return self.segments[:, :2] * self.h + np.asarray(self.origin)


def _gate(field: DistanceField, eps: float):
    if eps < GATE_PIXELS * field.h * (1 - 1e-12):
        raise ResolutionTooCoarse(f"eps = {eps} below {GATE_PIXELS} h = {GATE_PIXELS * field.h}")


def parallel_mask(field: DistanceField, eps: float) -> GridMask:
    _gate(field, eps)
    lev = eps / field.h
    return GridMask(field.origin, field.h, field.sq <= lev * lev)


def contours(field: DistanceField, eps: float) -> ContourSet:
    _gate(field, eps)
    xy, ids = K.march(field.sq, eps / field.h)
    return ContourSet(eps, field.h, field.origin, xy, ids)


class Curvatures2D(NamedTuple):
    """``C_0, C_1, C_2`` plus the pixel-complex Euler characteristic."""

    chi: int
    perimeter: float
    area: float
    chi_pixel: int


def curvatures_2d(field: DistanceField, eps: float) -> Curvatures2D:
    c = contours(field, eps)
    return Curvatures2D(c.euler, c.length, c.area, K.pixel_euler(field.sq, eps / field.h))


# ---------------------------------------------------------------------------
# curves on a grid pyramid
# ---------------------------------------------------------------------------


def level_of(eps: np.ndarray, h: float, min_pixels: float = MIN_PIXELS) -> np.ndarray:
    """Pyramid level ``j`` (pixel size ``h 2^j``) used for each radius."""
    eps = np.asarray(eps, dtype=float)
    j = np.floor(np.log2(eps / (min_pixels * h)) + 1e-12)
    return np.maximum(j, 0).astype(int)


@dataclass
class Pyramid:
    """Masks of one realization (whole cover and per first-generation child)."""

    tree: CodeTree
    model: RifsModel
    h: float
    min_pixels: float = MIN_PIXELS

    def __post_init__(self):
        self.points = _leaf_points(self.tree, self.model)
        leaves = self.tree.leaves()
        self.point_branch = self.tree.branch[leaves[~self.tree.dead[leaves]]]

    def field(self, j: int, eps_max: float, branch: Optional[int] = None) -> DistanceField:
        hj = self.h * 2 ** j
        origin, shape = frame(base_bounds(self.model), hj, eps_max)
        pts = self.points if branch is None else self.points[self.point_branch == branch]
        return edt(GridMask(origin, hj, rasterize(pts, origin, shape, hj)))


def sample_for_grid(model, seed, replicate, h, R=R_DEFAULT) -> CodeTree:
    return sample_tree(model, seed, replicate, Resolution(h / 2), R=R)


def curves_2d(model: RifsModel, seed: int, replicate: int, eps, ks=(0, 1, 2), h: float = None,
              R: float = R_DEFAULT, D: Optional[float] = None, min_pixels: float = MIN_PIXELS,
              tree: Optional[CodeTree] = None) -> dict:
    """Curvature curves of one realization in the plane, one per ``k``."""
    from .dimension import hausdorff_dimension
    from .limits import CurvatureCurve

    eps = np.asarray(eps, dtype=float)
    if h is None:
        raise ValueError("pixel size h is required for the raster engine")
    if D is None:
        D = hausdorff_dimension(model)
    if eps.min() < GATE_PIXELS * h * (1 - 1e-12):
        raise ResolutionTooCoarse(f"eps_min = {eps.min()} below {GATE_PIXELS} h")
    if tree is None:
        tree = sample_for_grid(model, seed, replicate, h, R)
    vals = np.zeros((len(eps), 4))
    if not tree.extinct_root and len(_leaf_points(tree, model)):
        pyr = Pyramid(tree, model, h, min_pixels)
        lev = level_of(eps, h, min_pixels)
        for j in np.unique(lev):
            sel = np.flatnonzero(lev == j)
            f = pyr.field(int(j), float(eps[sel].max()))
            for s in sel:
                vals[s] = curvatures_2d(f, float(eps[s]))
            del f
    meta = dict(diam_J=model.base.diam, chi_pixel=vals[:, 3].astype(int),
                chi_mismatch=int(np.count_nonzero(vals[:, 0] != vals[:, 3])),
                min_pixels=min_pixels, extinct=bool(tree.extinct_root))
    col = {0: 0, 1: 1, 2: 2}
    return {k: CurvatureCurve(k, eps, vals[:, col[k]], D, tree.stop.r, h=h, R=R,
                              replicate=replicate, seed=seed, meta=dict(meta))
            for k in ks}


# ---------------------------------------------------------------------------
# correction term in the plane
# ---------------------------------------------------------------------------


def first_separation_2d(tree: CodeTree, model: RifsModel) -> float:
    """Smallest distance between first-generation pieces ``J_i`` (exact polygons)."""
    from shapely.geometry import Polygon

    from .rifs import piece_polygons

    kids = tree.children(0)
    if len(kids) < 2:
        return math.inf
    polys = [Polygon(p) for p in piece_polygons(tree, model, kids)]
    return min(polys[a].distance(polys[b])
               for a in range(len(polys)) for b in range(a + 1, len(polys)))


def r_correction_values(pyr: Pyramid, ratios: np.ndarray, rho_R: float, r: np.ndarray, k: int,
                        active: Optional[np.ndarray] = None) -> np.ndarray:
    """``R_k`` at each radius; ``active[i, m]`` overrides the indicator per child."""
    r = np.asarray(r, dtype=float)
    if active is None:
        active = r[None, :] <= rho_R * ratios[:, None]
    out = np.zeros(len(r))
    lev = level_of(r, pyr.h, pyr.min_pixels)
    for j in np.unique(lev):
        sel = np.flatnonzero(lev == j)
        top = float(r[sel].max())
        f = pyr.field(int(j), top)
        for s in sel:
            out[s] = curvatures_2d(f, float(r[s]))[k]
        del f
        for i in range(len(ratios)):
            on = sel[active[i, sel]]
            if len(on) == 0 or not np.any(pyr.point_branch == i + 1):
                continue
            fi = pyr.field(int(j), top, branch=i + 1)
            for s in on:
                out[s] -= curvatures_2d(fi, float(r[s]))[k]
            del fi
    return out


def r_correction_2d(tree: CodeTree, model: RifsModel, r: float, k: int, h: float,
                    min_pixels: float = MIN_PIXELS) -> float:
    """``R_k(r)`` from the raster engine for a single radius."""
    if r < GATE_PIXELS * h:
        raise ResolutionTooCoarse(f"r = {r} below {GATE_PIXELS} h")
    if tree.extinct_root:
        return 0.0
    kids = tree.children(0)
    pyr = Pyramid(tree, model, h, min_pixels)
    return float(r_correction_values(pyr, tree.ratio[kids], rho(model, tree.R),
                                     np.array([r]), k)[0])


def log_nodes(a: float, b: float, per_decade: float, phase: float = 0.0) -> np.ndarray:
    """Nodes on ``[a, b]`` uniform in ``ln r`` plus both ends; ``phase`` in [0, 1)."""
    n = max(1, math.ceil(math.log10(b / a) * per_decade))
    step = math.log(b / a) / n
    inner = math.log(a) + step * (np.arange(n) + phase)
    inner = inner[(inner > math.log(a)) & (inner < math.log(b))]
    return np.concatenate([[a], np.exp(inner), [b]])


def correction_integral_2d(model: RifsModel, seed: int, replicate: int, k: int, D: float,
                           R: float = R_DEFAULT, h: Optional[float] = None,
                           points_per_decade: float = 48, min_pixels: float = MIN_PIXELS,
                           r_floor: Optional[float] = None):
    """``int_{r_min}^rho r^(D-k-1) R_k(r) dr`` by the trapezoid rule in ``ln r``.

    The integration range is split at the indicator jumps ``rho r_i``; each
    piece gets its own log-uniform nodes with one-sided evaluations at the
    jumps.  For ``k = 0`` the node phase is jittered per replicate.
    Returns ``(integral, r_min)``.
    """
    p = rho(model, R)
    probe = sample_tree(model, seed, replicate, Resolution(model.base.diam * 0.999), R=R)
    if probe.extinct_root:
        return 0.0, math.nan
    kids = probe.children(0)
    ratios = probe.ratio[kids]
    sep = first_separation_2d(probe, model)
    r_min = min(0.5 * sep, p * float(ratios.min()))
    if not r_min > 0:
        r_min = r_floor if r_floor is not None else model.base.diam / 16
    if h is None:
        h = r_min / min_pixels
    tree = sample_for_grid(model, seed, replicate, h, R)
    if tree.extinct_root:
        return 0.0, r_min
    pyr = Pyramid(tree, model, h, min_pixels)
    phase = 0.0
    if k == 0:
        phase = float(np.random.default_rng([seed, replicate, 0xC0]).uniform())
    jumps = np.unique(p * ratios)
    knots = np.unique(np.concatenate([[r_min], jumps[(jumps > r_min) & (jumps < p)], [p]]))
    total = []
    for a, b in zip(knots[:-1], knots[1:]):
        nodes = log_nodes(a, b, points_per_decade, phase)
        # right of a jump: indicators with rho r_i = a are already off
        act = nodes[None, :] <= p * ratios[:, None]
        act[:, 0] = a < p * ratios * (1 - 1e-12)
        vals = r_correction_values(pyr, ratios, p, nodes, k, active=act)
        total.append(np.trapezoid(nodes ** (D - k) * vals, np.log(nodes)))
    return math.fsum(total), r_min
