"""Small convex-polygon toolkit used by the open set condition check.

Polygons are ``(n, 2)`` float arrays in counter-clockwise order.
"""
from __future__ import annotations

import numpy as np


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    return abs(signed_area(poly))


def ccw(poly: np.ndarray) -> np.ndarray:
    poly = np.asarray(poly, dtype=float)
    return poly if signed_area(poly) >= 0 else poly[::-1].copy()


def is_convex(poly: np.ndarray, tol: float = 1e-12) -> bool:
    poly = ccw(poly)
    d1 = np.roll(poly, -1, axis=0) - poly
    d2 = np.roll(d1, -1, axis=0)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return bool(np.all(cross >= -tol)) and area(poly) > 0


def diameter(poly: np.ndarray) -> float:
    diff = poly[:, None, :] - poly[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def inside_margin(poly: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Signed distance of each point to the nearest supporting line of a convex
    polygon; positive inside, negative outside (exact for the inside part)."""
    poly = ccw(poly)
    a = poly
    e = np.roll(poly, -1, axis=0) - poly
    n = np.stack([-e[:, 1], e[:, 0]], axis=1)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    # inward normal for a ccw polygon is the left normal
    s = np.einsum("pkd,kd->pk", points[:, None, :] - a[None, :, :], n)
    return s.min(axis=1)


def clip(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman intersection of a polygon with a convex clipper."""
    out = [tuple(p) for p in ccw(subject)]
    cl = ccw(clipper)
    for k in range(len(cl)):
        if not out:
            break
        a, b = cl[k], cl[(k + 1) % len(cl)]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        inp, out = out, []
        prev = inp[-1]
        sp = side(prev)
        for cur in inp:
            sc = side(cur)
            if sc >= 0:
                if sp < 0:
                    out.append(_cut(prev, cur, sp, sc))
                out.append(cur)
            elif sp >= 0:
                out.append(_cut(prev, cur, sp, sc))
            prev, sp = cur, sc
    if len(out) < 3:
        return np.zeros((0, 2))
    return np.asarray(out, dtype=float)


def _cut(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def intersection_area(p: np.ndarray, q: np.ndarray) -> float:
    return area(clip(p, q))
