"""Numba kernels for the raster engine.

All parallel loops write to disjoint rows or columns and reductions are done
per row followed by a sequential sum, so results do not depend on the thread
count.
"""
import warnings

import numpy as np
from numba import njit, prange

warnings.filterwarnings("ignore", message="The TBB threading layer")

INF = np.int64(1) << np.int64(60)

# ---------------------------------------------------------------------------
# exact squared Euclidean distance transform with feature transform
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def _column_pass(mask, g, fr):
    H, W = mask.shape
    for j in prange(W):
        last = -1
        for i in range(H):
            if mask[i, j]:
                last = i
            fr[i, j] = last
        nxt = -1
        for i in range(H - 1, -1, -1):
            if mask[i, j]:
                nxt = i
            a = fr[i, j]
            if a < 0 or (nxt >= 0 and nxt - i < i - a):
                a = nxt
            fr[i, j] = a
            if a < 0:
                g[i, j] = INF
            else:
                g[i, j] = (i - a) * (i - a)


@njit(cache=True, parallel=True)
def _row_pass(g, fr, sq, feat, want_feat):
    H, W = g.shape
    for i in prange(H):
        v = np.empty(W, dtype=np.int64)
        z = np.empty(W + 1, dtype=np.float64)
        k = -1
        for q in range(W):
            fq = g[i, q]
            if fq >= INF:
                continue
            while k >= 0:
                p = v[k]
                s = ((fq + q * q) - (g[i, p] + p * p)) / (2.0 * (q - p))
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            if k == 0:
                z[k] = -np.inf
            else:
                p = v[k - 1]
                z[k] = ((fq + q * q) - (g[i, p] + p * p)) / (2.0 * (q - p))
            z[k + 1] = np.inf
        if k < 0:
            for x in range(W):
                sq[i, x] = INF
                if want_feat:
                    feat[i, x] = -1
            continue
        m = 0
        for x in range(W):
            while z[m + 1] < x:
                m += 1
            p = v[m]
            sq[i, x] = (x - p) * (x - p) + g[i, p]
            if want_feat:
                feat[i, x] = fr[i, p] * W + p


def edt_squared(mask: np.ndarray, features: bool = False):
    """Exact squared distances (pixel units) to the nearest set pixel.

    Two separable passes: nearest set row per column, then the lower envelope
    of parabolas along each row.  With ``features`` also returns the flat
    index of a nearest set pixel.
    """
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    H, W = mask.shape
    g = np.empty((H, W), dtype=np.int64)
    fr = np.empty((H, W), dtype=np.int64)
    _column_pass(mask, g, fr)
    sq = np.empty((H, W), dtype=np.int64)
    feat = np.empty((H, W) if features else (1, 1), dtype=np.int64)
    _row_pass(g, fr, sq, feat, features)
    del g, fr
    return (sq, feat) if features else (sq, None)


# ---------------------------------------------------------------------------
# marching squares on the dual grid
# ---------------------------------------------------------------------------

# corners c0=(i,j) c1=(i,j+1) c2=(i+1,j+1) c3=(i+1,j); x = j, y = i
# edges e0=c0c1, e1=c1c2, e2=c3c2, e3=c0c3
_CORNER_XY = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.float64)
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))


def _build_table():
    """Oriented segments per case; foreground (value <= level) on the left.

    Diagonal cases join the two foreground corners, matching 8-connectivity
    of the foreground.
    """
    table = np.full((16, 2, 2), -1, dtype=np.int64)
    for case in range(16):
        inside = [(case >> c) & 1 for c in range(4)]
        cut = [e for e, (a, b) in enumerate(_EDGE_CORNERS) if inside[a] != inside[b]]
        if not cut:
            continue
        if len(cut) == 2:
            pairs = [tuple(cut)]
        else:
            outside = [c for c in range(4) if not inside[c]]
            pairs = [tuple(e for e, ab in enumerate(_EDGE_CORNERS) if c in ab) for c in outside]
        ref = _CORNER_XY[[c for c in range(4) if inside[c]]].mean(axis=0)
        for s, (ea, eb) in enumerate(pairs):
            pa = _CORNER_XY[list(_EDGE_CORNERS[ea])].mean(axis=0)
            pb = _CORNER_XY[list(_EDGE_CORNERS[eb])].mean(axis=0)
            d, w = pb - pa, ref - pa
            if d[0] * w[1] - d[1] * w[0] < 0:
                ea, eb = eb, ea
            table[case, s] = (ea, eb)
    return table


MS_TABLE = _build_table()


@njit(cache=True)
def _val(a, i, j):
    return np.sqrt(np.float64(a[i, j]))


@njit(cache=True)
def _edge_point(a, i, j, e, level):
    # returns (x, y, id) of the crossing on edge e of cell (i, j)
    i = np.int64(i)
    j = np.int64(j)
    W = np.int64(a.shape[1])
    if e == 0:
        i0, j0, i1, j1 = i, j, i, j + 1
        eid = 2 * (i * W + j)
    elif e == 1:
        i0, j0, i1, j1 = i, j + 1, i + 1, j + 1
        eid = 2 * (i * W + j + 1) + 1
    elif e == 2:
        i0, j0, i1, j1 = i + 1, j, i + 1, j + 1
        eid = 2 * ((i + 1) * W + j)
    else:
        i0, j0, i1, j1 = i, j, i + 1, j
        eid = 2 * (i * W + j) + 1
    v0 = _val(a, i0, j0)
    v1 = _val(a, i1, j1)
    t = (level - v0) / (v1 - v0)
    return j0 + t * (j1 - j0), i0 + t * (i1 - i0), eid


@njit(cache=True)
def _case(a, i, j, lev2):
    c = 0
    if a[i, j] <= lev2:
        c |= 1
    if a[i, j + 1] <= lev2:
        c |= 2
    if a[i + 1, j + 1] <= lev2:
        c |= 4
    if a[i + 1, j] <= lev2:
        c |= 8
    return c


@njit(cache=True, parallel=True)
def _count_segments(a, lev2, table):
    H, W = a.shape
    counts = np.zeros(H - 1, dtype=np.int64)
    for i in prange(H - 1):
        n = 0
        for j in range(W - 1):
            c = _case(a, i, j, lev2)
            if c != 0 and c != 15:
                n += 1 if table[c, 1, 0] < 0 else 2
        counts[i] = n
    return counts


@njit(cache=True, parallel=True)
def _fill_segments(a, level, lev2, table, start, xy, ids):
    H, W = a.shape
    for i in prange(H - 1):
        n = start[i]
        for j in range(W - 1):
            c = _case(a, i, j, lev2)
            if c == 0 or c == 15:
                continue
            for s in range(2):
                ea = table[c, s, 0]
                if ea < 0:
                    break
                eb = table[c, s, 1]
                x0, y0, id0 = _edge_point(a, i, j, ea, level)
                x1, y1, id1 = _edge_point(a, i, j, eb, level)
                xy[n, 0] = x0
                xy[n, 1] = y0
                xy[n, 2] = x1
                xy[n, 3] = y1
                ids[n, 0] = id0
                ids[n, 1] = id1
                n += 1


def march(sq: np.ndarray, level: float):
    """Oriented iso-segments of ``sqrt(sq)`` at ``level`` (pixel units).

    Returns ``(xy, ids)``: segment endpoints ``(x0, y0, x1, y1)`` and the
    ids of the grid edges they start and end on.
    """
    lev2 = level * level
    counts = _count_segments(sq, lev2, MS_TABLE)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    n = int(counts.sum())
    xy = np.empty((n, 4))
    ids = np.empty((n, 2), dtype=np.int64)
    _fill_segments(sq, float(level), lev2, MS_TABLE, start, xy, ids)
    return xy, ids


@njit(cache=True)
def loop_orientations(xy, nxt):
    """Signed area of every cycle of the successor permutation ``nxt``."""
    n = len(nxt)
    seen = np.zeros(n, dtype=np.bool_)
    out = []
    for s in range(n):
        if seen[s]:
            continue
        acc = 0.0
        cur = s
        while not seen[cur]:
            seen[cur] = True
            acc += xy[cur, 0] * xy[cur, 3] - xy[cur, 2] * xy[cur, 1]
            cur = nxt[cur]
        out.append(0.5 * acc)
    return np.array(out)


@njit(cache=True, parallel=True)
def _pixel_complex_rows(a, lev2):
    # closed pixels; vertices and edges of the union of foreground squares
    H, W = a.shape
    res = np.zeros((H + 1, 3), dtype=np.int64)
    for i in prange(H + 1):
        v = 0
        eh = 0
        ev = 0
        f = 0
        for j in range(W + 1):
            a00 = i > 0 and j > 0 and a[i - 1, j - 1] <= lev2
            a01 = i > 0 and j < W and a[i - 1, j] <= lev2
            a10 = i < H and j > 0 and a[i, j - 1] <= lev2
            a11 = i < H and j < W and a[i, j] <= lev2
            if a00 or a01 or a10 or a11:
                v += 1
            if j < W and (a01 or a11):
                eh += 1
            if i < H and (a10 or a11):
                ev += 1
            if a11:
                f += 1
        res[i, 0] = v
        res[i, 1] = eh + ev
        res[i, 2] = f
    return res


def pixel_euler(sq: np.ndarray, level: float) -> int:
    r = _pixel_complex_rows(sq, level * level)
    return int(r[:, 0].sum() - r[:, 1].sum() + r[:, 2].sum())
