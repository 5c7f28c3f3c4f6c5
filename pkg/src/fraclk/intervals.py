"""Exact one-dimensional geometry of fractal covers and their parallel sets.

On the line a parallel set of a finite union of closed intervals is again such
a union, so everything here is exact endpoint arithmetic.  Curvature curves
are evaluated from the sorted gap list: for a set with total length ``L`` and
gaps ``g_j``,

    C_0(A(eps)) = 1 + #{g_j > 2 eps}
    C_1(A(eps)) = L + 2 eps + sum_j min(g_j, 2 eps)
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .rifs import CodeTree, Resolution, RifsModel, draw_atoms, child_keys, rho

ETA_DEFAULT = 1.0 / 64
LOOKAHEAD = 10


class ResolutionTooCoarse(ValueError):
    """The cover is too coarse for the requested radius."""


class EmptyRealization(UserWarning):
    """The realization went extinct; its cover is empty."""


class IntervalSet:
    """Finite union of disjoint closed intervals in canonical (sorted, merged) form."""

    __slots__ = ("intervals", "_gaps", "_cum")

    def __init__(self, intervals=None):
        iv = np.zeros((0, 2)) if intervals is None else np.asarray(intervals, dtype=float)
        iv = iv.reshape(-1, 2)
        if np.any(iv[:, 1] < iv[:, 0]):
            raise ValueError("interval with b < a")
        self.intervals = _canonical(iv)
        self._gaps = None
        self._cum = None

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls()

    def __len__(self):
        return len(self.intervals)

    def __eq__(self, other):
        return isinstance(other, IntervalSet) and np.array_equal(self.intervals, other.intervals)

    def __repr__(self):
        return f"IntervalSet({self.intervals.tolist()})"

    @property
    def is_empty(self) -> bool:
        return len(self.intervals) == 0

    @property
    def length(self) -> float:
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))

    @property
    def gaps(self) -> np.ndarray:
        if self._gaps is None:
            self._gaps = self.intervals[1:, 0] - self.intervals[:-1, 1]
        return self._gaps

    @property
    def hull(self) -> tuple:
        return float(self.intervals[0, 0]), float(self.intervals[-1, 1])

    @property
    def diam(self) -> float:
        if self.is_empty:
            return 0.0
        a, b = self.hull
        return b - a

    def translate(self, s: float) -> "IntervalSet":
        return IntervalSet(self.intervals + s)

    def scale(self, lam: float) -> "IntervalSet":
        return IntervalSet(self.intervals * lam)

    def curvatures_at(self, eps):
        """``(C_0, C_1)`` of the parallel sets for an array of radii."""
        eps = np.asarray(eps, dtype=float)
        if self.is_empty:
            return np.zeros(eps.shape, dtype=np.int64), np.zeros(eps.shape)
        if self._cum is None:
            g = np.sort(self.gaps)
            self._cum = (g, np.concatenate([[0.0], np.cumsum(g)]))
        g, cum = self._cum
        two = 2.0 * eps
        # gaps g <= 2 eps are bridged (touching intervals merge)
        k = np.searchsorted(g, two, side="right")
        n_big = len(g) - k
        c1 = self.length + cum[k] + two * n_big + two
        return 1 + n_big, c1


def _canonical(iv: np.ndarray) -> np.ndarray:
    if len(iv) == 0:
        return np.zeros((0, 2))
    iv = iv[np.lexsort((iv[:, 1], iv[:, 0]))]
    start = iv[:, 0]
    end = np.maximum.accumulate(iv[:, 1])
    # a new component begins where the start exceeds every earlier end
    new = np.empty(len(iv), dtype=bool)
    new[0] = True
    new[1:] = start[1:] > end[:-1]
    idx = np.flatnonzero(new)
    last = np.append(idx[1:] - 1, len(iv) - 1)
    return np.stack([start[idx], end[last]], axis=1)


def parallel_1d(s: IntervalSet, eps: float) -> IntervalSet:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if s.is_empty:
        return IntervalSet.empty()
    return IntervalSet(s.intervals + np.array([-eps, eps]))


def curvatures_1d(s: IntervalSet):
    """``(C_0, C_1)``: number of components and total length."""
    return len(s), s.length


# ---------------------------------------------------------------------------
# covers
# ---------------------------------------------------------------------------


@dataclass
class LeafCover:
    """Per-leaf intervals of a realization with their first-generation branch."""

    intervals: np.ndarray
    branch: np.ndarray
    resolution: float
    tight: bool
    dropped: int = 0

    def union(self, branch: int = None) -> IntervalSet:
        iv = self.intervals if branch is None else self.intervals[self.branch == branch]
        return IntervalSet(iv)


def _extreme_children(model: RifsModel):
    """Per atom, local index of the leftmost and rightmost child image."""
    lo, hi = model.base.geometry
    left, right = [], []
    for atom in model.atoms:
        if not atom.maps:
            left.append(-1)
            right.append(-1)
            continue
        mins = [min(m.linear.real * lo, m.linear.real * hi) + m.shift.real for m in atom.maps]
        left.append(int(np.argmin(mins)))
        right.append(int(np.argmax(mins)))
    return np.array(left), np.array(right)


def extreme_points(tree: CodeTree, model: RifsModel, nodes: np.ndarray, side: str) -> np.ndarray:
    """Leftmost (``side='min'``) or rightmost point of ``F_sigma`` for each node.

    Follows the extreme descendant line with the counter-based stream until
    the piece is below double precision.  Requires a model without extinction.
    """
    if model.has_extinction:
        raise ValueError("extreme points need a model without extinction atoms")
    t = model.tables
    lo, hi = model.base.geometry
    left, right = _extreme_children(model)
    A = tree.lin[nodes].real.copy()
    B = tree.shift[nodes].real.copy()
    key = tree.key[nodes].copy()
    scale = max(abs(lo), abs(hi), model.base.diam)
    floor = 2.0 ** -58 * scale
    act = np.flatnonzero(np.abs(A) * model.base.diam > floor)
    while len(act):
        atom = draw_atoms(model, key[act])
        a_pos = A[act] > 0
        if side == "min":
            loc = np.where(a_pos, left[atom], right[atom])
        else:
            loc = np.where(a_pos, right[atom], left[atom])
        mi = t.offset[atom] + loc
        B[act] = A[act] * t.b[mi].real + B[act]
        A[act] = A[act] * t.a[mi].real
        key[act] = child_keys(key[act], (loc + 1).astype(np.int64))
        act = act[np.abs(A[act]) * model.base.diam > floor]
    e0, e1 = A * lo + B, A * hi + B
    return np.minimum(e0, e1) if side == "min" else np.maximum(e0, e1)


def survives(tree: CodeTree, model: RifsModel, nodes: np.ndarray, horizon: int = LOOKAHEAD,
             cap: int = 32) -> np.ndarray:
    """Whether each node's line is still alive ``horizon`` generations below it.

    At most ``cap`` descendants per node are followed, so a surviving verdict
    is exact while a dying one is exact unless the cap was hit.
    """
    t = model.tables
    owner = np.arange(len(nodes))
    key = tree.key[nodes].copy()
    for _ in range(horizon):
        if len(key) == 0:
            break
        atom = draw_atoms(model, key)
        nch = t.size[atom]
        par = np.repeat(np.arange(len(key)), nch)
        first = np.repeat(np.cumsum(nch) - nch, nch)
        dig = np.arange(len(par)) - first + 1
        owner, key = owner[par], child_keys(key[par], dig)
        # keep the first `cap` descendants of each owner (stable order)
        if len(owner):
            order = np.argsort(owner, kind="stable")
            owner, key = owner[order], key[order]
            start = np.searchsorted(owner, owner, side="left")
            keep = (np.arange(len(owner)) - start) < cap
            owner, key = owner[keep], key[keep]
    alive = np.zeros(len(nodes), dtype=bool)
    alive[owner] = True
    return alive


def leaf_cover_1d(tree: CodeTree, model: RifsModel, tight: bool = True) -> LeafCover:
    """Leaf intervals of a Resolution-stopped tree.

    With ``tight`` (models without extinction) each leaf contributes the hull
    of ``F_sigma`` instead of the whole piece ``J_sigma``; gaps inside a leaf
    are then shorter than the resolution, which makes the parallel set of the
    cover equal to that of the fractal for every radius above half the
    resolution.
    """
    if model.dimension != 1:
        raise ValueError("interval engine needs a one-dimensional model")
    if not isinstance(tree.stop, Resolution):
        raise ValueError("cover needs a tree stopped by Resolution(l)")
    leaves = tree.leaves()
    dropped = 0
    if model.has_extinction:
        tight = False
        keep = survives(tree, model, leaves)
        dropped = int(np.count_nonzero(~keep))
        leaves = leaves[keep]
    if tree.extinct_root or len(leaves) == 0:
        warnings.warn("realization is extinct; cover is empty", EmptyRealization)
        return LeafCover(np.zeros((0, 2)), np.zeros(0, dtype=np.int32), tree.stop.r, tight, dropped)
    if tight:
        iv = np.stack([extreme_points(tree, model, leaves, "min"),
                       extreme_points(tree, model, leaves, "max")], axis=1)
    else:
        lo, hi = model.base.geometry
        A, B = tree.lin[leaves].real, tree.shift[leaves].real
        iv = np.sort(np.stack([A * lo + B, A * hi + B], axis=1), axis=1)
    return LeafCover(iv, tree.branch[leaves], tree.stop.r, tight, dropped)


def render_cover_1d(tree: CodeTree, model: RifsModel, tight: bool = True) -> IntervalSet:
    return leaf_cover_1d(tree, model, tight).union()


# ---------------------------------------------------------------------------
# correction term R_k
# ---------------------------------------------------------------------------


def first_ratios(tree: CodeTree) -> np.ndarray:
    kids = tree.children(0)
    return tree.ratio[kids]


def r_correction_curve(cover: LeafCover, ratios_1: np.ndarray, rho_R: float, r, k: int):
    """``R_k(r)`` for an array of radii from one cover.

    ``R_k(r) = C_k(F(r)) - sum_i 1{r <= rho r_i} C_k(F_i(r))`` with ``F_i`` the
    part of the cover below first-generation child ``i``.
    """
    r = np.asarray(r, dtype=float)
    whole = cover.union().curvatures_at(r)[k].astype(float)
    out = whole.copy()
    for i, ri in enumerate(ratios_1, start=1):
        part = cover.union(i).curvatures_at(r)[k].astype(float)
        out -= np.where(r <= rho_R * ri, part, 0.0)
    return out


def r_correction_1d(tree: CodeTree, model: RifsModel, r: float, k: int,
                    eta: float = ETA_DEFAULT, tight: bool = True) -> float:
    if k not in (0, 1):
        raise ValueError("k must be 0 or 1 on the line")
    if tree.stop.r > eta * r * (1 + 1e-12):
        raise ResolutionTooCoarse(f"cover resolution {tree.stop.r} exceeds eta * r = {eta * r}")
    if tree.extinct_root:
        return 0.0
    cover = leaf_cover_1d(tree, model, tight)
    return float(r_correction_curve(cover, first_ratios(tree), rho(model, tree.R), [r], k)[0])


def breakpoints(cover: LeafCover, ratios_1: np.ndarray, rho_R: float) -> np.ndarray:
    """Radii where ``R_k`` has kinks or jumps: half gaps and indicator switches."""
    pts = [0.5 * cover.union().gaps, rho_R * np.asarray(ratios_1)]
    for i in range(1, len(ratios_1) + 1):
        pts.append(0.5 * cover.union(i).gaps)
    return np.unique(np.concatenate(pts))
