"""Curvature curves, their rescaled and averaged limits, and the integral constant.

The left side of the limit theorems is read off curvature curves
``eps -> C_k(F(eps))`` sampled on geometric grids.  The right side is
``(1/lambda(D)) int_0^rho r^(D-k-1) E R_k(r) dr`` estimated by Monte Carlo
over replicates.  On the line ``R_k`` is piecewise affine in ``r`` with known
breakpoints, so each replicate's integral is evaluated in closed form piece
by piece.  In the plane the integral is a trapezoid rule in ``ln r``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import intervals as iv
from .dimension import Lattice, NonLattice, hausdorff_dimension, lambda_of_D, martingale_values
from .rifs import R_DEFAULT, Resolution, RifsModel, rho, sample_tree

POINTS_PER_T = 64
MIN_POINTS_PER_T = 16
R_POINTS_PER_DECADE = 48
BURN_IN_TOP = 1e-3
SCALING_CAVEAT = ("D - k vanishes: the rescaling exponent is not fractal, "
                  "check the correctness of the choice of the rescaling exponent")


class GridTooCoarse(ValueError):
    """Fewer than the minimum number of grid points per unit of t."""


class NonFractalScaling(ValueError):
    """``|D - k| < 1e-6``; the integral constant diverges at 0."""


class ClassificationMismatch(ValueError):
    """Lattice-only analysis requested for a non-lattice model."""


# ---------------------------------------------------------------------------
# grids and curves
# ---------------------------------------------------------------------------


def epsilon_grid(eps_max: float, eps_min: float, points_per_t: float = POINTS_PER_T) -> np.ndarray:
    """Geometric grid from ``eps_max`` down to ``eps_min`` inclusive.

    The ratio is shrunk from ``exp(-1/points_per_t)`` just enough that both
    ends are grid points.
    """
    if not 0 < eps_min <= eps_max:
        raise ValueError("need 0 < eps_min <= eps_max")
    span = math.log(eps_max / eps_min)
    n = max(1, math.ceil(span * points_per_t - 1e-9))
    eps = eps_max * np.exp(-span * np.arange(n + 1) / n)
    eps[-1] = eps_min
    return eps


def q_to_points_per_t(q: float) -> float:
    if not 0 < q < 1:
        raise ValueError("grid ratio q must lie in (0, 1)")
    return 1.0 / math.log(1.0 / q)


@dataclass
class CurvatureCurve:
    """``C_k(F(eps))`` on a strictly decreasing geometric grid of radii."""

    k: int
    epsilons: np.ndarray
    values: np.ndarray
    D: float
    resolution: float
    eta: Optional[float] = None
    h: Optional[float] = None
    R: float = R_DEFAULT
    replicate: int = 0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.epsilons = np.asarray(self.epsilons, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.epsilons.shape != self.values.shape:
            raise ValueError("epsilons and values differ in shape")
        if np.any(np.diff(self.epsilons) >= 0):
            raise ValueError("epsilon grid must be strictly decreasing")

    @property
    def t(self) -> np.ndarray:
        """Renewal time ``t = ln(rho / eps)``."""
        return np.log(rho_value(self) / self.epsilons)

    @property
    def rescaled(self) -> np.ndarray:
        return self.epsilons ** (self.D - self.k) * self.values

    def renewal_process(self) -> np.ndarray:
        """``Z_t = rho^-k e^(kt) C_k(F(rho e^-t))`` along the curve."""
        return rho_value(self) ** (-self.k) * np.exp(self.k * self.t) * self.values


def rho_value(curve: CurvatureCurve) -> float:
    return curve.R * curve.meta.get("diam_J", 1.0)


def scaling_curve(curve: CurvatureCurve):
    """Pairs ``(eps, eps^(D-k) C_k)``."""
    return np.stack([curve.epsilons, curve.rescaled], axis=1)


def substitution_check(curve: CurvatureCurve, tol: float = 1e-12) -> float:
    """Worst relative gap between the rescaled curve and its renewal form.

    ``eps^(D-k) C_k`` must equal ``rho^D e^(-Dt) Z_t``; this is pure
    bookkeeping and guards the time change used downstream.
    """
    a = curve.rescaled
    b = rho_value(curve) ** curve.D * np.exp(-curve.D * curve.t) * curve.renewal_process()
    scale = np.maximum(np.abs(a), 1e-300)
    err = float(np.max(np.abs(a - b) / scale)) if len(a) else 0.0
    if err > tol:
        raise AssertionError(f"substitution identity off by {err:.3e}")
    return err


def curves_1d(model: RifsModel, seed: int, replicate: int, eps: np.ndarray, ks=(0, 1),
              eta: float = iv.ETA_DEFAULT, R: float = R_DEFAULT, D: Optional[float] = None,
              tree=None) -> dict:
    """Curvature curves of one realization on the line, one per ``k``."""
    eps = np.asarray(eps, dtype=float)
    if D is None:
        D = hausdorff_dimension(model)
    ell = eta * float(eps.min())
    if tree is None:
        tree = sample_tree(model, seed, replicate, Resolution(ell), R=R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", iv.EmptyRealization)
        cover = iv.leaf_cover_1d(tree, model)
    c = cover.union().curvatures_at(eps)
    meta = dict(diam_J=model.base.diam, tight=cover.tight, dropped=cover.dropped,
                extinct=bool(tree.extinct_root))
    return {k: CurvatureCurve(k, eps, c[k].astype(float), D, ell, eta=eta, R=R,
                              replicate=replicate, seed=seed, meta=dict(meta))
            for k in ks}


def curvature_curves(model: RifsModel, seed: int, replicate: int, eps: np.ndarray, ks,
                     eta: float = iv.ETA_DEFAULT, h: Optional[float] = None,
                     R: float = R_DEFAULT, D: Optional[float] = None, **kw) -> dict:
    if model.dimension == 1:
        return curves_1d(model, seed, replicate, eps, ks, eta=eta, R=R, D=D)
    from .grid import curves_2d
    return curves_2d(model, seed, replicate, eps, ks, h=h, R=R, D=D, **kw)


# ---------------------------------------------------------------------------
# left side
# ---------------------------------------------------------------------------


def average_limit(curve: CurvatureCurve, delta: float, top: float = 1.0) -> float:
    """``(1/|ln delta|) int_delta^top eps^(D-k) C_k(F(eps)) deps/eps``.

    Trapezoid rule in ``t = ln(1/eps)``; both ``delta`` and ``top`` must be
    grid points.
    """
    if not 0 < delta < top:
        raise ValueError("need 0 < delta < top")
    eps = curve.epsilons
    i0 = _grid_index(eps, top)
    i1 = _grid_index(eps, delta)
    t = -np.log(eps[i0:i1 + 1])
    per_t = (len(t) - 1) / (t[-1] - t[0])
    if per_t < MIN_POINTS_PER_T * (1 - 1e-9):
        raise GridTooCoarse(f"{per_t:.1f} points per unit of t, need {MIN_POINTS_PER_T}")
    y = curve.rescaled[i0:i1 + 1]
    return float(np.trapezoid(y, t) / math.log(top / delta))


def _grid_index(eps: np.ndarray, x: float, rtol: float = 1e-9) -> int:
    j = int(np.argmin(np.abs(np.log(eps / x))))
    if abs(eps[j] / x - 1) > rtol:
        raise ValueError(f"{x} is not a point of the curve's grid [{eps[-1]}, {eps[0]}]")
    return j


def lattice_points(c: float, s_grid: Sequence[float], n_max: int) -> np.ndarray:
    """Radii ``e^-(s + n c)`` for every ``s`` and ``n = 0..n_max``, sorted decreasing."""
    pts = np.array([math.exp(-(s + n * c)) for s in s_grid for n in range(n_max + 1)])
    return np.sort(pts)[::-1]


@dataclass
class LatticeSequence:
    s: float
    n: np.ndarray
    values: np.ndarray
    settled: bool

    @property
    def limit(self) -> float:
        return float(self.values[-1])


def lattice_sequences(curve: CurvatureCurve, lattice, s_grid: Sequence[float],
                      rtol: float = 1e-3) -> list:
    """``e^((k-D)(s+nc)) C_k(F(e^-(s+nc)))`` over ``n`` for each phase ``s``."""
    if isinstance(lattice, NonLattice):
        raise ClassificationMismatch("lattice sequences need a lattice model")
    c = lattice.c if isinstance(lattice, Lattice) else float(lattice)
    out = []
    logeps = np.log(curve.epsilons)
    for s in s_grid:
        n = np.round((-logeps - s) / c)
        on = (n >= 0) & (np.abs(-logeps - s - n * c) <= 1e-9 * np.maximum(1.0, -logeps))
        if not np.any(on):
            raise ValueError(f"curve has no points of phase s={s}")
        idx = np.flatnonzero(on)
        order = np.argsort(n[idx])
        idx = idx[order]
        vals = np.exp((curve.k - curve.D) * (s + n[idx] * c)) * curve.values[idx]
        settled = len(vals) >= 2 and abs(vals[-1] - vals[-2]) < rtol * abs(vals[-1])
        out.append(LatticeSequence(float(s), n[idx].astype(int), vals, bool(settled)))
    return out


# ---------------------------------------------------------------------------
# right side
# ---------------------------------------------------------------------------


@dataclass
class RhsEstimate:
    """Monte-Carlo estimate of the integral constant for one ``k``."""

    k: int
    value: float
    stderr: float
    per_replicate: np.ndarray
    lambda_D: float
    D: float
    R: float
    r_min: np.ndarray
    tail: float
    method: str
    settled: bool = True


def _power_integral(alpha: float, u: float, v: float) -> float:
    """``int_u^v r^alpha dr``."""
    if abs(alpha + 1) < 1e-14:
        return math.log(v / u)
    return (v ** (alpha + 1) - u ** (alpha + 1)) / (alpha + 1)


def first_separation_1d(tree, model) -> float:
    """Smallest gap between the first-generation pieces ``J_i`` (0 if any touch)."""
    kids = tree.children(0)
    if len(kids) < 2:
        return math.inf
    b = _pieces(tree, model, kids)
    gaps = b[1:, 0] - b[:-1, 1]
    return float(max(gaps.min(), 0.0))


def _pieces(tree, model, nodes):
    lo, hi = model.base.geometry
    A, B = tree.lin[nodes].real, tree.shift[nodes].real
    p = np.sort(np.stack([A * lo + B, A * hi + B], axis=1), axis=1)
    return p[np.argsort(p[:, 0])]


def correction_integral_1d(model: RifsModel, seed: int, replicate: int, k: int, D: float,
                           R: float = R_DEFAULT, eta: float = iv.ETA_DEFAULT,
                           r_floor: float = 1e-6):
    """Exact ``int_0^rho r^(D-k-1) R_k(r) dr`` for one realization.

    Returns ``(integral, r_min)``.  Below ``r_min`` the correction vanishes
    by locality, so nothing is truncated unless the first-generation pieces
    touch, in which case ``r_min = r_floor``.
    """
    p = rho(model, R)
    probe = sample_tree(model, seed, replicate, Resolution(model.base.diam * 0.999), R=R)
    if probe.extinct_root:
        return 0.0, math.nan
    kids = probe.children(0)
    ratios = probe.ratio[kids]
    sep = first_separation_1d(probe, model)
    r_min = min(0.5 * sep, p * float(ratios.min()))
    if not r_min > 0:
        r_min = r_floor
    tree = sample_tree(model, seed, replicate, Resolution(eta * r_min), R=R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", iv.EmptyRealization)
        cover = iv.leaf_cover_1d(tree, model)
    bp = iv.breakpoints(cover, ratios, p)
    bp = bp[(bp > r_min) & (bp < p)]
    knots = np.concatenate([[r_min], bp, [p]])
    u, v = knots[:-1], knots[1:]
    keep = (v - u) > 1e-13 * v
    u, v = u[keep], v[keep]
    # R_k is affine on each piece (right-continuous at indicator jumps), so
    # two interior samples fix it
    r1, r2 = u + (v - u) / 3, u + 2 * (v - u) / 3
    f1 = iv.r_correction_curve(cover, ratios, p, r1, k)
    f2 = iv.r_correction_curve(cover, ratios, p, r2, k)
    slope = (f2 - f1) / (r2 - r1)
    icpt = f1 - slope * r1
    alpha = D - k - 1
    total = math.fsum(icpt[j] * _power_integral(alpha, u[j], v[j])
                      + slope[j] * _power_integral(alpha + 1, u[j], v[j]) for j in range(len(u)))
    return total, r_min


def rhs_constant(model: RifsModel, k: int, replicates: int = 1, seed: int = 0,
                 R: float = R_DEFAULT, eta: float = iv.ETA_DEFAULT, workers: int = 1,
                 h: Optional[float] = None, r_floor: float = 1e-6, **kw) -> RhsEstimate:
    """``(1/lambda(D)) int_0^rho r^(D-k-1) E R_k(r) dr`` with its standard error."""
    D = hausdorff_dimension(model)
    if abs(D - k) < 1e-6:
        raise NonFractalScaling(SCALING_CAVEAT)
    lam = lambda_of_D(model, D)
    if model.is_deterministic:
        replicates = 1
    if model.dimension == 1:
        if k not in (0, 1):
            raise ValueError("k must be 0 or 1 on the line")
        jobs = (delayed(correction_integral_1d)(model, seed, rep, k, D, R, eta, r_floor)
                for rep in range(replicates))
        method = "exact piecewise integration between breakpoints"
    else:
        from .grid import correction_integral_2d
        jobs = (delayed(correction_integral_2d)(model, seed, rep, k, D, R=R, h=h, **kw)
                for rep in range(replicates))
        method = f"trapezoid in ln r, {kw.get('points_per_decade', R_POINTS_PER_DECADE)} per decade"
    res = Parallel(n_jobs=workers)(jobs)
    vals = np.array([a for a, _ in res]) / lam
    r_min = np.array([b for _, b in res])
    mean = math.fsum(vals) / len(vals)
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    tail = 0.0
    truncated = np.isclose(r_min, r_floor)
    if np.any(truncated):
        # crude bound: |R_k| of order the curvature of F(r) near r_floor
        tail = r_floor ** (D - k) / abs(D - k) if D > k else math.inf
    return RhsEstimate(k, mean, se, vals, lam, D, R, r_min, tail, method,
                       settled=not np.any(truncated))


# ---------------------------------------------------------------------------
# martingale regression
# ---------------------------------------------------------------------------


@dataclass
class Regression:
    slope: float
    intercept: float
    slope_ci: tuple
    intercept_ci: tuple
    n: int

    @classmethod
    def fit(cls, x, y, level: float = 0.95) -> "Regression":
        r = stats.linregress(x, y)
        q = stats.t.ppf(0.5 + level / 2, len(x) - 2)
        return cls(float(r.slope), float(r.intercept),
                   (r.slope - q * r.stderr, r.slope + q * r.stderr),
                   (r.intercept - q * r.intercept_stderr, r.intercept + q * r.intercept_stderr),
                   len(x))


@dataclass
class RegressionReport:
    fit: Optional[Regression]
    control: Optional[Regression]
    x: np.ndarray
    y: np.ndarray
    excluded: int
    depth: int
    delta: float
    direct_mean: Optional[float] = None


def burn_in_top(eps: np.ndarray, top: float) -> float:
    """Grid point nearest ``top`` in log scale."""
    return float(eps[np.argmin(np.abs(np.log(eps) - math.log(top)))])


def _replicate_xy(model, seed, rep, k, delta, depth, eta, R, D, points_per_t, top=1.0):
    eps = epsilon_grid(1.0, delta, points_per_t)
    tree = sample_tree(model, seed, rep, Resolution(eta * delta), R=R)
    curve = curves_1d(model, seed, rep, eps, (k,), eta=eta, R=R, D=D, tree=tree)[k]
    y = average_limit(curve, delta, top=burn_in_top(eps, top))
    d = depth if depth is not None else _complete_depth(tree)
    mt = martingale_values(tree, D, d)
    return mt.estimate, y, mt.settled, d


def _complete_depth(tree) -> int:
    leafy = np.flatnonzero(np.bincount(tree.depth[tree.leaf & ~tree.dead]))
    return int(leafy[0]) if len(leafy) else tree.max_depth


def m_infinity_regression(model: RifsModel, k: int, replicates: int, seed: int, delta: float,
                          depth: Optional[int] = None, eta: float = 0.5, R: float = R_DEFAULT,
                          points_per_t: float = POINTS_PER_T, workers: int = 1,
                          min_replicates: int = 100,
                          top: float = BURN_IN_TOP) -> RegressionReport:
    """Regress the per-realization average limit on the martingale estimate.

    The almost-sure limit is ``M_inf`` times the integral constant, so the
    slope estimates that constant and the intercept should vanish.  A
    shuffled pairing serves as negative control.

    The average runs over ``[delta, top]``.  Large radii see only the first
    few generations, whose fluctuations are weakly tied to ``M_inf``; with
    ``top = 1`` they bias the slope by ``O(1 / |ln delta|)``, so by default
    the window starts at ``top = 1e-3`` (snapped to the grid).
    """
    if model.dimension != 1:
        raise ValueError("regression is implemented for the interval engine")
    D = hausdorff_dimension(model)
    if model.is_deterministic:
        x, y, ok, d = _replicate_xy(model, seed, 0, k, delta, depth, eta, R, D, points_per_t,
                                    top)
        return RegressionReport(None, None, np.array([x]), np.array([y]), 0, d, delta,
                                direct_mean=y)
    if model.has_extinction:
        raise ValueError("regression needs a model without extinction atoms")
    if replicates < min_replicates:
        raise ValueError(f"need at least {min_replicates} replicates, got {replicates}")
    res = Parallel(n_jobs=workers)(
        delayed(_replicate_xy)(model, seed, rep, k, delta, depth, eta, R, D, points_per_t,
                               top)
        for rep in range(replicates))
    x = np.array([r[0] for r in res])
    y = np.array([r[1] for r in res])
    ok = np.array([r[2] for r in res])
    d = min(r[3] for r in res)
    fit = Regression.fit(x[ok], y[ok])
    rng = np.random.default_rng([seed, 0x5EED])
    control = Regression.fit(rng.permutation(x[ok]), y[ok])
    return RegressionReport(fit, control, x, y, int(np.count_nonzero(~ok)), d, delta,
                            direct_mean=float(np.mean(y)))
