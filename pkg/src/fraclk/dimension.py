"""Spectral constants of a random IFS: dimension, lambda(D), lattice type, martingale."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .rifs import CodeTree, RifsModel, SubcriticalError


class AmbiguousLattice(ValueError):
    """A log-ratio quotient is rational within tolerance at two denominators."""


def moment(model: RifsModel, s: float) -> float:
    """``phi(s) = E sum_i r_i^s`` as an exact finite sum over atoms."""
    return math.fsum(a.probability * math.fsum(m.ratio ** s for m in a.maps)
                     for a in model.atoms)


def hausdorff_dimension(model: RifsModel, tol: float = 1e-14) -> float:
    """Root of ``phi(s) = 1`` by bisection; phi is strictly decreasing."""
    if not model.is_supercritical:
        raise SubcriticalError(
            f"E nu = {model.mean_offspring} <= 1: the dimension equation has no positive root")
    lo, hi = 0.0, float(model.dimension)
    while moment(model, hi) >= 1.0:
        lo, hi = hi, 2 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if moment(model, mid) > 1.0:
            lo = mid
        else:
            hi = mid
    D = 0.5 * (lo + hi)
    if D > model.dimension + 1e-9:
        warnings.warn(f"D = {D} exceeds the ambient dimension; open set condition is suspect")
    return D


def lambda_of_D(model: RifsModel, D: float) -> float:
    return math.fsum(a.probability * math.fsum(-math.log(m.ratio) * m.ratio ** D for m in a.maps)
                     for a in model.atoms)


def biggins_check(model: RifsModel, D: float) -> float:
    """``E(M_1 ln+ M_1)`` summed exactly over atoms."""
    out = []
    for a in model.atoms:
        m1 = math.fsum(m.ratio ** D for m in a.maps)
        out.append(a.probability * m1 * max(math.log(m1), 0.0) if m1 > 0 else 0.0)
    return math.fsum(out)


# ---------------------------------------------------------------------------
# lattice classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lattice:
    c: float
    multipliers: tuple = ()

    @property
    def is_lattice(self) -> bool:
        return True


@dataclass(frozen=True)
class NonLattice:
    witness: str = ""

    @property
    def is_lattice(self) -> bool:
        return False


def _convergents(x: float, limit: int = 64):
    """Continued-fraction convergents ``(p, q)`` of a positive float."""
    p0, q0, p1, q1 = 0, 1, 1, 0
    y = x
    for _ in range(limit):
        a = math.floor(y)
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        yield p1, q1, a
        frac = y - a
        if frac <= 1e-15 * max(1.0, y):
            return
        y = 1.0 / frac


def _rational_fit(x: float, denom_bound: int, tol: float):
    """Best rational for ``x`` or None; raises on an ambiguous certificate.

    ``p/q`` fits when the integer-relation residual ``|q x - p|`` is at most
    ``tol``.  Plain ``|x - p/q| <= tol`` is useless here: every irrational has
    convergents within ``1/q^2`` of it.
    """
    convs = list(_convergents(x))
    for k, (p, q, _) in enumerate(convs):
        if q > denom_bound:
            return None, convs
        if abs(q * x - p) <= tol:
            if k + 1 < len(convs):
                p2, q2, _ = convs[k + 1]
                if q2 <= denom_bound and abs(q2 * x - p2) <= tol and p2 * q != p * q2:
                    raise AmbiguousLattice(
                        f"{x!r} fits both {p}/{q} and {p2}/{q2} within {tol}; tighten tol")
            return Fraction(p, q), convs
    return None, convs


def lattice_analysis(model: RifsModel, denom_bound: int = 10 ** 6, tol: float = 1e-9):
    """Classify the log-ratio measure as lattice (with generator) or non-lattice."""
    vals = sorted({round(-math.log(r), 15) for r in model.ratios()})
    if not vals:
        raise SubcriticalError("model has no maps with positive probability")
    base = vals[0]
    fracs = []
    for v in vals[1:]:
        fr, convs = _rational_fit(v / base, denom_bound, tol)
        if fr is None:
            tail = [a for _, _, a in convs[:8]]
            return NonLattice(f"{v}/{base} = {v / base!r} has partial quotients {tail}")
        fracs.append(fr)
    L = 1
    for fr in fracs:
        L = L * fr.denominator // math.gcd(L, fr.denominator)
    ints = [L] + [fr.numerator * L // fr.denominator for fr in fracs]
    g = 0
    for n in ints:
        g = math.gcd(g, n)
    c = base * g / L
    return Lattice(c, tuple(n // g for n in ints))


# ---------------------------------------------------------------------------
# martingale
# ---------------------------------------------------------------------------


@dataclass
class MartingaleTrace:
    values: np.ndarray
    settled: bool

    @property
    def estimate(self) -> float:
        return float(self.values[-1])


def martingale_values(tree: CodeTree, D: float, depth: Optional[int] = None) -> MartingaleTrace:
    """``M_n = sum over generation n of rbar^D`` for n = 0..depth."""
    if depth is None:
        depth = tree.max_depth
    w = tree.ratio ** D
    vals = np.bincount(tree.depth, weights=w, minlength=depth + 1)[: depth + 1]
    # a generation is complete only if no earlier node was cut off as a leaf
    leafy = np.bincount(tree.depth[tree.leaf], minlength=depth + 1)[: depth + 1]
    if np.any(leafy[:depth] > 0):
        raise ValueError("tree is not complete to the requested depth; sample with Depth(n)")
    settled = True
    if depth >= 1:
        last, prev = vals[-1], vals[-2]
        settled = abs(last - prev) <= 0.01 * max(1.0, last)
    return MartingaleTrace(vals, settled)


@dataclass
class SpectralReport:
    name: str
    D: float
    lambda_D: float
    lattice: object
    E_nu: float
    biggins_moment: float
    E_M1: float
    notes: list = field(default_factory=list)

    @property
    def lattice_c(self) -> Optional[float]:
        return self.lattice.c if isinstance(self.lattice, Lattice) else None

    def csv_row(self) -> dict:
        return {
            "name": self.name,
            "D": f"{self.D:.12f}",
            "lambda_D": f"{self.lambda_D:.12f}",
            "lattice": "lattice" if self.lattice_c is not None else "non-lattice",
            "lattice_c": "" if self.lattice_c is None else f"{self.lattice_c:.12f}",
            "E_nu": f"{self.E_nu:.12f}",
            "biggins_moment": f"{self.biggins_moment:.12f}",
            "E_M1": f"{self.E_M1:.12f}",
        }


def spectral_report(model: RifsModel, **lattice_kw) -> SpectralReport:
    D = hausdorff_dimension(model)
    notes = ["E M_1 ln+ M_1 finite: E M_inf = 1 and P(M_inf > 0 | non-extinction) = 1"]
    if D > model.dimension:
        notes.append("D exceeds the ambient dimension")
    return SpectralReport(
        name=model.name,
        D=D,
        lambda_D=lambda_of_D(model, D),
        lattice=lattice_analysis(model, **lattice_kw),
        E_nu=model.mean_offspring,
        biggins_moment=biggins_check(model, D),
        E_M1=moment(model, D),
        notes=notes,
    )
