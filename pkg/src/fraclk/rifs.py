"""Random iterated function systems and their Galton-Watson code trees.

A model is a finite offspring law: each atom carries a probability and a
(possibly empty) list of contracting similarities.  Trees are sampled
generation by generation with a counter-based random stream keyed by
``(seed, replicate, code word)``, so any node's offspring draw can be
recomputed without replaying the rest of the tree.

Similarities are stored in complex form ``z -> a * c(z) + b`` where ``c`` is
complex conjugation for reflections and the identity otherwise.  In one
dimension everything lives on the real axis and ``a`` is ``+-ratio``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import yaml

from . import polygon

R_DEFAULT = 1.5
MAX_NODES = 60_000_000


class ModelError(ValueError):
    """Malformed or inadmissible model definition."""


class SubcriticalError(ModelError):
    """Mean offspring number is not larger than one."""


# ---------------------------------------------------------------------------
# similarities and offspring law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Similarity:
    """Contracting similarity ``x -> ratio * Q x + translation``.

    ``rotation`` is an angle in radians in the plane and a sign (+1/-1) on the
    line; ``reflection`` (plane only) conjugates before rotating.
    """

    ratio: float
    rotation: float = 0.0
    reflection: bool = False
    translation: tuple = (0.0,)

    def __post_init__(self):
        if not (0.0 < self.ratio < 1.0):
            raise ModelError(f"similarity ratio must lie in (0, 1), got {self.ratio}")
        if self.dimension == 1:
            if self.rotation not in (1, -1, 1.0, -1.0):
                raise ModelError("on the line the rotation must be a sign +1 or -1")
            if self.reflection:
                raise ModelError("reflection flag is only meaningful in the plane")
        elif self.dimension != 2:
            raise ModelError("only dimensions 1 and 2 are supported")

    @classmethod
    def line(cls, ratio: float, shift: float = 0.0, sign: int = 1) -> "Similarity":
        return cls(float(ratio), float(sign), False, (float(shift),))

    @classmethod
    def plane(cls, ratio: float, shift=(0.0, 0.0), angle: float = 0.0,
              reflection: bool = False) -> "Similarity":
        return cls(float(ratio), float(angle), bool(reflection),
                   (float(shift[0]), float(shift[1])))

    @property
    def dimension(self) -> int:
        return len(self.translation)

    @property
    def linear(self) -> complex:
        if self.dimension == 1:
            return complex(self.ratio * self.rotation, 0.0)
        return self.ratio * cmath.exp(1j * self.rotation)

    @property
    def shift(self) -> complex:
        if self.dimension == 1:
            return complex(self.translation[0], 0.0)
        return complex(self.translation[0], self.translation[1])

    def __call__(self, x):
        z = _to_complex(x, self.dimension)
        if self.reflection:
            z = np.conj(z)
        return _from_complex(self.linear * z + self.shift, self.dimension)


def _to_complex(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1:
        return x.astype(complex)
    return x[..., 0] + 1j * x[..., 1]


def _from_complex(z, dim):
    if dim == 1:
        return np.real(z)
    return np.stack([np.real(z), np.imag(z)], axis=-1)


@dataclass(frozen=True)
class BaseSet:
    """Compact base set ``J``: an interval on the line, a convex polygon in the plane."""

    dimension: int
    geometry: tuple

    def __post_init__(self):
        if self.dimension == 1:
            lo, hi = self.geometry
            if not hi > lo:
                raise ModelError("base interval must have nonempty interior")
        elif self.dimension == 2:
            poly = np.asarray(self.geometry, dtype=float)
            if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
                raise ModelError("base polygon needs at least three 2-D vertices")
            if not polygon.is_convex(poly):
                raise ModelError("base polygon must be convex with nonempty interior")
        else:
            raise ModelError("only dimensions 1 and 2 are supported")

    @classmethod
    def interval(cls, lo: float = 0.0, hi: float = 1.0) -> "BaseSet":
        return cls(1, (float(lo), float(hi)))

    @classmethod
    def convex_polygon(cls, vertices) -> "BaseSet":
        poly = polygon.ccw(np.asarray(vertices, dtype=float))
        return cls(2, tuple(tuple(map(float, v)) for v in poly))

    @property
    def vertices(self) -> np.ndarray:
        if self.dimension == 1:
            return np.asarray(self.geometry, dtype=float)
        return np.asarray(self.geometry, dtype=float)

    @property
    def diam(self) -> float:
        if self.dimension == 1:
            return self.geometry[1] - self.geometry[0]
        return polygon.diameter(self.vertices)

    @property
    def volume(self) -> float:
        if self.dimension == 1:
            return self.diam
        return polygon.area(self.vertices)

    @property
    def anchor(self) -> complex:
        """Reference point used when a piece is rendered as a single pixel."""
        v = self.vertices
        if self.dimension == 1:
            return complex(0.5 * (v[0] + v[1]), 0.0)
        c = v.mean(axis=0)
        return complex(c[0], c[1])

    def vertices_complex(self) -> np.ndarray:
        v = self.vertices
        if self.dimension == 1:
            return v.astype(complex)
        return v[:, 0] + 1j * v[:, 1]


@dataclass(frozen=True)
class OffspringAtom:
    probability: float
    maps: tuple = ()

    def __post_init__(self):
        if not self.probability >= 0:
            raise ModelError("atom probability must be nonnegative")


@dataclass(frozen=True)
class RifsModel:
    """Finite offspring law over similarity lists together with the base set."""

    base: BaseSet
    atoms: tuple
    name: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if not self.atoms:
            raise ModelError("model needs at least one atom")
        total = math.fsum(a.probability for a in self.atoms)
        if abs(total - 1.0) > 1e-12:
            raise ModelError(f"atom probabilities sum to {total!r}, not 1")
        for a in self.atoms:
            for m in a.maps:
                if m.dimension != self.base.dimension:
                    raise ModelError("similarity dimension differs from base dimension")
        object.__setattr__(self, "_tables", _MapTables.build(self))

    @property
    def dimension(self) -> int:
        return self.base.dimension

    @property
    def mean_offspring(self) -> float:
        return math.fsum(a.probability * len(a.maps) for a in self.atoms)

    @property
    def is_supercritical(self) -> bool:
        return self.mean_offspring > 1.0

    @property
    def has_extinction(self) -> bool:
        return any(a.probability > 0 and not a.maps for a in self.atoms)

    @property
    def is_deterministic(self) -> bool:
        return sum(1 for a in self.atoms if a.probability > 0) == 1

    @property
    def tables(self) -> "_MapTables":
        return self._tables

    def ratios(self) -> np.ndarray:
        """All contraction ratios occurring with positive probability."""
        return np.array([m.ratio for a in self.atoms if a.probability > 0 for m in a.maps])

    def require_supercritical(self):
        if not self.is_supercritical:
            raise SubcriticalError(
                f"model {self.name!r} is not supercritical: E nu = {self.mean_offspring}")


@dataclass(frozen=True)
class _MapTables:
    """Flattened per-map coefficient arrays for vectorized sampling."""

    cumprob: np.ndarray
    size: np.ndarray
    offset: np.ndarray
    a: np.ndarray
    b: np.ndarray
    refl: np.ndarray
    ratio: np.ndarray
    logr: np.ndarray

    @classmethod
    def build(cls, model: RifsModel) -> "_MapTables":
        probs = np.array([a.probability for a in model.atoms])
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        size = np.array([len(a.maps) for a in model.atoms], dtype=np.int64)
        offset = np.concatenate([[0], np.cumsum(size)[:-1]]).astype(np.int64)
        maps = [m for a in model.atoms for m in a.maps]
        return cls(
            cumprob=cum,
            size=size,
            offset=offset,
            a=np.array([m.linear for m in maps], dtype=complex),
            b=np.array([m.shift for m in maps], dtype=complex),
            refl=np.array([m.reflection for m in maps], dtype=bool),
            ratio=np.array([m.ratio for m in maps], dtype=float),
            logr=np.array([-math.log(m.ratio) for m in maps], dtype=float),
        )


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

BUNDLED = ("cantor", "random-cantor", "sierpinski", "dust4", "random-dust")


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=True)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _num(value, where, line):
    if isinstance(value, bool):
        raise ModelError(f"line {line}: key {where!r}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ModelError(f"line {line}: key {where!r}: expected a number or p/q, got {value!r}")


def _get(d, key, where, required=True, default=None):
    if key in d:
        return d[key]
    if required:
        raise ModelError(f"line {d.get('__line__', '?')}: missing key {where + key!r}")
    return default


def model_from_dict(doc: dict) -> RifsModel:
    if not isinstance(doc, dict):
        raise ModelError("model file must contain a mapping at top level")
    line = doc.get("__line__", "?")
    dim = _get(doc, "dimension", "")
    if dim not in (1, 2):
        raise ModelError(f"line {line}: key 'dimension': must be 1 or 2, got {dim!r}")
    base_raw = _get(doc, "base", "")
    try:
        if dim == 1:
            lo, hi = (_num(v, "base", line) for v in base_raw)
            base = BaseSet.interval(lo, hi)
        else:
            verts = [[_num(c, "base", line) for c in v] for v in base_raw]
            base = BaseSet.convex_polygon(verts)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise ModelError(f"line {line}: key 'base': {exc}") from None
        raise ModelError(f"line {line}: key 'base': malformed ({exc})") from None
    atoms_raw = _get(doc, "atoms", "")
    if not isinstance(atoms_raw, list):
        raise ModelError(f"line {line}: key 'atoms': expected a list")
    atoms = []
    for ia, a in enumerate(atoms_raw):
        if not isinstance(a, dict):
            raise ModelError(f"line {line}: key 'atoms[{ia}]': expected a mapping")
        aline = a.get("__line__", line)
        prob = _num(_get(a, "probability", f"atoms[{ia}]."), f"atoms[{ia}].probability", aline)
        maps = []
        for im, m in enumerate(a.get("maps") or []):
            where = f"atoms[{ia}].maps[{im}]"
            mline = m.get("__line__", aline) if isinstance(m, dict) else aline
            if not isinstance(m, dict):
                raise ModelError(f"line {mline}: key {where!r}: expected a mapping")
            ratio = _num(_get(m, "ratio", where + "."), where + ".ratio", mline)
            tr = m.get("translation", [0.0] * dim)
            if not isinstance(tr, list):
                tr = [tr]
            if len(tr) != dim:
                raise ModelError(f"line {mline}: key {where + '.translation'!r}: needs {dim} entries")
            tr = tuple(_num(t, where + ".translation", mline) for t in tr)
            rot = _num(m.get("rotation", 1.0 if dim == 1 else 0.0), where + ".rotation", mline)
            refl = bool(m.get("reflection", False))
            try:
                maps.append(Similarity(ratio, rot, refl, tr))
            except ModelError as exc:
                raise ModelError(f"line {mline}: key {where!r}: {exc}") from None
        try:
            atoms.append(OffspringAtom(prob, tuple(maps)))
        except ModelError as exc:
            raise ModelError(f"line {aline}: key 'atoms[{ia}]': {exc}") from None
    name = str(doc.get("name", "model"))
    try:
        return RifsModel(base, tuple(atoms), name)
    except ModelError as exc:
        raise ModelError(f"line {line}: {exc}") from None


def load_model(source: Union[str, Path], check: bool = True, tol: float = 1e-9) -> RifsModel:
    """Load a model from a YAML file or a bundled name.

    With ``check`` the model must be supercritical and pass the open set
    condition, otherwise :class:`ModelError` is raised.
    """
    path = Path(source)
    if not path.exists() and str(source) in BUNDLED:
        path = Path(__file__).parent / "models" / f"{source}.yaml"
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelError(f"cannot read model file {source}: {exc}") from None
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        raise ModelError(f"{path}: {exc}") from None
    model = model_from_dict(doc)
    if check:
        model.require_supercritical()
        rep = check_osc(model, tol)
        if not rep.passed:
            raise ModelError(f"model {model.name!r} violates the open set condition: {rep.detail}")
    return model


def model_hash(model: RifsModel) -> str:
    import hashlib
    payload = repr((model.name, model.base, model.atoms)).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


# ---------------------------------------------------------------------------
# open set condition
# ---------------------------------------------------------------------------


@dataclass
class OscReport:
    passed: bool
    atom_passed: list
    worst_violation: float
    detail: str = ""


def _image_vertices(model: RifsModel, m: Similarity) -> np.ndarray:
    z = model.base.vertices_complex()
    if m.reflection:
        z = np.conj(z)
    return m.linear * z + m.shift


def check_osc(model: RifsModel, tol: float = 1e-9) -> OscReport:
    """Check ``S_i(int J)`` inside ``int J`` and pairwise disjoint, atom by atom."""
    worst = 0.0
    atom_ok = []
    notes = []
    if model.dimension == 1:
        lo, hi = model.base.geometry
        for ia, atom in enumerate(model.atoms):
            ok = True
            ivs = []
            for m in atom.maps:
                z = np.real(_image_vertices(model, m))
                ivs.append((z.min(), z.max()))
            for a, b in ivs:
                v = max(lo - a, b - hi, 0.0)
                worst = max(worst, v)
                if v > tol:
                    ok = False
                    notes.append(f"atom {ia}: image [{a}, {b}] leaves J by {v:.3g}")
            for i in range(len(ivs)):
                for j in range(i + 1, len(ivs)):
                    ov = min(ivs[i][1], ivs[j][1]) - max(ivs[i][0], ivs[j][0])
                    worst = max(worst, ov)
                    if ov > tol:
                        ok = False
                        notes.append(f"atom {ia}: images {i} and {j} overlap by {ov:.3g}")
            atom_ok.append(ok)
    else:
        J = model.base.vertices
        areaJ = polygon.area(J)
        for ia, atom in enumerate(model.atoms):
            ok = True
            polys = []
            for m in atom.maps:
                z = _image_vertices(model, m)
                p = polygon.ccw(np.stack([z.real, z.imag], axis=1))
                polys.append(p)
                margin = float(polygon.inside_margin(J, p).min())
                worst = max(worst, -margin)
                if margin < -tol:
                    ok = False
                    notes.append(f"atom {ia}: image leaves J by {-margin:.3g}")
            for i in range(len(polys)):
                for j in range(i + 1, len(polys)):
                    ov = polygon.intersection_area(polys[i], polys[j])
                    worst = max(worst, ov / areaJ)
                    if ov > tol * areaJ:
                        ok = False
                        notes.append(f"atom {ia}: images {i} and {j} overlap, area {ov:.3g}")
            atom_ok.append(ok)
    return OscReport(all(atom_ok), atom_ok, worst, "; ".join(notes))


# ---------------------------------------------------------------------------
# counter-based random stream
# ---------------------------------------------------------------------------

_M64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SALT = np.uint64(0xD1B54A32D192ED03)


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def root_key(seed: int, replicate: int) -> np.uint64:
    k = _mix(np.array([int(seed) & _M64], dtype=np.uint64))
    k = _mix(k ^ _mix(np.array([int(replicate) & _M64], dtype=np.uint64)))
    return k


def child_keys(parent_keys: np.ndarray, digits: np.ndarray) -> np.ndarray:
    return _mix(parent_keys ^ (digits.astype(np.uint64) * _SALT))


def node_uniform(keys: np.ndarray) -> np.ndarray:
    u = _mix(keys ^ _SALT) >> np.uint64(11)
    return u.astype(np.float64) * (1.0 / 9007199254740992.0)


def draw_atoms(model: RifsModel, keys: np.ndarray) -> np.ndarray:
    t = model.tables
    idx = np.searchsorted(t.cumprob, node_uniform(keys), side="right")
    return np.minimum(idx, len(t.cumprob) - 1)


# ---------------------------------------------------------------------------
# code trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Depth:
    n: int


@dataclass(frozen=True)
class Resolution:
    r: float


@dataclass(frozen=True)
class Markov:
    r: float


StopRule = Union[Depth, Resolution, Markov]


@dataclass(frozen=True, eq=False)
class CodeTree:
    """Sampled Galton-Watson tree, stored as flat arrays in breadth-first order.

    Node 0 is the root.  Children of a node are contiguous, starting at
    ``child_start``.  ``atom`` is -1 for nodes whose offspring were never drawn
    (leaves of the stopping rule).
    """

    seed: int
    replicate: int
    stop: StopRule
    R: float
    parent: np.ndarray
    digit: np.ndarray
    depth: np.ndarray
    branch: np.ndarray
    key: np.ndarray
    ratio: np.ndarray
    walk: np.ndarray
    lin: np.ndarray
    shift: np.ndarray
    refl: np.ndarray
    atom: np.ndarray
    child_start: np.ndarray
    n_children: np.ndarray
    leaf: np.ndarray
    dead: np.ndarray

    def __len__(self):
        return len(self.parent)

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.leaf)

    def generation(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.depth == n)

    def code(self, i: int) -> tuple:
        out = []
        while i > 0:
            out.append(int(self.digit[i]))
            i = int(self.parent[i])
        return tuple(reversed(out))

    def find(self, code: Sequence[int]) -> int:
        i = 0
        for c in code:
            if self.n_children[i] < c or c < 1:
                raise KeyError(code)
            i = int(self.child_start[i]) + c - 1
        return i

    def children(self, i: int) -> np.ndarray:
        s = int(self.child_start[i])
        return np.arange(s, s + int(self.n_children[i]))

    @property
    def extinct_root(self) -> bool:
        return bool(self.dead[0])


def _expand_predicate(stop: StopRule, model: RifsModel, R: float):
    if isinstance(stop, Depth):
        n = stop.n
        return lambda ratio, depth: depth < n
    if isinstance(stop, Resolution):
        d, r = model.base.diam, stop.r
        return lambda ratio, depth: d * ratio > r
    if isinstance(stop, Markov):
        rho, r = R * model.base.diam, stop.r
        return lambda ratio, depth: rho * ratio > r
    raise TypeError(f"unknown stop rule {stop!r}")


def sample_tree(model: RifsModel, seed: int, replicate: int = 0, stop: StopRule = Depth(0),
                R: float = R_DEFAULT, max_nodes: int = MAX_NODES) -> CodeTree:
    """Sample the code tree of one realization down to the stopping rule."""
    model.require_supercritical()
    if isinstance(stop, (Markov, Resolution)) and not stop.r > 0:
        raise ValueError(f"stopping radius must be positive, got {stop.r}")
    if isinstance(stop, Depth) and stop.n < 0:
        raise ValueError("depth must be nonnegative")
    if not R > math.sqrt(2):
        raise ValueError(f"R must exceed sqrt(2), got {R}")
    t = model.tables
    expand = _expand_predicate(stop, model, R)

    gen = dict(
        parent=np.array([-1], dtype=np.int64),
        digit=np.array([0], dtype=np.int32),
        depth=np.array([0], dtype=np.int32),
        branch=np.array([0], dtype=np.int32),
        key=root_key(seed, replicate),
        ratio=np.array([1.0]),
        walk=np.array([0.0]),
        lin=np.array([1.0 + 0j]),
        shift=np.array([0.0 + 0j]),
        refl=np.array([False]),
    )
    gens = []
    offset = 0
    total = 1
    while True:
        n = len(gen["parent"])
        grow = expand(gen["ratio"], gen["depth"])
        atom = np.full(n, -1, dtype=np.int64)
        idx = np.flatnonzero(grow)
        atom[idx] = draw_atoms(model, gen["key"][idx])
        nch = np.zeros(n, dtype=np.int64)
        nch[idx] = t.size[atom[idx]]
        gen["atom"] = atom
        gen["n_children"] = nch
        gen["leaf"] = ~grow
        gen["dead"] = grow & (nch == 0)
        next_start = offset + n
        gen["child_start"] = next_start + np.concatenate([[0], np.cumsum(nch)[:-1]])
        gens.append(gen)
        m = int(nch.sum())
        if m == 0:
            break
        total += m
        if total > max_nodes:
            raise MemoryError(f"tree exceeds {max_nodes} nodes; coarsen the stopping rule")
        par_local = np.repeat(np.arange(n), nch)
        first = np.repeat(np.cumsum(nch) - nch, nch)
        dig = (np.arange(m) - first + 1).astype(np.int32)
        mi = t.offset[atom[par_local]] + dig - 1
        pl = gen["lin"][par_local]
        pr = gen["refl"][par_local]
        a = np.where(pr, np.conj(t.a[mi]), t.a[mi])
        b = np.where(pr, np.conj(t.b[mi]), t.b[mi])
        depth_next = gen["depth"][par_local] + 1
        branch = np.where(depth_next == 1, dig, gen["branch"][par_local]).astype(np.int32)
        gen = dict(
            parent=(offset + par_local).astype(np.int64),
            digit=dig,
            depth=depth_next,
            branch=branch,
            key=child_keys(gen["key"][par_local], dig),
            ratio=gen["ratio"][par_local] * t.ratio[mi],
            walk=gen["walk"][par_local] + t.logr[mi],
            lin=pl * a,
            shift=pl * b + gen["shift"][par_local],
            refl=pr ^ t.refl[mi],
        )
        offset = next_start
    cat = {k: np.concatenate([g[k] for g in gens]) for k in gens[0]}
    return CodeTree(seed=int(seed), replicate=int(replicate), stop=stop, R=float(R), **cat)


def first_generation(tree: CodeTree, model: RifsModel) -> list:
    """Root offspring as ``(i, r_i, S_i)`` triples; empty on extinction at the root."""
    a = int(tree.atom[0])
    if a < 0:
        return []
    return [(i + 1, m.ratio, m) for i, m in enumerate(model.atoms[a].maps)]


# ---------------------------------------------------------------------------
# stopping subtrees
# ---------------------------------------------------------------------------


def rho(model: RifsModel, R: float = R_DEFAULT) -> float:
    return R * model.base.diam


def markov_cut(tree: CodeTree, model: RifsModel, r: float) -> np.ndarray:
    """Indices of ``T(r)`` inside a tree sampled at a Markov radius <= r."""
    p = rho(model, tree.R)
    here = p * tree.ratio <= r
    parent_ratio = np.where(tree.parent >= 0, tree.ratio[np.maximum(tree.parent, 0)], np.inf)
    above = p * parent_ratio > r
    return np.flatnonzero(here & above)


def piece_bounds_1d(tree: CodeTree, model: RifsModel, nodes: np.ndarray) -> np.ndarray:
    """Endpoints of ``J_sigma`` on the line, shape ``(len(nodes), 2)``."""
    lo, hi = model.base.geometry
    A = tree.lin[nodes].real
    B = tree.shift[nodes].real
    e0, e1 = A * lo + B, A * hi + B
    return np.stack([np.minimum(e0, e1), np.maximum(e0, e1)], axis=1)


def piece_polygons(tree: CodeTree, model: RifsModel, nodes: np.ndarray) -> np.ndarray:
    """Vertices of ``J_sigma`` in the plane, shape ``(len(nodes), nv, 2)``."""
    z = model.base.vertices_complex()[None, :]
    zz = np.where(tree.refl[nodes, None], np.conj(z), z)
    w = tree.lin[nodes, None] * zz + tree.shift[nodes, None]
    return np.stack([w.real, w.imag], axis=-1)


def _first_iterate(tree: CodeTree) -> np.ndarray:
    return tree.children(0) if tree.n_children[0] > 0 else np.zeros(0, dtype=np.int64)


def boundary_distances(tree: CodeTree, model: RifsModel, nodes: np.ndarray) -> np.ndarray:
    """``dist(J_sigma, complement of SJ)`` for the given nodes (0 if not inside SJ)."""
    kids = _first_iterate(tree)
    if len(kids) == 0 or len(nodes) == 0:
        return np.zeros(len(nodes))
    if model.dimension == 1:
        comps = _merge_closed(piece_bounds_1d(tree, model, kids))
        iv = piece_bounds_1d(tree, model, nodes)
        k = np.searchsorted(comps[:, 0], iv[:, 0], side="right") - 1
        k = np.clip(k, 0, len(comps) - 1)
        c = comps[k]
        inside = (iv[:, 0] >= c[:, 0]) & (iv[:, 1] <= c[:, 1])
        d = np.minimum(iv[:, 0] - c[:, 0], c[:, 1] - iv[:, 1])
        return np.where(inside, d, 0.0)
    import shapely
    sj = shapely.unary_union(shapely.polygons(piece_polygons(tree, model, kids)))
    polys = shapely.polygons(piece_polygons(tree, model, nodes))
    edge = sj.boundary
    d = shapely.distance(polys, edge)
    # pieces poking out of SJ by rounding only are still treated as inside
    inside = shapely.covered_by(polys, shapely.buffer(sj, 1e-12 * model.base.diam))
    return np.where(inside, d, 0.0)


def _merge_closed(iv: np.ndarray) -> np.ndarray:
    iv = iv[np.argsort(iv[:, 0])]
    out = [list(iv[0])]
    for a, b in iv[1:]:
        if a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return np.asarray(out)


def boundary_subtree(tree: CodeTree, model: RifsModel, r: float) -> list:
    """Codes of ``T_b(r)``: members of ``T(r)`` whose piece lies within ``2r`` of
    the complement of the first iterate ``SJ``.

    The piece ``J_sigma`` stands in for ``F_sigma``; since it contains it, the
    returned set can only be larger than the exact one.
    """
    if not isinstance(tree.stop, Markov) or tree.stop.r > r:
        raise ValueError("boundary_subtree needs a tree stopped by Markov(r') with r' <= r")
    nodes = markov_cut(tree, model, r)
    d = boundary_distances(tree, model, nodes)
    return [tree.code(int(i)) for i in nodes[d < 2 * r]]


@dataclass
class TbGrowth:
    r_grid: np.ndarray
    counts: np.ndarray          # (replicates, len(r_grid))
    scaled: np.ndarray          # r^(D - delta) * count
    running_sup: np.ndarray     # per replicate supremum over the grid
    mean_sup: float
    max_sup: float
    D: float
    delta: float


def tb_growth_diagnostic(model: RifsModel, D: float, delta: float, r_grid, replicates: int,
                         seed: int, R: float = R_DEFAULT) -> TbGrowth:
    """Monitor ``sup_r r^(D - delta) #T_b(r)`` over a radius grid and replicates."""
    if not 0 < delta < D:
        raise ValueError("need 0 < delta < D")
    r_grid = np.sort(np.asarray(r_grid, dtype=float))[::-1]
    counts = np.zeros((replicates, len(r_grid)), dtype=np.int64)
    for rep in range(replicates):
        tree = sample_tree(model, seed, rep, Markov(float(r_grid[-1])), R=R)
        for j, r in enumerate(r_grid):
            nodes = markov_cut(tree, model, r)
            d = boundary_distances(tree, model, nodes)
            counts[rep, j] = int(np.count_nonzero(d < 2 * r))
    scaled = r_grid[None, :] ** (D - delta) * counts
    sup = scaled.max(axis=1) if len(r_grid) else np.zeros(replicates)
    return TbGrowth(r_grid, counts, scaled, sup, float(sup.mean()), float(sup.max()), D, delta)
