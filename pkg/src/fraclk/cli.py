"""``fraclk`` command line.

Exit codes: 0 success, 2 invalid model, 3 resolution or grid gate violated,
4 hard assertion failed, 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from . import grid as gr
from . import intervals as iv
from . import limits as lim
from .appendix import CompactSpec, HardAssertion, large_r_sweep, random_cloud
from .dimension import (Lattice, hausdorff_dimension, martingale_values, spectral_report)
from .rifs import (R_DEFAULT, Depth, ModelError, Resolution, load_model, model_hash,
                   sample_tree)

EXIT_MODEL, EXIT_GATE, EXIT_ASSERT, EXIT_USAGE = 2, 3, 4, 64
GATE_ERRORS = (iv.ResolutionTooCoarse, gr.ResolutionTooCoarse, lim.GridTooCoarse,
               lim.NonFractalScaling)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


@dataclass
class ExperimentConfig:
    command: str
    model: str
    seed: Optional[int] = None
    replicates: int = 1
    k: tuple = ()
    eps_max: float = 1.0
    eps_min: Optional[float] = None
    grid_q: float = math.exp(-1 / lim.POINTS_PER_T)
    h: float = 1 / 1024
    eta: float = iv.ETA_DEFAULT
    R: float = R_DEFAULT
    delta: Optional[float] = None
    out: Path = Path(".")
    workers: int = 1
    depth: int = 8
    extra: dict = field(default_factory=dict)

    def grid_comment(self) -> str:
        parts = [f"eps_max={self.eps_max!r}", f"eps_min={self.eps_min!r}",
                 f"q={self.grid_q!r}", f"eta={self.eta!r}", f"h={self.h!r}",
                 f"delta={self.delta!r}", f"replicates={self.replicates}"]
        return " ".join(parts)


def _k_list(text: str) -> tuple:
    try:
        ks = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not ks or any(k < 0 or k > 2 for k in ks):
        raise argparse.ArgumentTypeError("k must be a comma list of integers in 0..2")
    return ks


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v
    return conv


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fraclk", description="Fractal curvatures of self-similar random sets.")
    p.add_argument("--version", action="version", version=f"fraclk {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed_required=True):
        sp.add_argument("model_file", nargs="?", help="model YAML file or bundled name")
        sp.add_argument("--model", help="model YAML file or bundled name")
        sp.add_argument("--seed", type=int, required=False,
                        help="64-bit master seed" + (" (required)" if seed_required else ""))
        sp.add_argument("--replicates", type=_positive(int), default=1)
        sp.add_argument("--k", type=_k_list, default=None, help="comma list, e.g. 0,1")
        sp.add_argument("--eps-max", type=_positive(float), default=1.0)
        sp.add_argument("--eps-min", type=_positive(float), default=None)
        sp.add_argument("--grid-q", type=float, default=math.exp(-1 / lim.POINTS_PER_T))
        sp.add_argument("--h", type=_positive(float), default=1 / 1024,
                        help="finest pixel size (plane models)")
        sp.add_argument("--eta", type=_positive(float), default=iv.ETA_DEFAULT,
                        help="cover resolution as a fraction of the smallest radius")
        sp.add_argument("--R", type=float, default=R_DEFAULT)
        sp.add_argument("--delta", type=_positive(float), default=None)
        sp.add_argument("--out", type=Path, default=Path("."))
        sp.add_argument("--workers", type=_positive(int), default=1)
        return sp

    common(sub.add_parser("dimension", help="spectral constants of a model"), False)
    s = common(sub.add_parser("sample", help="sample code trees and dump geometry"))
    s.add_argument("--depth", type=int, default=8)
    s.add_argument("--dump", action="store_true", help="write cover geometry")
    common(sub.add_parser("curve", help="curvature curves C_k(F(eps))"))
    common(sub.add_parser("fractal-curvature", help="average limits, integral constant, "
                                                    "martingale regression"))
    r = common(sub.add_parser("renewal-check", help="lattice sequences or non-lattice table"))
    r.add_argument("--s-grid", default="0.1,0.5,0.9")
    r.add_argument("--n-max", type=int, default=15)
    a = common(sub.add_parser("appendix-check", help="large-radius sweep"))
    a.add_argument("--clouds", type=int, default=0,
                   help="sweep this many random 20-point clouds instead of a file")
    return p


def config_from_args(ns) -> ExperimentConfig:
    model = ns.model or ns.model_file
    if ns.command != "appendix-check" or ns.clouds == 0:
        if model is None:
            raise UsageError("a model is required (positional or --model)")
    if ns.command != "dimension" and ns.seed is None:
        raise UsageError("--seed is required")
    if not 0 < ns.grid_q < 1:
        raise UsageError("--grid-q must lie in (0, 1)")
    if not ns.R > math.sqrt(2):
        raise UsageError("--R must exceed sqrt(2)")
    extra = {}
    for key in ("depth", "dump", "s_grid", "n_max", "clouds"):
        if hasattr(ns, key):
            extra[key] = getattr(ns, key)
    return ExperimentConfig(
        command=ns.command, model=model, seed=ns.seed, replicates=ns.replicates,
        k=ns.k or (), eps_max=ns.eps_max, eps_min=ns.eps_min, grid_q=ns.grid_q, h=ns.h,
        eta=ns.eta, R=ns.R, delta=ns.delta, out=ns.out, workers=ns.workers,
        depth=extra.get("depth", 8), extra=extra)


# ---------------------------------------------------------------------------
# csv output
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if math.isnan(x) else repr(x)
    return str(x)


def write_csv(path: Path, comment: str, header: list, rows: list) -> None:
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def comment_line(cfg: ExperimentConfig, model=None) -> str:
    mh = model_hash(model) if model is not None else "none"
    return (f"fraclk {__version__} model={mh} seed={cfg.seed} R={cfg.R!r} "
            f"{cfg.grid_comment()}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_dimension(cfg: ExperimentConfig) -> int:
    model = load_model(cfg.model)
    rep = spectral_report(model)
    row = rep.csv_row()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(row))
    w.writerow(list(row.values()))
    sys.stdout.write(f"# {comment_line(cfg, model)}\n" + buf.getvalue())
    lat = (f"lattice, c = {rep.lattice_c:.12f}" if rep.lattice_c is not None
           else f"non-lattice ({rep.lattice.witness})")
    sys.stdout.write(
        f"\nmodel {rep.name}\n  D = {rep.D:.10f}\n  lambda(D) = {rep.lambda_D:.10f}\n"
        f"  measure: {lat}\n  E nu = {rep.E_nu:.6f}, E M_1 = {rep.E_M1:.12f}\n"
        f"  E M_1 ln+ M_1 = {rep.biggins_moment:.6g}\n")
    for note in rep.notes:
        sys.stdout.write(f"  note: {note}\n")
    if cfg.out != Path("."):
        write_csv(cfg.out / "dimension.csv", comment_line(cfg, model), list(row),
                  [list(row.values())])
    return 0


def _sample_one(model, cfg, rep):
    tree = sample_tree(model, cfg.seed, rep, Depth(cfg.depth), R=cfg.R)
    D = hausdorff_dimension(model)
    m = martingale_values(tree, D)
    leaves = tree.leaves()
    alive = int(np.count_nonzero(~tree.dead[leaves]))
    return [rep, tree.n_nodes, alive, int(tree.extinct_root), tree.max_depth, m.estimate,
            int(m.settled)]


def cmd_sample(cfg: ExperimentConfig) -> int:
    model = load_model(cfg.model)
    rows = Parallel(n_jobs=cfg.workers)(delayed(_sample_one)(model, cfg, rep)
                                        for rep in range(cfg.replicates))
    write_csv(cfg.out / "sample.csv", comment_line(cfg, model),
              ["replicate", "nodes", "living_leaves", "extinct", "depth", "M_depth", "settled"],
              rows)
    if cfg.extra.get("dump"):
        for rep in range(cfg.replicates):
            if model.dimension == 1:
                tree = sample_tree(model, cfg.seed, rep, Resolution(cfg.eta * cfg.eps_max),
                                   R=cfg.R)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", iv.EmptyRealization)
                    cover = iv.render_cover_1d(tree, model)
                write_csv(cfg.out / f"cover_{rep}.csv", comment_line(cfg, model), ["a", "b"],
                          cover.intervals.tolist())
            else:
                tree = gr.sample_for_grid(model, cfg.seed, rep, cfg.h, cfg.R)
                gr.render_cover_2d(tree, model, cfg.h).to_pgm(cfg.out / f"mask_{rep}.pgm")
    for r in rows:
        sys.stdout.write(f"replicate {r[0]}: {r[1]} nodes, {r[2]} living leaves, "
                         f"M_{r[4]} = {r[5]:.6f}\n")
    return 0


def _default_ks(model):
    return (0, 1) if model.dimension == 1 else (0, 1, 2)


def _eps_grid(cfg, model):
    eps_min = cfg.eps_min
    if eps_min is None:
        eps_min = 1e-4 if model.dimension == 1 else 64 * cfg.h
    return lim.epsilon_grid(cfg.eps_max, eps_min, lim.q_to_points_per_t(cfg.grid_q))


def _curves(model, cfg, rep, eps, ks):
    return lim.curvature_curves(model, cfg.seed, rep, eps, ks, eta=cfg.eta, h=cfg.h, R=cfg.R)


def cmd_curve(cfg: ExperimentConfig) -> int:
    model = load_model(cfg.model)
    ks = cfg.k or _default_ks(model)
    eps = _eps_grid(cfg, model)
    res = Parallel(n_jobs=cfg.workers)(delayed(_curves)(model, cfg, rep, eps, ks)
                                       for rep in range(cfg.replicates))
    rows = []
    for rep, curves in enumerate(res):
        for k in ks:
            c = curves[k]
            lim.substitution_check(c)
            rows.extend([rep, k, e, v, s] for e, v, s in zip(c.epsilons, c.values, c.rescaled))
    write_csv(cfg.out / "curve.csv", comment_line(cfg, model),
              ["replicate", "k", "epsilon", "C_k", "rescaled"], rows)
    sys.stdout.write(f"wrote {len(rows)} rows to {cfg.out / 'curve.csv'}\n")
    return 0


def _limits_one(model, cfg, rep, ks, delta, D):
    eps = lim.epsilon_grid(1.0, delta, lim.q_to_points_per_t(cfg.grid_q))
    if model.dimension == 1:
        tree = sample_tree(model, cfg.seed, rep, Resolution(cfg.eta * delta), R=cfg.R)
        curves = lim.curves_1d(model, cfg.seed, rep, eps, ks, eta=cfg.eta, R=cfg.R, D=D,
                               tree=tree)
    else:
        tree = gr.sample_for_grid(model, cfg.seed, rep, cfg.h, cfg.R)
        curves = gr.curves_2d(model, cfg.seed, rep, eps, ks, h=cfg.h, R=cfg.R, D=D, tree=tree)
    depth = lim._complete_depth(tree)
    m = martingale_values(tree, D, depth).estimate
    return [(rep, k, lim.average_limit(curves[k], delta), m) for k in ks]


def cmd_fractal_curvature(cfg: ExperimentConfig) -> int:
    model = load_model(cfg.model)
    ks = cfg.k or _default_ks(model)
    D = hausdorff_dimension(model)
    delta = cfg.delta if cfg.delta is not None else (1e-6 if model.dimension == 1 else 64 * cfg.h)
    cfg.delta = delta
    res = Parallel(n_jobs=cfg.workers)(delayed(_limits_one)(model, cfg, rep, ks, delta, D)
                                       for rep in range(cfg.replicates))
    rows = [r for per in res for r in per]
    comment = comment_line(cfg, model)
    write_csv(cfg.out / "limits.csv", comment, ["replicate", "k", "avg_limit", "M_inf"], rows)
    lat = spectral_report(model).lattice_c
    report = []
    for k in ks:
        if abs(D - k) < 1e-6:
            sys.stderr.write(f"k={k}: {lim.SCALING_CAVEAT}; integral constant not reported\n")
            report.append([k, None, None, None, None, None, None, lat])
            continue
        rhs = lim.rhs_constant(model, k, cfg.replicates, cfg.seed, R=cfg.R, eta=cfg.eta,
                               workers=cfg.workers,
                               h=cfg.h if model.dimension == 2 else None)
        slope = icpt = lo = hi = None
        if model.dimension == 1 and not model.is_deterministic and cfg.replicates >= 100 \
                and not model.has_extinction:
            reg = lim.m_infinity_regression(model, k, cfg.replicates, cfg.seed, delta,
                                            eta=cfg.eta, R=cfg.R, workers=cfg.workers)
            slope, icpt = reg.fit.slope, reg.fit.intercept
            lo, hi = reg.fit.slope_ci
        report.append([k, rhs.value, rhs.stderr, slope, icpt, lo, hi, lat])
    write_csv(cfg.out / "report.csv", comment,
              ["k", "rhs_constant", "stderr", "slope", "intercept", "CI_lo", "CI_hi",
               "lattice_c"], report)
    for r in report:
        avg = np.mean([x[2] for x in rows if x[1] == r[0]])
        sys.stdout.write(f"k={r[0]}: mean average limit {avg:.6g}, integral constant "
                         f"{fmt(r[1]) or 'n/a'} +- {fmt(r[2]) or 'n/a'}\n")
    return 0


def cmd_renewal_check(cfg: ExperimentConfig) -> int:
    model = load_model(cfg.model)
    ks = cfg.k or (model.dimension,)
    rep_ = spectral_report(model)
    comment = comment_line(cfg, model)
    rows = []
    if isinstance(rep_.lattice, Lattice):
        s_grid = [float(s) for s in cfg.extra.get("s_grid", "0.1,0.5,0.9").split(",")]
        pts = lim.lattice_points(rep_.lattice.c, s_grid, cfg.extra.get("n_max", 15))
        pts = pts[pts <= cfg.eps_max]
        for rep in range(cfg.replicates):
            curves = _curves(model, cfg, rep, pts, ks)
            for k in ks:
                for seq in lim.lattice_sequences(curves[k], rep_.lattice, s_grid):
                    for n, v in zip(seq.n, seq.values):
                        rows.append([rep, k, seq.s, n, v, seq.settled])
        write_csv(cfg.out / "renewal.csv", comment,
                  ["replicate", "k", "s", "n", "value", "settled"], rows)
    else:
        eps = _eps_grid(cfg, model)
        res = Parallel(n_jobs=cfg.workers)(delayed(_curves)(model, cfg, rep, eps, ks)
                                           for rep in range(cfg.replicates))
        for k in ks:
            vals = np.array([r[k].rescaled for r in res])
            se = vals.std(axis=0, ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0 * vals[0]
            rows.extend([k, e, m, s] for e, m, s in zip(eps, vals.mean(axis=0), se))
        write_csv(cfg.out / "renewal.csv", comment,
                  ["k", "epsilon", "mean_rescaled", "stderr"], rows)
    sys.stdout.write(f"wrote {len(rows)} rows to {cfg.out / 'renewal.csv'}\n")
    return 0


def _specs_for(cfg: ExperimentConfig) -> list:
    if cfg.extra.get("clouds"):
        rng = np.random.default_rng([cfg.seed, 0xA7])
        return [random_cloud(rng) for _ in range(cfg.extra["clouds"])]
    path = Path(cfg.model)
    if path.suffix in (".csv", ".txt") and path.exists():
        pts = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=2,
                         comments="#")
        return [CompactSpec(points=pts, name=path.stem)]
    model = load_model(cfg.model)
    specs = []
    for rep in range(cfg.replicates):
        if model.dimension == 1:
            tree = sample_tree(model, cfg.seed, rep, Resolution(cfg.eta * model.base.diam),
                               R=cfg.R)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", iv.EmptyRealization)
                cover = iv.render_cover_1d(tree, model)
            specs.append(CompactSpec(cover=cover, name=f"{model.name}#{rep}"))
        else:
            tree = gr.sample_for_grid(model, cfg.seed, rep, cfg.h * 16, cfg.R)
            pts = gr.anchor_points(tree, model, tree.leaves()[~tree.dead[tree.leaves()]])
            specs.append(CompactSpec(points=pts, name=f"{model.name}#{rep}"))
    return specs


def _sweep_rows(spec, R):
    sw = large_r_sweep(spec, R, strict=False)
    rows = []
    for r in sw.rows:
        reach = r.reach
        rows.append([spec.name, sw.diam, r.r, r.chi, r.chi_pixel, r.C1, r.C2,
                     r.ratios[1], r.ratios[2] if len(r.ratios) > 2 else None,
                     None if reach is None else reach.estimate,
                     None if reach is None else reach.bound,
                     None if reach is None else reach.unreliable,
                     r.chi_ok, r.area_ok, r.perimeter_ok, r.passed])
    return rows


def cmd_appendix_check(cfg: ExperimentConfig) -> int:
    specs = _specs_for(cfg)
    res = Parallel(n_jobs=cfg.workers)(delayed(_sweep_rows)(s, cfg.R) for s in specs)
    rows = [r for per in res for r in per]
    write_csv(cfg.out / "appendix.csv", comment_line(cfg, None),
              ["spec", "diam", "r", "chi", "chi_pixel", "C1", "C2", "C1_over_r", "C2_over_r2",
               "reach", "reach_bound", "reach_unreliable", "chi_ok", "area_ok",
               "perimeter_ok", "passed"], rows)
    hard = [r for r in rows if not r[12]]
    soft = [r for r in rows if r[12] and not r[15]]
    sys.stdout.write(f"{len(specs)} sets, {len(rows)} radii: chi failures {len(hard)}, "
                     f"other failures {len(soft)}\n")
    for r in soft:
        warnings.warn(f"{r[0]} r={r[2]!r}: bound or reach check failed")
    if hard:
        raise HardAssertion(f"chi(K(r)) != 1 for {len(hard)} radii")
    return 0


COMMANDS = {
    "dimension": cmd_dimension,
    "sample": cmd_sample,
    "curve": cmd_curve,
    "fractal-curvature": cmd_fractal_curvature,
    "renewal-check": cmd_renewal_check,
    "appendix-check": cmd_appendix_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"fraclk: error: {exc}\n")
        return EXIT_USAGE
    try:
        return COMMANDS[cfg.command](cfg)
    except ModelError as exc:
        sys.stderr.write(f"fraclk: invalid model: {exc}\n")
        return EXIT_MODEL
    except GATE_ERRORS as exc:
        sys.stderr.write(f"fraclk: gate violated: {exc}\n")
        return EXIT_GATE
    except HardAssertion as exc:
        sys.stderr.write(f"fraclk: hard assertion failed: {exc}\n")
        return EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
