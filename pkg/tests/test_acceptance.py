"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion."""
import math
import time

import numpy as np
import pytest

from fraclk import _kernels as K
from fraclk.appendix import large_r_sweep, random_cloud
from fraclk.cli import main
from fraclk.dimension import (Lattice, NonLattice, hausdorff_dimension, lambda_of_D,
                              lattice_analysis, martingale_values)
from fraclk.grid import (GridMask, analytic_disc_field, curves_2d, curvatures_2d, edt,
                         render_cover_2d, sample_for_grid)
from fraclk.intervals import r_correction_curve, leaf_cover_1d, first_ratios
from fraclk.limits import (average_limit, burn_in_top, curves_1d, epsilon_grid, lattice_points,
                           lattice_sequences, m_infinity_regression, rhs_constant)
from fraclk.rifs import Depth, Resolution, load_model, rho, sample_tree


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, elapsed):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail} ({elapsed:.2f} s)")
    return emit


def test_criterion_01_dimension(report):
    cantor, sier = load_model("cantor"), load_model("sierpinski")
    t0 = time.perf_counter()
    Dc, Ds = hausdorff_dimension(cantor), hausdorff_dimension(sier)
    dt = time.perf_counter() - t0
    ec = abs(Dc - math.log(2) / math.log(3))
    es = abs(Ds - math.log(3) / math.log(2))
    ok = ec <= 1e-10 and es <= 1e-10 and dt < 0.1
    report(1, ok, f"|D-ln2/ln3| = {ec:.1e}, |D-ln3/ln2| = {es:.1e}", dt)
    assert ok


def test_criterion_02_spectral(report):
    t0 = time.perf_counter()
    cantor = load_model("cantor")
    err = abs(lambda_of_D(cantor, hausdorff_dimension(cantor)) - math.log(3))
    lat = lattice_analysis(cantor)
    non = lattice_analysis(load_model("random-cantor"))
    ok = (err <= 1e-12 and isinstance(lat, Lattice) and abs(lat.c - math.log(3)) <= 1e-12
          and isinstance(non, NonLattice))
    report(2, ok, f"|lambda-ln3| = {err:.1e}, cantor {lat}, random-cantor {type(non).__name__}",
           time.perf_counter() - t0)
    assert ok


def test_criterion_03_locality(report):
    cantor = load_model("cantor")
    t0 = time.perf_counter()
    lo, hi = 1e-4, 1 / 6 - 1e-6
    tree = sample_tree(cantor, 0, 0, Resolution(lo / 64))
    cover = leaf_cover_1d(tree, cantor)
    r = np.geomspace(lo, hi, 20_000)
    worst = max(float(np.abs(r_correction_curve(cover, first_ratios(tree), rho(cantor), r, k)).max())
                for k in (0, 1))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 5
    report(3, ok, f"max |R_k| on (1e-4, 1/6) over 20000 radii = {worst:.1e}", dt)
    assert ok


def test_criterion_04_cantor_main_cross_check(report):
    cantor = load_model("cantor")
    t0 = time.perf_counter()
    delta = 1e-8
    eps = epsilon_grid(1.0, delta)
    D = hausdorff_dimension(cantor)
    res = {}
    for R in (1.5, 1.6):
        curve = curves_1d(cantor, 0, 0, eps, (1,), R=R, D=D)[1]
        res[R] = (average_limit(curve, delta), rhs_constant(cantor, 1, R=R).value)
    dt = time.perf_counter() - t0
    (a, b), (a2, b2) = res[1.5], res[1.6]
    rel = abs(a / b - 1)
    ra, rb = abs(a2 / a - 1), abs(b2 / b - 1)
    ok = rel <= 5e-3 and ra < 0.01 and rb < 0.01 and dt < 30
    report(4, ok, f"average {a:.6f} vs integral {b:.6f} (rel {rel:.2%}); R=1.6 shifts "
                  f"{ra:.1e}, {rb:.1e}", dt)
    assert ok


def test_criterion_05_lattice_witness(report):
    cantor = load_model("cantor")
    t0 = time.perf_counter()
    c = math.log(3)
    s_grid = [0.1, 0.5, 0.9]
    curve = curves_1d(cantor, 0, 0, lattice_points(c, s_grid, 15), (1,))[1]
    seqs = lattice_sequences(curve, Lattice(c), s_grid, rtol=1e-3)
    lims = [s.limit for s in seqs]
    spread = max(lims) / min(lims) - 1
    ok = all(s.settled for s in seqs) and spread > 5e-3
    report(5, ok, "limits " + ", ".join(f"{v:.5f}" for v in lims) + f", spread {spread:.2%}",
           time.perf_counter() - t0)
    assert ok


def test_criterion_06_martingale(report):
    m = load_model("random-cantor")
    D = hausdorff_dimension(m)
    t0 = time.perf_counter()
    traces = [martingale_values(sample_tree(m, 2026, r, Depth(12)), D) for r in range(2000)]
    v = np.array([t.estimate for t in traces])
    se = v.std(ddof=1) / math.sqrt(len(v))
    unsettled = 1 - np.mean([t.settled for t in traces])
    ok = abs(v.mean() - 1) <= 3 * se and unsettled < 0.05
    report(6, ok, f"mean M_12 = {v.mean():.5f} +- {se:.5f}, unsettled {unsettled:.1%}",
           time.perf_counter() - t0)
    assert ok


def test_criterion_07_regression(report):
    m = load_model("random-cantor")
    t0 = time.perf_counter()
    rhs = rhs_constant(m, 1, 2000, seed=7)
    rep = m_infinity_regression(m, 1, 300, seed=7, delta=1e-6)
    literal = m_infinity_regression(m, 1, 300, seed=7, delta=1e-6, top=1.0)
    dt = time.perf_counter() - t0
    f, c = rep.fit, rep.control
    rhs_ci = (rhs.value - 1.96 * rhs.stderr, rhs.value + 1.96 * rhs.stderr)
    overlap = f.slope_ci[0] <= rhs_ci[1] and rhs_ci[0] <= f.slope_ci[1]
    ok = (abs(f.slope / rhs.value - 1) <= 0.05 and overlap
          and f.intercept_ci[0] <= 0 <= f.intercept_ci[1]
          and c.slope_ci[0] <= 0 <= c.slope_ci[1] and dt < 600)
    report(7, ok, f"slope {f.slope:.4f} CI ({f.slope_ci[0]:.4f}, {f.slope_ci[1]:.4f}) vs "
                  f"integral {rhs.value:.4f} +- {rhs.stderr:.4f}; intercept CI "
                  f"({f.intercept_ci[0]:.4f}, {f.intercept_ci[1]:.4f}); control slope CI "
                  f"({c.slope_ci[0]:.3f}, {c.slope_ci[1]:.3f}); burn-in window from "
                  f"{burn_in_top(epsilon_grid(1.0, 1e-6), 1e-3):.2e} [window from 1: slope "
                  f"{literal.fit.slope:.4f}, intercept CI ({literal.fit.intercept_ci[0]:.3f}, "
                  f"{literal.fit.intercept_ci[1]:.3f})]", dt)
    assert ok


def test_criterion_08_edt(report):
    rng = np.random.default_rng(20261015)
    t0 = time.perf_counter()
    ii, jj = np.mgrid[0:64, 0:64]
    bad = 0
    for _ in range(100):
        bits = rng.random((64, 64)) < rng.uniform(0.001, 0.5)
        bits[rng.integers(64), rng.integers(64)] = True
        sq = edt(GridMask((0.0, 0.0), 1.0, bits)).sq
        fi, fj = np.nonzero(bits)
        oracle = np.min((ii[..., None] - fi) ** 2 + (jj[..., None] - fj) ** 2, axis=-1)
        bad += not np.array_equal(sq, oracle)
    ok = bad == 0
    report(8, ok, f"{100 - bad}/100 masks bitwise equal to brute force", time.perf_counter() - t0)
    assert ok


def test_criterion_09_disc_and_refinement(report):
    t0 = time.perf_counter()
    c = curvatures_2d(analytic_disc_field(50, 1.0), 50.0)
    ep = abs(c.perimeter / (2 * math.pi * 50) - 1)
    ea = abs(c.area / (math.pi * 2500) - 1)
    sier = load_model("sierpinski")
    vals = []
    for h in (1 / 512, 1 / 1024):
        f = edt(render_cover_2d(sample_for_grid(sier, 0, 0, h), sier, h, eps_max=1 / 16))
        vals.append(curvatures_2d(f, 1 / 16).area)
    change = abs(vals[1] / vals[0] - 1)
    ok = ep < 0.01 and ea < 0.01 and c.chi == 1 and change < 0.02
    report(9, ok, f"disc perimeter err {ep:.1e}, area err {ea:.1e}, chi {c.chi}; sierpinski "
                  f"C_2(1/16) {vals[0]:.6f} -> {vals[1]:.6f} ({change:.2%})",
           time.perf_counter() - t0)
    assert ok


def test_criterion_10_dust4(report):
    m = load_model("dust4")
    h = 1 / 4096
    delta = 64 * h
    t0 = time.perf_counter()
    curve = curves_2d(m, 0, 0, epsilon_grid(1.0, delta), (2,), h=h)[2]
    avg = average_limit(curve, delta)
    rhs = rhs_constant(m, 2, h=h).value
    dt = time.perf_counter() - t0
    rel = abs(avg / rhs - 1)
    ok = rel <= 0.05 and dt < 300
    report(10, ok, f"average {avg:.5f} vs integral {rhs:.5f} (rel {rel:.2%}), chi mismatches "
                   f"{curve.meta.get('chi_mismatch', 0)}", dt)
    assert ok


def test_criterion_11_appendix_sweep(report):
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    rows = []
    for _ in range(100):
        sw = large_r_sweep(random_cloud(rng), 1.5, strict=False)
        rows.extend((sw.diam, r) for r in sw.rows)
    chi_ok = all(r.chi == 1 for d, r in rows if r.r >= d)
    bounds_ok = all(r.area_ok and r.perimeter_ok for _, r in rows)
    reach_ok = all(r.reach.passed or r.reach.unreliable for _, r in rows)
    unreliable = np.mean([r.reach.unreliable for _, r in rows])
    slack = min(r.reach.slack for _, r in rows)
    ok = chi_ok and bounds_ok and reach_ok and unreliable < 0.05
    report(11, ok, f"{len(rows)} radii: chi ok {chi_ok}, bounds ok {bounds_ok}, reach ok "
                   f"{reach_ok} (min slack {slack:.3f}), unreliable {unreliable:.1%}",
           time.perf_counter() - t0)
    assert ok


COMMANDS = [
    ["dimension", "random-dust"],
    ["sample", "random-cantor", "--replicates", "4", "--depth", "6"],
    ["curve", "random-cantor", "--eps-min", "1e-3", "--replicates", "4"],
    ["curve", "random-dust", "--h", "0.00390625", "--eps-max", "0.5", "--replicates", "2"],
    ["fractal-curvature", "random-cantor", "--delta", "1e-3", "--replicates", "4"],
    ["renewal-check", "cantor", "--eps-max", "0.5", "--n-max", "8"],
    ["renewal-check", "random-cantor", "--eps-min", "1e-2", "--replicates", "3"],
    ["appendix-check", "--clouds", "3"],
]


def test_criterion_12_determinism(report, tmp_path):
    t0 = time.perf_counter()
    bad = []
    for n, cmd in enumerate(COMMANDS):
        outs = []
        for tag, workers in (("a", 1), ("b", 1), ("c", 8)):
            d = tmp_path / f"{n}{tag}"
            code = main(cmd + ["--seed", "31", "--workers", str(workers), "--out", str(d)])
            files = {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}
            outs.append((code, files))
        if not (outs[0][0] == 0 and outs[0][1] and outs[0] == outs[1] == outs[2]):
            bad.append(cmd[0])
    ok = not bad
    report(12, ok, f"{len(COMMANDS) - len(bad)}/{len(COMMANDS)} commands byte-identical across "
                   f"reruns and 1 vs 8 workers" + (f"; differing: {bad}" if bad else ""),
           time.perf_counter() - t0)
    assert ok
