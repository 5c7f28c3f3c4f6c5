"""Average limits versus the integral constant on the middle-third Cantor set.

Also prints the log-periodic lattice sequences that keep C_1 from converging.
"""
import argparse
import time
from dataclasses import dataclass

from fraclk import load_model
from fraclk.dimension import hausdorff_dimension, lattice_analysis
from fraclk.limits import (average_limit, curves_1d, epsilon_grid, lattice_points,
                           lattice_sequences, rhs_constant)


@dataclass
class Config:
    model: str = "cantor"
    k: int = 1
    delta: float = 1e-8
    Rs: tuple = (1.5, 1.6)
    eta: float = 1 / 64
    s_grid: tuple = (0.1, 0.5, 0.9)
    n_max: int = 15


def run(cfg: Config) -> None:
    model = load_model(cfg.model)
    D = hausdorff_dimension(model)
    eps = epsilon_grid(1.0, cfg.delta)
    for R in cfg.Rs:
        t0 = time.perf_counter()
        curve = curves_1d(model, 0, 0, eps, (cfg.k,), eta=cfg.eta, R=R, D=D)[cfg.k]
        avg = average_limit(curve, cfg.delta)
        rhs = rhs_constant(model, cfg.k, R=R).value
        print(f"R={R}: average limit {avg:.6f}  integral constant {rhs:.6f}  "
              f"rel diff {abs(avg / rhs - 1):.2%}  ({time.perf_counter() - t0:.1f} s)")
    lat = lattice_analysis(model)
    pts = lattice_points(lat.c, cfg.s_grid, cfg.n_max)
    curve = curves_1d(model, 0, 0, pts, (cfg.k,), eta=cfg.eta, D=D)[cfg.k]
    for seq in lattice_sequences(curve, lat, cfg.s_grid):
        print(f"s={seq.s}: limit {seq.limit:.6f} settled={seq.settled}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta", type=float, default=Config.delta)
    ap.add_argument("--k", type=int, default=Config.k)
    a = ap.parse_args()
    run(Config(delta=a.delta, k=a.k))
