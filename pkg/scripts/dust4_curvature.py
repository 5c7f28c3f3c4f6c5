"""Raster estimate of the area-type fractal curvature of the four-corner dust."""
import argparse
import time
from dataclasses import dataclass

from fraclk import load_model
from fraclk.grid import curves_2d
from fraclk.limits import average_limit, epsilon_grid, rhs_constant


@dataclass
class Config:
    model: str = "dust4"
    k: int = 2
    h: float = 1 / 4096
    min_pixels: int = 64


def run(cfg: Config) -> None:
    model = load_model(cfg.model)
    delta = 64 * cfg.h
    eps = epsilon_grid(1.0, delta)
    t0 = time.perf_counter()
    curve = curves_2d(model, 0, 0, eps, (cfg.k,), h=cfg.h, min_pixels=cfg.min_pixels)[cfg.k]
    avg = average_limit(curve, delta)
    t1 = time.perf_counter()
    rhs = rhs_constant(model, cfg.k, h=cfg.h).value
    print(f"h={cfg.h:g}: average limit {avg:.6f} ({t1 - t0:.1f} s), integral constant "
          f"{rhs:.6f} ({time.perf_counter() - t1:.1f} s), rel diff {abs(avg / rhs - 1):.3%}")
    print(f"chi mismatches against the pixel complex: {curve.meta.get('chi_mismatch', 0)}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=Config.h)
    a = ap.parse_args()
    run(Config(h=a.h))
