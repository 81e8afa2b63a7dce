"""Monte Carlo oracles for the semi-analytic energies and cell-kernel means.

Run ``python tests/oracles/monte_carlo.py`` to regenerate ``goldens.json``.
The estimators use only numpy sampling and the raw kernels, sharing no code
with the package.
"""

import json
import math
from pathlib import Path

import numpy as np

N = 4_000_000
SEED = 20240611


def uniform_ball(rng, n, dim, center, r_in, r_out):
    """Uniform points in the annulus r_in < |x - center| <= r_out."""
    out = np.empty((0, dim))
    while out.shape[0] < n:
        x = rng.uniform(-r_out, r_out, size=(2 * n, dim))
        d = np.linalg.norm(x, axis=1)
        x = x[(d <= r_out) & (d > r_in)]
        out = np.vstack([out, x])
    return out[:n] + np.asarray(center, float)


def vol(dim, r_in, r_out):
    w = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)
    return w * (r_out ** dim - r_in ** dim)


def mc_pair(rng, dim, a, b, kernel):
    """int_A int_B kernel(|x - y|) for uniform unit-height pieces ``(center, r_in, r_out)``."""
    x = uniform_ball(rng, N, dim, *a)
    y = uniform_ball(rng, N, dim, *b)
    vals = kernel(np.linalg.norm(x - y, axis=1))
    scale = vol(dim, a[1], a[2]) * vol(dim, b[1], b[2])
    return scale * float(vals.mean()), scale * float(vals.std() / math.sqrt(N))


def tent(rng, n, dim):
    return rng.uniform(-0.5, 0.5, size=(n, dim)) - rng.uniform(-0.5, 0.5, size=(n, dim))


def mc_cell(rng, dim, m, kernel):
    z = tent(rng, N, dim) + np.asarray(m, float)
    vals = kernel(np.linalg.norm(z, axis=1))
    return float(vals.mean()), float(vals.std() / math.sqrt(N))


def newton(r):
    return 1.0 / (4 * math.pi * r)


def main():
    rng = np.random.default_rng(SEED)
    g = {}
    o3 = (0.0, 0.0, 0.0)
    g["ball_self_newtonian"] = mc_pair(rng, 3, (o3, 0.0, 1.0), (o3, 0.0, 1.0), newton)
    g["ball_cross_d3_newtonian"] = mc_pair(rng, 3, (o3, 0.0, 1.0), ((3.0, 0, 0), 0.0, 1.0), newton)
    g["ball_cross_d1_newtonian"] = mc_pair(rng, 3, (o3, 0.0, 1.0), ((1.0, 0, 0), 0.0, 1.0), newton)
    g["annulus_ball_offcentre_newtonian"] = mc_pair(rng, 3, (o3, 0.4, 1.0), ((0.5, 0, 0), 0.0, 0.3),
                                                    newton)
    g["annulus_self_newtonian"] = mc_pair(rng, 3, (o3, 0.4, 1.0), (o3, 0.4, 1.0), newton)
    g["annulus_self_log_2d"] = mc_pair(rng, 2, ((0.0, 0.0), 0.5, 1.0), ((0.0, 0.0), 0.5, 1.0),
                                       lambda r: -np.log(r))
    g["interval_pair_k05"] = mc_pair(rng, 1, ((0.0,), 0.0, 1.0), ((0.5,), 0.0, 0.25),
                                     lambda r: -r ** 0.5 / 0.5)
    g["cell_log_2d_m00"] = mc_cell(rng, 2, (0, 0), lambda r: -np.log(r))
    g["cell_log_2d_m10"] = mc_cell(rng, 2, (1, 0), lambda r: -np.log(r))
    g["cell_newton_3d_m000"] = mc_cell(rng, 3, (0, 0, 0), newton)
    g["cell_newton_3d_m110"] = mc_cell(rng, 3, (1, 1, 0), newton)
    g["cell_k1_1d_m0"] = mc_cell(rng, 1, (0,), lambda r: -r)
    out = {k: {"value": v, "stderr": s} for k, (v, s) in g.items()}
    path = Path(__file__).with_name("goldens.json")
    path.write_text(json.dumps({"seed": SEED, "samples": N, "goldens": out}, indent=2, sort_keys=True)
                    + "\n")
    for k, d in out.items():
        print(f"{k}: {d['value']:.8f} +- {d['stderr']:.2e}")


if __name__ == "__main__":
    main()
