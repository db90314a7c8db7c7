"""Long-time-average projection residuals on random Hermitian models."""
import argparse

import numpy as np

from cgwe.model_core import diagonalize, expectation, long_time_average, random_hermitian


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--models", type=int, default=10)
    ap.add_argument("--t-factor", type=float, default=1e4, help="T = t_factor / gap")
    ap.add_argument("--eta-factor", type=float, default=1e-3, help="eta = eta_factor * gap")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'model':>5} {'gap':>10} {'res(T)':>10} {'res(2T)':>10} {'ratio':>7}")
    for i, sq in enumerate(np.random.SeedSequence(args.seed).spawn(args.models)):
        rng = np.random.default_rng(sq)
        h0, omega = random_hermitian(args.dim, rng), random_hermitian(args.dim, rng)
        s = diagonalize(h0)
        target = s.ground * expectation(s.ground, omega)
        T, eta = args.t_factor / s.gap, args.eta_factor * s.gap
        r1 = np.linalg.norm(long_time_average(s, omega, T, eta) - target)
        r2 = np.linalg.norm(long_time_average(s, omega, 2 * T, eta) - target)
        print(f"{i:5d} {s.gap:10.4f} {r1:10.3e} {r2:10.3e} {r2 / r1:7.4f}")


if __name__ == "__main__":
    main()
