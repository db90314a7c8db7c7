"""Two fermions in a 1D harmonic trap: optimized Gaussian-orbital trial energy."""
import argparse

from cgwe.vmc import gaussian_family, gaussian_pair, harmonic_trap, mc_energy, optimize_lambda


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pair-strength", type=float, default=0.0)
    ap.add_argument("--budget", type=int, default=60)
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jastrow", action="store_true")
    args = ap.parse_args()

    pair = gaussian_pair(args.pair_strength, 1.0) if args.pair_strength else None
    ham = harmonic_trap(1.0, 1, pair)
    family = gaussian_family(2, jastrow=args.jastrow)
    lam0, bounds = [0.1, 1.4], [(0.01, 1.0), (0.5, 2.0)]
    if args.jastrow:
        lam0, bounds = lam0 + [0.0], bounds + [(0.0, 1.0)]
    opt = optimize_lambda(family, ham, lam0, bounds, budget=args.budget, n_samples=40_000,
                          seed=args.seed)
    est = mc_energy(family(opt.lam), ham, n_samples=args.samples, seed=args.seed + 1)
    print(f"lambda* = {opt.lam.tolist()} after {opt.evaluations} evaluations")
    print(f"E = {est.value:.6f} +- {est.std_error:.2e} (acceptance {est.acceptance:.2f})")
    if pair is None:
        print("exact ground energy without a pair term: 2.0 (0.5 + 1.5)")

if __name__ == "__main__":
    main()
