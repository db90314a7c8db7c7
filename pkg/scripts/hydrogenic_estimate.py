"""Hydrogenic inverse-mass estimate and the K-matrix spectrum for N particles."""
import argparse

import numpy as np

from cgwe.effective_mass import hydrogenic_chi_scalar, k_matrix_and_spectrum


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-particles", type=int, default=10)
    ap.add_argument("--n-max", type=int, default=2, help="highest p level kept in the sum")
    args = ap.parse_args()

    chi = hydrogenic_chi_scalar(args.n_max)
    km = k_matrix_and_spectrum(args.n_particles, float(chi))
    print(f"chi~   = {chi} = {float(chi):.10f} hbar^2/m")
    print(f"mu~    = {km.mu_mean_field:.6f} hbar^2/m")
    print(f"m_eff  = {km.m_eff:.6f} m")
    print(f"{'l':>4} {'d (orthogonal)':>16} {'d (closed form)':>16}")
    for ell, (a, b) in enumerate(zip(np.sort(km.d)[::-1], km.closed_form_d), start=1):
        print(f"{ell:4d} {a:16.6f} {b:16.6f}")


if __name__ == "__main__":
    main()
