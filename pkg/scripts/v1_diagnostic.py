"""Growth of the envelope gradient under an order-eps potential V1(R) = a R."""
import argparse

from cgwe.two_scale import v1_gradient_growth_diagnostic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--amplitudes", type=float, nargs="+", default=[0.0, 0.125, 0.25, 0.5])
    ap.add_argument("--epsilon", type=float, default=1 / 32)
    ap.add_argument("--t1", type=float, default=16.0)
    args = ap.parse_args()

    print(f"{'a':>7} {'slope':>11} {'stderr':>10} {'slope/a':>8} {'growing':>8}")
    for a in args.amplitudes:
        r = v1_gradient_growth_diagnostic(args.epsilon, a, args.t1)
        per = f"{r.slope / a:8.4f}" if a else f"{'-':>8}"
        print(f"{a:7.3f} {r.slope:11.3e} {r.slope_stderr:10.2e} {per} {str(r.growing):>8}")


if __name__ == "__main__":
    main()
