"""Print the means-tested pension across wealth for the four household types."""

import numpy as np

from decumulation.economics import PensionPolicy, pension_components


def main():
    policy = PensionPolicy()
    wealth = np.array([0, 100e3, 200e3, 300e3, 400e3, 500e3, 600e3, 700e3, 800e3, 900e3, 1e6])
    drawdown = 0.05 * wealth
    print(f"{'wealth':>10} {'single/own':>11} {'single/rent':>12} {'couple/own':>11} {'couple/rent':>12}")
    cols = []
    for d in (0, 1):
        for owner in (True, False):
            p, _, _ = pension_components(drawdown, wealth, 70, d, owner, 0.0, policy)
            cols.append(p)
    for i, w in enumerate(wealth):
        print(f"{w:10.0f} " + " ".join(f"{c[i]:11.2f}" for c in cols))

    mt = policy.test(0)
    print("\nsingle renter loses the pension at", mt.asset_threshold(False) + mt.full_rate / mt.asset_taper)


if __name__ == "__main__":
    main()
