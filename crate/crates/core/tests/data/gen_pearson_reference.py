"""Regenerates pearson_reference.json: 100 random 50-point pairs with
correlation and two-sided p-value computed at 60 significant digits."""

import json
import random

import mpmath

mpmath.mp.dps = 60


def reference(x, y):
    n = len(x)
    xs = [mpmath.mpf(v) for v in x]
    ys = [mpmath.mpf(v) for v in y]
    mx = mpmath.fsum(xs) / n
    my = mpmath.fsum(ys) / n
    sxy = mpmath.fsum((a - mx) * (b - my) for a, b in zip(xs, ys))
    sxx = mpmath.fsum((a - mx) ** 2 for a in xs)
    syy = mpmath.fsum((b - my) ** 2 for b in ys)
    rho = sxy / mpmath.sqrt(sxx * syy)
    df = n - 2
    p = mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, 1 - rho**2, regularized=True)
    return float(rho), float(p)


def main():
    rng = random.Random(20240611)
    cases = []
    for k in range(100):
        coupling = rng.uniform(-0.8, 0.8)
        x = [rng.gauss(0.0, 1.0) for _ in range(50)]
        y = [coupling * a + rng.gauss(0.0, 1.0) for a in x]
        rho, p = reference(x, y)
        cases.append({"x": x, "y": y, "rho": rho, "p": p})
    with open("pearson_reference.json", "w") as f:
        json.dump({"cases": cases}, f)


if __name__ == "__main__":
    main()
