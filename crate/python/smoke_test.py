"""Smoke test for the levylab extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math

import levylab


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    close(levylab.covariance("brownian", 0.3, 0.7), 0.3, 1e-15)
    assert levylab.canonical_kernel("bm") == "kind=brownian"

    for t in (0.5, 1.0, 2.0):
        value, bound = levylab.cf(t)
        close(value.real, 1 / math.cosh(t), 1e-4)
        assert bound < 1e-4

    norm = levylab.norm_diff(3, 4)
    close(norm["value"], 2.0 ** -5, 1e-12)
    close(levylab.norm_diff(3, 4, exact=True)["value"], 2.0 ** -5, 1e-12)
    rows, slope = levylab.cauchy_table([1, 2, 3, 4])
    assert len(rows) == 3
    close(slope, -1.0, 1e-9)

    top = levylab.classical_grid_spectrum(64)[:2]
    for alpha, mult in top:
        close(abs(alpha), 1 / math.pi, 0.01)
        assert mult == 2

    samples = levylab.simulate(4000, 6, seed=1)
    assert len(samples) == 4000
    var = sum(a * a for a in samples) / len(samples)
    close(var, 1 - 2.0 ** -6, 0.1)
    (phi,) = levylab.empirical_cf(samples, [1.0])
    close(phi.real, 1 / math.cosh(1.0), 0.05)

    assert levylab.v1p([(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)], 1.0) == 3.0
    assert levylab.existence_check_fbm(0.3, 0.3)
    assert not levylab.existence_check_fbm(0.2, 0.2)
    _, verdict = levylab.variation_profile("kind=fbm hurst=0.35", 1 / 0.7, 8)
    assert verdict in ("stabilizing", "growing", "inconclusive")

    try:
        levylab.covariance("kind=fbm", 0.1, 0.2)
    except ValueError:
        pass
    else:
        raise AssertionError("missing hurst accepted")

    failed = [row for row in levylab.self_check() if row[2] != "pass"]
    assert not failed, failed
    print(f"levylab {levylab.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
