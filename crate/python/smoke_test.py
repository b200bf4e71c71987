"""Smoke test for the relboltz_py extension module.

Build and install first, e.g. ``maturin build --release -m crates/py/Cargo.toml``
followed by ``pip install target/wheels/relboltz_py-*.whl``.
Optionally pass the path of a ``.rbsm`` file produced by ``relboltz assemble``.
"""

import math
import sys

import relboltz_py as rb


def check_moments():
    m = rb.moments()
    assert abs(m["p0"] - m["bessel_p0"]) <= 1e-8 * m["bessel_p0"], m
    assert abs(m["p2"] - m["bessel_p2"]) <= 1e-8 * m["bessel_p2"], m
    assert m["a"] > 0 and m["b"] > 0
    assert abs(m["sound_speed"] - math.hypot(m["a"], m["b"])) < 1e-14
    return m


def check_fit():
    t = [100.0 * 100.0 ** (i / 19) for i in range(20)]
    y = [3.0 * (1 + s) ** -0.75 for s in t]
    slope, intercept, ci = rb.fit_rate(t, y, (100.0, 1e4))
    assert abs(slope + 0.75) < 1e-10 and abs(intercept - math.log(3.0)) < 1e-9 and ci < 1e-8
    try:
        rb.fit_rate(t[:3], y[:3], (100.0, 1e4))
    except ValueError:
        pass
    else:
        raise AssertionError("short series accepted")


def check_spectrum():
    s = rb.spectrum(n_radial=3, l_max=2, samples=5000, k_points=6)
    assert s["muhat"] > 0 and s["tau0"] > 0
    assert len(s["kgrid"]) == 6 and len(s["branches"]) == 6
    assert all(abs(re) < 1e-8 and abs(im) < 1e-8 for re, im in s["branches"][0])
    for row in s["branches"][1:]:
        assert all(re < 0 for re, _ in row)
        assert abs(row[3][0] - row[4][0]) < 1e-8 and abs(row[3][1] - row[4][1]) < 1e-8
    return s


def check_container(path):
    dim, kind, seed, kernel, data = rb.read_matrix(path)
    width = 2 if kind == "complex" else 1
    assert len(data) == width * dim * dim
    if kind == "real":
        assert all(data[i * dim + j] == data[j * dim + i] for i in range(dim) for j in range(dim))
    print(f"{path}: {kind} {dim}x{dim}, seed {seed}, kernel {kernel}")


def main():
    m = check_moments()
    check_fit()
    s = check_spectrum()
    for path in sys.argv[1:]:
        check_container(path)
    print(f"relboltz_py {rb.__version__}: p0 {m['p0']:.6f}, sound speed {m['sound_speed']:.6f}, "
          f"small model muhat {s['muhat']:.3f}, tau0 {s['tau0']:.3f}")
    print("smoke test passed")


if __name__ == "__main__":
    main()
