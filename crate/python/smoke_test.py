#!/usr/bin/env python3
"""Smoke test for the dsii_py extension module.

Build and stage the module first:

    cargo build --release -p dsii-py
    cp target/release/libdsii_py.so python/dsii_py.so

then run `python3 python/smoke_test.py`. Sizes are kept small; this checks
that the bindings are wired, not numerical limits (the Rust test suites do
that).
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import dsii_py as d


def close(a, b, tol, label):
    err = abs(a - b)
    assert err <= tol, f"{label}: |{a} - {b}| = {err:.3e} > {tol:.1e}"
    print(f"  ok {label}: err {err:.3e}")


def main():
    grid = d.Grid(8.0, 32)
    assert grid.n == 32 and abs(grid.spacing - 0.5) < 1e-15
    a = 0.1
    q0 = d.gaussian(grid, a)
    # nodes sit at cell centers, so the peak is half a spacing off origin
    peak = a * math.exp(-2 * (grid.spacing / 2) ** 2)
    assert abs(q0.max_abs() - peak) < 1e-12

    # forward data: the off-diagonal channel near k = 0 is ~ a/(4 pi)
    kgrid = d.Grid(8.0, 32)
    data = d.forward(q0, kgrid, disk=None)
    ho = data.diag_offdiag()
    nodes = kgrid.nodes()
    best_i = min(
        range(kgrid.n * kgrid.n),
        key=lambda i: nodes[2 * i] ** 2 + nodes[2 * i + 1] ** 2,
    )
    k2 = nodes[2 * best_i] ** 2 + nodes[2 * best_i + 1] ** 2
    born = a / (4 * math.pi) * math.exp(-k2 / 4)
    close(ho[2 * best_i], born, 3e-4, "Born-level data at the innermost node")

    # time evolution leaves the modulus of diagonal samples alone
    data_t = d.evolve(data, 0.4)
    ho_t = data_t.diag_offdiag()
    drift = max(
        abs(math.hypot(ho[2 * i], ho[2 * i + 1]) - math.hypot(ho_t[2 * i], ho_t[2 * i + 1]))
        for i in range(kgrid.n * kgrid.n)
    )
    close(drift, 0.0, 1e-14, "evolution preserves diagonal-sample modulus")
    assert abs(data_t.time - 0.4) < 1e-15

    # round trip at a few points
    pts, want = [], []
    for r, th in [(0.0, 0.0), (0.7, 1.1), (1.3, 2.9)]:
        pts += [r * math.cos(th), r * math.sin(th)]
        want.append(a * math.exp(-(r * r)))
    got = d.invert_at(data, pts, use_disk=False)
    for j, w in enumerate(want):
        close(got[2 * j], w, 2e-3, f"round-trip q at probe {j}")
        close(got[2 * j + 1], 0.0, 2e-3, f"round-trip q imag at probe {j}")

    # full-grid inversion and the gauge field
    q_rec, phi, flagged = d.invert(data, grid, use_disk=False)
    assert not flagged
    close(q_rec.rel_l2(q0), 0.0, 5e-3, "full-grid round-trip rel-L2")
    phi_oracle = d.phi_from_q(q_rec)
    close(phi.rel_l2(phi_oracle), 0.0, 0.35, "gauge field against the oracle")

    # split-step oracle conserves the L2 norm
    qT = d.simulate_final(q0, 0.05, 1e-3)
    close(qT.l2_norm(), q0.l2_norm(), 1e-10, "split-step L2 conservation")

    print("smoke test passed")


if __name__ == "__main__":
    main()
