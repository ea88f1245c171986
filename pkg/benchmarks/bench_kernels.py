#!/usr/bin/env python3
"""Timings for the hot assembly kernels: pure numpy vs the compiled extension.

Two sections: the kernels in isolation on synthetic face arrays, and full
residual/Jacobian assembly on a uniformly refined mesh with each backend
patched in. Outputs are checked bit for bit against each other (both
backends are built to identical floating-point semantics).

Usage: python3 benchmarks/bench_kernels.py [--faces N] [--repeats R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

import stflow.assembly as assembly
import stflow.mesh as M
import stflow.physics as physics
from stflow._kernels import pure

try:
    from stflow._kernels import _core as compiled
except ImportError:
    compiled = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def synthetic_inputs(n_el, n_f, seed=0):
    rng = np.random.default_rng(seed)
    f_left = rng.integers(0, n_el, n_f)
    f_right = rng.integers(0, n_el, n_f)
    u = rng.standard_normal((2, n_f))
    pos = lambda shape: rng.uniform(0.5, 2.0, shape)
    jac_in = (
        pos(n_f), rng.standard_normal(n_f), rng.standard_normal(n_f),
        pos(n_f), pos(n_f), pos(n_f) * 1e-4, pos(n_f) * 1e-4,
        pos(n_f), pos(n_f), pos(n_f),
        pos(n_f), pos(n_f), pos(n_f) * 1e-4, pos(n_f) * 1e-4,
        pos(n_f), pos(n_f), pos(n_f),
        rng.standard_normal(n_f), rng.standard_normal(n_f),
        3.0, 0.3,
    )
    return f_left, f_right, u, jac_in


def bench_scatter(impl, f_left, f_right, u, n_el, repeats):
    def run():
        r_tot = np.zeros(n_el)
        r_wat = np.zeros(n_el)
        impl.face_scatter_residual(f_left, f_right, u[1], u[0], r_tot, r_wat)
        return r_tot, r_wat

    t = timeit(run, repeats)
    return t, run()


def bench_jacobian(impl, jac_in, n_f, repeats):
    def run():
        out = np.zeros((n_f, 38))
        impl.face_jacobian_values(*jac_in, out)
        return out

    t = timeit(run, repeats)
    return t, run()


def bench_full_assembly(repeats):
    """Residual + Jacobian on a 16x16 grid refined uniformly 2+2 levels."""
    grid = M.CoarseGrid(16, 16, 10.0, 10.0, 10.0)
    mesh = M.build_uniform_finest(grid, 2, 2)
    fluid = physics.FluidProps(
        rho_ref=(64.0, 53.0), p_ref=(1000.0, 1000.0),
        c_f=(3.0e-6, 1.0e-4), mu=(0.3, 3.0),
    )
    bc = physics.BrooksCoreyParams(
        s_wirr=0.2, s_or=0.2, krw0=1.0, kro0=1.0, n_w=2.0, n_o=2.0,
    )
    rng = np.random.default_rng(1)
    shapes = [(16 << l, 16 << l) for l in range(3)]
    rock = physics.RockField(
        kx=[rng.uniform(50.0, 200.0, sh) for sh in shapes],
        ky=[rng.uniform(50.0, 200.0, sh) for sh in shapes],
        phi=[np.full(sh, 0.2) for sh in shapes],
    )
    model = physics.FluidRockModel(fluid, bc, rock)
    wells = (
        assembly.Well("injector", 5.0, 5.0, rate=1.0),
        assembly.Well("producer", 155.0, 155.0, p_bhp=900.0),
    )
    p0 = np.full((16, 16), 1000.0)
    s0 = np.full((16, 16), 0.2)
    plan = assembly.AssemblyPlan(mesh, model, wells, p0, s0)
    x = np.concatenate([
        p0.ravel()[0] + rng.uniform(-5.0, 5.0, plan.n_el),
        np.clip(0.2 + rng.uniform(0.0, 0.4, plan.n_el), 0.0, 1.0),
        rng.standard_normal(2 * plan.n_f),
    ])

    results = {}
    backends = [("pure", pure)] + ([("compiled", compiled)] if compiled else [])
    for name, impl in backends:
        assembly.face_scatter_residual = impl.face_scatter_residual
        assembly.face_jacobian_values = impl.face_jacobian_values
        t_r = timeit(lambda: assembly.assemble_residual(plan, x), repeats)
        t_j = timeit(lambda: assembly.assemble_jacobian(plan, x), repeats)
        jac = assembly.assemble_jacobian(plan, x)[1]
        jac.sort_indices()
        results[name] = (t_r, t_j, assembly.assemble_residual(plan, x), jac)
    return plan, results


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--faces", type=int, default=200_000)
    ap.add_argument("--elements", type=int, default=50_000)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    print(f"compiled extension available: {compiled is not None}")
    f_left, f_right, u, jac_in = synthetic_inputs(args.elements, args.faces)

    print(f"\n-- kernels in isolation ({args.faces} faces, best of {args.repeats}) --")
    t_sc_p, out_p = bench_scatter(pure, f_left, f_right, u, args.elements, args.repeats)
    print(f"face_scatter_residual  pure      {t_sc_p * 1e3:9.3f} ms")
    if compiled:
        t_sc_c, out_c = bench_scatter(compiled, f_left, f_right, u, args.elements, args.repeats)
        same = all(np.array_equal(a, b) for a, b in zip(out_p, out_c))
        print(f"face_scatter_residual  compiled  {t_sc_c * 1e3:9.3f} ms  "
              f"x{t_sc_p / t_sc_c:.2f}  bit-identical={same}")

    t_j_p, jac_p = bench_jacobian(pure, jac_in, args.faces, args.repeats)
    print(f"face_jacobian_values   pure      {t_j_p * 1e3:9.3f} ms")
    if compiled:
        t_j_c, jac_c = bench_jacobian(compiled, jac_in, args.faces, args.repeats)
        same = np.array_equal(jac_p, jac_c)
        print(f"face_jacobian_values   compiled  {t_j_c * 1e3:9.3f} ms  "
              f"x{t_j_p / t_j_c:.2f}  bit-identical={same}")

    print(f"\n-- full assembly, 16x16 grid at 2+2 uniform levels (best of {args.repeats}) --")
    plan, results = bench_full_assembly(args.repeats)
    print(f"mesh: {plan.n_el} elements, {plan.n_f} subfaces, {plan.n_dof} unknowns")
    for name, (t_r, t_j, _, _) in results.items():
        print(f"{name:9s} residual {t_r * 1e3:9.3f} ms   jacobian {t_j * 1e3:9.3f} ms")
    if "compiled" in results:
        rp, jp = results["pure"][2], results["pure"][3]
        rc, jc = results["compiled"][2], results["compiled"][3]
        jac_same = (
            np.array_equal(jp.indptr, jc.indptr)
            and np.array_equal(jp.indices, jc.indices)
            and np.array_equal(jp.data, jc.data)
        )
        print(f"residual bit-identical: {np.array_equal(rp, rc)}, "
              f"jacobian bit-identical: {jac_same}")
        print(f"assembly speedup: residual x{results['pure'][0] / results['compiled'][0]:.2f}, "
              f"jacobian x{results['pure'][1] / results['compiled'][1]:.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
