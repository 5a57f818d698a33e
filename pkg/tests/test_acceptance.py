"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that the terminal summary prints at the
end of the run, then asserts the same condition.
"""

import math
import time

import numpy as np
import pytest

from capilab import experiments as exp, fem, quantities as qty
from capilab.cli import main
from capilab.geometry import DomainSpec, identity_residuals, measures
from capilab.meshgen import build_mesh

from conftest import record

pytestmark = pytest.mark.slow

MESH = (64, 128)
FINE = (128, 256)


def _rel(lhs, rhs):
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs))


def test_c1_rigidity():
    lines, ok = [], True
    for theta in (math.pi / 2, math.pi / 3):
        t0 = time.perf_counter()
        table = exp.rigidity_study(1.0, theta, "planar", exp.DEFAULT_LEVELS, min_order=1.9)
        dt = time.perf_counter() - t0
        last = table.levels[-1]
        orders = [o for m in ("err_f", "err_flux", "err_center") for o in table.orders[m]]
        this = (last.err_f <= 1e-3 and last.err_flux <= 1e-2 and last.err_center <= 1e-2
                and min(orders) >= 1.9 and dt <= 60)
        ok &= this
        lines.append(f"theta={theta:.4f}: err_f {last.err_f:.2e} err_flux {last.err_flux:.2e} "
                     f"err_O {last.err_center:.2e} min order {min(orders):.2f} {dt:.1f}s")
    record("C1", ok, "; ".join(lines))
    assert ok, lines


def test_c2_serrin_identity():
    spec = DomainSpec("planar", 1.0, math.pi / 2, [(2, 0.1)])
    gs = measures(spec)
    c = qty.capillary_constant(spec.theta, gs)
    Rs = (qty.reference_radius(c, gs), 0.5)
    res, lhs, sizes = {R: [] for R in Rs}, {R: [] for R in Rs}, []
    for size in (MESH, FINE):
        f = fem.solve_mixed_bvp(build_mesh(spec, *size), c)
        sizes.append(f.mesh.mean_size)
        for R in Rs:
            l, r, _ = qty.serrin_identity_residual(f, gs, R)
            res[R].append(_rel(l, r))
            lhs[R].append(l)
    ok = all(lhs[Rs[0]][i] == lhs[Rs[1]][i] for i in range(2))
    parts = []
    for R in Rs:
        order = math.log(res[R][0] / res[R][1]) / math.log(sizes[0] / sizes[1])
        ok &= res[R][0] <= 0.05 and res[R][1] < res[R][0] and order >= 1.0
        parts.append(f"R={R:.4f}: {res[R][0]:.2e} -> {res[R][1]:.2e} (order {order:.2f})")
    record("C2", ok, "; ".join(parts) + "; lhs identical across R")
    assert ok, parts


def test_c3_reilly_identity():
    spec = DomainSpec("planar", 1.0, math.pi / 2, [(2, 0.1)])
    gs = measures(spec)
    c = qty.capillary_constant(spec.theta, gs)
    rel = []
    for size in (MESH, FINE):
        f = fem.solve_mixed_bvp(build_mesh(spec, *size), c)
        l, r, _ = qty.reilly_identity_residual(f, gs, spec.theta)
        rel.append(_rel(l, r))
    ok = rel[0] <= 0.05 and rel[1] < rel[0]
    record("C3", ok, f"relative residual {rel[0]:.2e} at 64x128 -> {rel[1]:.2e} at 128x256")
    assert ok


def test_c4_geometric_identities():
    specs = exp.default_family() + exp.default_family(mode="axisymmetric")
    caps = [DomainSpec(m, r, t) for m in ("planar", "axisymmetric")
            for r in (0.7, 1.0, 2.0) for t in (math.pi / 2, math.pi / 3, 0.5)]
    worst = {"conservation": 0.0, "minkowski": 0.0, "balancing": 0.0, "h_reference": 0.0}
    for spec in specs + caps:
        res = identity_residuals(spec)
        for key in ("conservation", "minkowski", "balancing"):
            worst[key] = max(worst[key], abs(res[key]))
        if spec.is_cap:
            worst["h_reference"] = max(worst["h_reference"], abs(res["h_reference"]))
    # minkowski is already normalised by |Sigma|
    ok = (worst["conservation"] <= 1e-10 and worst["minkowski"] <= 1e-8
          and worst["balancing"] <= 1e-8 and worst["h_reference"] <= 1e-8)
    record("C4", ok, f"{len(specs) + len(caps)} domains, worst " +
           " ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok, worst


def test_c5_inequality_suite():
    failures, hk_skipped, tols, strict = [], 0, [], 0
    wanted = {"pfunction_integral", "lower_bound", "c0_bound", "maximum_principle"}
    for spec in exp.default_family():
        gs = measures(spec)
        c = qty.capillary_constant(spec.theta, gs)
        f = fem.solve_mixed_bvp(build_mesh(spec, *MESH), c)
        rep = qty.deficit_report(f, *MESH)
        tol = qty.identity_tolerance(rep)
        tols.append(tol)
        checks = qty.invariant_suite(f, rep, tol)
        names = {ch.name for ch in checks}
        if rep.hk_deficit is None:
            hk_skipped += 1
        else:
            wanted_here = wanted | {"hk_deficit", "hk_margin"}
            if not wanted_here <= names:
                failures.append(f"{qty.perturbation_label(spec)} missing {wanted_here - names}")
        failures += [f"{qty.perturbation_label(spec)}:{ch.name}" for ch in checks if not ch.ok]
        # diagnostic: how many checks would fail with no tolerance at all
        strict += sum(not ch.ok for ch in qty.invariant_suite(f, rep, 0.0))
    ok = not failures
    record("C5", ok, f"12 domains, tol {min(tols):.1e}..{max(tols):.1e}, HK hypothesis (H>0) "
           f"fails on {hk_skipped} domain(s) and is not applied there; failures: {failures or 'none'}; "
           f"failures at tol=0: {strict}")
    assert ok, failures


def _sweep_checks(res):
    live = [r for r in res.rows if not r.skipped]
    zero = live[0]
    rows = live[1:]
    tol = zero.h ** 2
    out = {
        "zero": abs(zero.deficit) <= tol and abs(zero.gap) <= tol,
        "increasing": all(b.deficit > a.deficit and b.gap > a.gap for a, b in zip(live, live[1:])),
        "bridging": all(r.gap <= r.bridging_rhs for r in live),
    }
    ratios = [r.gap / exp.bound_shape(r.deficit, 1) for r in rows]
    out["ratio"] = max(ratios) / min(ratios) <= 1e2
    return out, max(ratios) / min(ratios)


def test_c6_stability_sweeps():
    parts, ok = [], True
    for kind, fn in (("serrin", exp.serrin_stability_sweep), ("cmc", exp.cmc_stability_sweep)):
        res = fn(math.pi / 2, 2, exp.DEFAULT_AMPLITUDES, mesh_size=MESH)
        assert [r.amplitude for r in res.rows] == [0.0, *exp.DEFAULT_AMPLITUDES]
        checks, spread = _sweep_checks(res)
        ok &= all(checks.values())
        parts.append(f"{kind}: ratio spread {spread:.2f}, slope {res.slope:.3f}, "
                     f"zero row gap {res.rows[0].gap:.1e}, "
                     + " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()))
    record("C6", ok, "; ".join(parts))
    assert ok, parts


def test_c7_axisymmetric():
    t0 = time.perf_counter()
    spec = DomainSpec("axisymmetric", 1.0, math.pi / 2)
    lv = exp.rigidity_level(spec, *MESH)
    res = exp.cmc_stability_sweep(math.pi / 3, 2, (0.05, 0.1), mode="axisymmetric", mesh_size=MESH)
    dt = time.perf_counter() - t0
    suites = all(r.suite_passed for r in res.rows)
    ok = lv.err_flux <= 1e-2 and suites and res.passed and dt <= 600
    record("C7", ok, f"half-ball |f_nu - 1/3| {lv.err_flux:.2e}; cmc sweep suites "
           f"{'pass' if suites else 'FAIL'}, slope {res.slope:.3f} (guaranteed exponent 1/3); {dt:.1f}s")
    assert ok


def test_c8_determinism(tmp_path):
    runs = {
        "check": ["check", "--perturbation", "3:0.05", "--theta", "1.0472", "--mesh", "32x64"],
        "sweep-serrin": ["sweep-serrin", "--amps", "0.05,0.1", "--mesh", "32x64"],
        "sweep-hk": ["sweep-hk", "--k", "4", "--amps", "0.1,0.2", "--mesh", "24x48", "--threads", "2"],
        "rigidity": ["rigidity", "--levels", "8x16,16x32", "--theta", "1.0472"],
    }
    mismatched, codes = [], {}
    for name, args in runs.items():
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / name / rep
            codes.setdefault(name, []).append(main(args + ["--out", str(out)]))
            outs.append(out)
        files = sorted(p.name for p in outs[0].iterdir())
        assert files == sorted(p.name for p in outs[1].iterdir())
        mismatched += [f"{name}/{fn}" for fn in files
                       if (outs[0] / fn).read_bytes() != (outs[1] / fn).read_bytes()]
    ok = not mismatched and all(c[0] == c[1] for c in codes.values())
    record("C8", ok, f"{len(runs)} CLI configs run twice; mismatched files: {mismatched or 'none'}")
    assert ok, mismatched
