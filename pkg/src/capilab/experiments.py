"""Refinement studies and stability sweeps.

Every row of a sweep solves one perturbed domain, evaluates the full
:func:`capilab.quantities.invariant_suite` and records the deficit together
with ``rho_e - rho_i``.  Rows are independent and may run on a thread pool
(size capped by the ``CAPILAB_THREADS`` environment variable); results are
merged in amplitude order, so outputs do not depend on scheduling.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fem, quantities as qty
from .geometry import DomainSpec, Mode, measures
from .meshgen import build_mesh

log = logging.getLogger(__name__)

DEFAULT_LEVELS = ((8, 16), (16, 32), (32, 64), (64, 128))
DEFAULT_MESH = (64, 128)
DEFAULT_KS = (2, 3, 4)
DEFAULT_AMPLITUDES = (0.02, 0.05, 0.1, 0.2)
GATE = 0.01
MIN_ORDER = 1.5
RATIO_SPREAD = 1e2
NOISE_FLOOR = 1e-12


def worker_count(jobs: int) -> int:
    """Thread count: CAPILAB_THREADS if set, else the CPU count, never above ``jobs``."""
    env = os.environ.get("CAPILAB_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, jobs))


def observed_orders(h, err):
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}); NaN where an error is below the noise floor."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    out = np.full(len(h) - 1, np.nan)
    ok = (err[:-1] > NOISE_FLOOR) & (err[1:] > NOISE_FLOOR)
    out[ok] = np.log(err[:-1][ok] / err[1:][ok]) / np.log(h[:-1][ok] / h[1:][ok])
    return out


def bound_shape(D: float, n: int) -> float:
    """D^(1/(n+1)) for n >= 2; D^(1/2) max(log(D^(-1/2)), 1) for n = 1."""
    if D <= 0:
        return 0.0
    if n >= 2:
        return D ** (1.0 / (n + 1))
    return math.sqrt(D) * max(math.log(D ** -0.5), 1.0)


# ---------------------------------------------------------------------------
# rigidity

@dataclass
class RigidityLevel:
    n_radial: int
    n_angular: int
    h: float
    mean_size: float
    err_f: float
    err_flux: float
    err_center: float
    serrin_deficit: float
    cg_iterations: int


@dataclass
class RigidityTable:
    spec: dict
    levels: list
    orders: dict
    passed: bool
    failures: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "study": "rigidity",
            "spec": self.spec,
            "levels": [asdict(lv) for lv in self.levels],
            "orders": {k: [None if math.isnan(v) else v for v in vs] for k, vs in self.orders.items()},
            "passed": self.passed,
            "failures": self.failures,
        }


RIGIDITY_METRICS = ("err_f", "err_flux", "err_center", "serrin_deficit")


def rigidity_level(spec: DomainSpec, n_radial: int, n_angular: int) -> RigidityLevel:
    gs = measures(spec)
    c = qty.capillary_constant(spec.theta, gs)
    mesh = build_mesh(spec, n_radial, n_angular)
    f = fem.solve_mixed_bvp(mesh, c)
    z = spec.cap_center
    nodes = f.space.nodes
    exact = (np.sum((nodes - z) ** 2, axis=1) - spec.r ** 2) / (2 * (spec.n + 1))
    err_f = float(np.max(np.abs(f.coeffs - exact)) / np.max(np.abs(exact)))
    err_flux = float(np.max(np.abs(fem.boundary_flux(f).values - spec.r / (spec.n + 1))))
    O = qty.center(mesh, f)
    return RigidityLevel(n_radial, n_angular, mesh.h, mesh.mean_size, err_f, err_flux,
                         float(np.linalg.norm(O - z)), qty.serrin_deficit(f, gs), f.cg_iterations)


def rigidity_study(r: float = 1.0, theta: float = math.pi / 2, mode="planar",
                   levels=DEFAULT_LEVELS, min_order: float = MIN_ORDER) -> RigidityTable:
    """Convergence of an unperturbed cap towards the closed-form quadratic.

    Per level: relative L-infinity error of f, L-infinity error of the flux
    against r/(n+1), distance of the centre from the cap centre and the
    Serrin deficit.  Observed orders use :attr:`Mesh.mean_size` between
    consecutive levels; the study fails if any of them (errors above the
    noise floor) is below ``min_order``.
    """
    spec = DomainSpec(mode, r, theta)
    rows = [rigidity_level(spec, nr, na) for nr, na in levels]
    h = [lv.mean_size for lv in rows]
    orders = {m: observed_orders(h, [getattr(lv, m) for lv in rows]).tolist() for m in RIGIDITY_METRICS}
    failures = [f"{m} order {o:.3f} < {min_order}" for m, os_ in orders.items()
                for o in os_ if not math.isnan(o) and o < min_order]
    return RigidityTable(spec.to_dict(), rows, orders, not failures, failures)


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepRow:
    amplitude: float
    spec: dict
    h: float
    c: float
    deficit: float
    rho_e: float
    rho_i: float
    gap: float
    bound_shape: float
    ratio: float | None
    bridging_rhs: float
    serrin_rel_residual: float | None
    reilly_rel_residual: float | None
    gated: bool
    tol: float
    suite_passed: bool
    failed_checks: list
    skipped: bool = False
    note: str = ""
    report: dict | None = None


@dataclass
class SweepResult:
    kind: str
    mode: str
    theta: float
    k: int
    rows: list
    slope: float | None
    intercept: float | None
    ratio_spread: float | None
    checks: dict
    passed: bool

    def summary(self) -> dict:
        return {
            "study": f"sweep-{self.kind}",
            "mode": self.mode, "theta": self.theta, "k": self.k,
            "slope": self.slope, "intercept": self.intercept,
            "ratio_spread": self.ratio_spread,
            "checks": self.checks, "passed": self.passed,
            "rows": [{k: v for k, v in asdict(r).items() if k != "report"} for r in self.rows],
        }


def _rel(lhs, rhs):
    if lhs is None:
        return None
    scale = max(abs(lhs), abs(rhs))
    return abs(lhs - rhs) / scale if scale > 0 else 0.0


def _sweep_row(kind, spec, a, c_fixed, mesh_size, tol=None, gate=GATE):
    gs = measures(spec)
    c_theta = qty.capillary_constant(spec.theta, gs)
    c = c_fixed if kind == "serrin" else c_theta
    mesh = build_mesh(spec, *mesh_size)
    f = fem.solve_mixed_bvp(mesh, c)
    rep = qty.deficit_report(f, *mesh_size)
    note = rep.notes
    if kind == "serrin":
        D = rep.serrin_deficit
    elif kind == "cmc":
        D = rep.cmc_deficit
    else:
        D = rep.hk_deficit
    tol = qty.identity_tolerance(rep) if tol is None else tol
    checks = qty.invariant_suite(f, rep, tol)
    failed = [ch.name for ch in checks if not ch.ok]
    O = np.array([rep.O_x, rep.O_y])
    gap = rep.rho_e - rep.rho_i
    shape = bound_shape(D, spec.n) if D is not None else 0.0
    s_rel = _rel(rep.serrin_lhs, rep.serrin_rhs)
    r_rel = _rel(rep.reilly_lhs, rep.reilly_rhs)
    gated = a > 0 and s_rel <= gate and (r_rel is None or r_rel <= gate)
    return SweepRow(
        amplitude=a, spec=spec.to_dict(), h=mesh.h, c=c, deficit=D,
        rho_e=rep.rho_e, rho_i=rep.rho_i, gap=gap, bound_shape=shape,
        ratio=gap / shape if shape > 0 else None,
        bridging_rhs=qty.bridging_bound(f, gs, O),
        serrin_rel_residual=s_rel, reilly_rel_residual=r_rel, gated=gated, tol=tol,
        suite_passed=not failed, failed_checks=failed, note=note, report=asdict(rep),
    )


def _skipped_row(spec, a, note):
    return SweepRow(amplitude=a, spec=spec.to_dict(), h=float("nan"), c=float("nan"), deficit=None,
                    rho_e=float("nan"), rho_i=float("nan"), gap=float("nan"), bound_shape=float("nan"),
                    ratio=None, bridging_rhs=float("nan"), serrin_rel_residual=None,
                    reilly_rel_residual=None, gated=False, tol=float("nan"), suite_passed=True,
                    failed_checks=[], skipped=True, note=note)


def run_sweep(kind: str, theta: float, k: int, amplitudes=DEFAULT_AMPLITUDES, mode="planar",
              r: float = 1.0, c: float | None = None, mesh_size=DEFAULT_MESH,
              include_zero: bool = True, threads: int | None = None,
              tol: float | None = None, gate: float = GATE) -> SweepResult:
    """Shared driver for the three sweeps (``kind`` in serrin, cmc, hk).

    ``tol`` overrides the per-row inequality tolerance (default: 10 x the
    row's identity residual); ``gate`` is the relative identity residual a
    row must stay below to enter the fit.
    """
    if kind not in ("serrin", "cmc", "hk"):
        raise ValueError(f"unknown sweep kind {kind!r}")
    amps = sorted(set(([0.0] if include_zero else []) + [float(a) for a in amplitudes]))
    cap = DomainSpec(mode, r, theta)
    c_fixed = qty.capillary_constant(cap.theta, measures(cap)) if c is None else float(c)
    if kind == "serrin" and c_fixed > 0:
        raise ValueError(f"serrin sweep needs c <= 0, got {c_fixed}")
    specs = [DomainSpec(mode, r, theta, [(k, a)]) for a in amps]

    def job(i):
        spec, a = specs[i], amps[i]
        if kind == "hk":
            try:
                qty.hk_deficit(spec)
            except qty.HypothesisError as exc:
                return _skipped_row(spec, a, f"skipped: {exc}")
        return _sweep_row(kind, spec, a, c_fixed, tuple(mesh_size), tol, gate)

    nthreads = threads or worker_count(len(amps))
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            rows = list(pool.map(job, range(len(amps))))
    else:
        rows = [job(i) for i in range(len(amps))]
    return _finish(kind, mode, cap.theta, k, rows, cap)


def _increasing(vals):
    return bool(all(b > a for a, b in zip(vals, vals[1:])))


def _finish(kind, mode, theta, k, rows, cap):
    live = [r for r in rows if not r.skipped]
    n = cap.n
    checks = {"suites": all(r.suite_passed for r in live)}
    zero = [r for r in live if r.amplitude == 0.0]
    if zero:
        z = zero[0]
        mesh_tol = z.h ** 2
        checks["zero_deficit"] = bool(abs(z.deficit) <= mesh_tol)
        checks["zero_gap"] = bool(abs(z.gap) <= mesh_tol)
    checks["deficit_increasing"] = _increasing([r.deficit for r in live])
    checks["gap_increasing"] = _increasing([r.gap for r in live])
    checks["bridging"] = all(r.gap <= r.bridging_rhs for r in live)
    fit = [r for r in live if r.gated and r.deficit > 0 and r.gap > 0]
    slope = intercept = spread = None
    if len(fit) >= 2:
        x = np.log([r.deficit for r in fit])
        y = np.log([r.gap for r in fit])
        slope, intercept = (float(v) for v in np.polyfit(x, y, 1))
    ratios = [r.ratio for r in fit if r.ratio]
    if ratios:
        spread = float(max(ratios) / min(ratios))
        checks["ratio_spread"] = bool(spread <= RATIO_SPREAD)
    if kind == "hk":
        checks.pop("gap_increasing")
        checks.pop("deficit_increasing")
    checks["gate"] = all(r.gated for r in live if r.amplitude > 0)
    passed = all(checks.values())
    return SweepResult(kind, Mode(mode).value, theta, k, rows, slope, intercept, spread, checks, passed)


def serrin_stability_sweep(theta, k, amplitudes=DEFAULT_AMPLITUDES, c=None, **kw) -> SweepResult:
    """Serrin deficit vs rho_e - rho_i with c fixed (default: c(theta) of the cap)."""
    return run_sweep("serrin", theta, k, amplitudes, c=c, **kw)


def cmc_stability_sweep(theta, k, amplitudes=DEFAULT_AMPLITUDES, **kw) -> SweepResult:
    """Mean-curvature deficit vs rho_e - rho_i; the centre comes from the c(theta, Omega) field."""
    return run_sweep("cmc", theta, k, amplitudes, **kw)


def hk_sweep(theta, k, amplitudes=DEFAULT_AMPLITUDES, **kw) -> SweepResult:
    """Heintze-Karcher deficit, refined margin and rho_e - rho_i.

    Rows whose boundary has H <= 0 somewhere are skipped with a note.  The
    monotonicity of eps in the amplitude is reported in the rows but not
    asserted.
    """
    return run_sweep("hk", theta, k, amplitudes, **kw)


def default_family(theta: float = math.pi / 2, ks=DEFAULT_KS, amplitudes=DEFAULT_AMPLITUDES,
                   mode="planar", r: float = 1.0):
    """The 12 single-mode windowed domains used by the inequality suite."""
    return [DomainSpec(mode, r, theta, [(k, a)]) for k in ks for a in amplitudes]


# ---------------------------------------------------------------------------
# output

SWEEP_COLUMNS = (
    "amplitude", "h", "c", "deficit", "rho_e", "rho_i", "gap", "bound_shape", "ratio",
    "bridging_rhs", "serrin_rel_residual", "reilly_rel_residual", "gated", "tol",
    "suite_passed", "skipped", "note",
)
RIGIDITY_COLUMNS = ("n_radial", "n_angular", "h", "mean_size", "err_f", "err_flux", "err_center",
                    "serrin_deficit", "cg_iterations")


def _clean(obj):
    """JSON-safe copy: NaN and inf become None."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2) + "\n")


def write_csv(path, columns, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in records:
            w.writerow([qty.fmt(rec[c]) for c in columns])


def write_sweep(result: SweepResult, outdir, plot: bool = False) -> dict:
    """CSV of the rows plus summary JSON (and an SVG log-log plot if asked)."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"sweep_{result.kind}"
    paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}_summary.json"}
    write_csv(paths["csv"], SWEEP_COLUMNS, [asdict(r) for r in result.rows])
    write_json(paths["json"], result.summary())
    if plot:
        paths["svg"] = out / f"{stem}.svg"
        plot_sweep(result, paths["svg"])
    return paths


def write_rigidity(table: RigidityTable, outdir) -> dict:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "rigidity.csv", "json": out / "rigidity_summary.json"}
    write_csv(paths["csv"], RIGIDITY_COLUMNS, [asdict(lv) for lv in table.levels])
    write_json(paths["json"], table.summary())
    return paths


def plot_sweep(result: SweepResult, path) -> None:
    """Static log-log plot of rho_e - rho_i against the deficit (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "capilab"
    rows = [r for r in result.rows if not r.skipped and r.deficit and r.deficit > 0 and r.gap > 0]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog([r.deficit for r in rows], [r.gap for r in rows], "o-", label="rows")
    if result.slope is not None:
        x = np.array([rows[0].deficit, rows[-1].deficit])
        ax.loglog(x, np.exp(result.intercept) * x ** result.slope, "--",
                  label=f"fit, slope {result.slope:.3f}")
    ax.set_xlabel(f"{result.kind} deficit")
    ax.set_ylabel("rho_e - rho_i")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
